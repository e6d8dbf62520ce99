use nalgebra::{DMatrix, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use viswf::eval::{
    chi_square_bounds, estimate_error, nees, summarize, summary_csv, EstimateError, MetricSeries, Nees,
    SummaryRow, TrialMetrics, CSV_HEADER,
};
use viswf::state::{ImuState, Parameterization, UnobservableDirection, Vector15};
use viswf::{ExtendedPose, Rotation};

fn g() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

fn truth(param: Parameterization) -> ImuState {
    ImuState::new(
        param,
        ExtendedPose::new(
            Rotation::exp(&Vector3::new(0.3, -0.2, 1.1)),
            Vector3::new(0.5, 0.1, -0.2),
            Vector3::new(3.0, -1.0, 0.5),
        ),
        Vector6::new(0.01, 0.0, -0.01, 0.1, 0.05, 0.0),
    )
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[test]
fn nees_of_truth_is_zero() {
    let t = truth(Parameterization::Grouped);
    let cov = DMatrix::<f64>::identity(15, 15) * 0.3;
    let n = nees(&t, &cov, &t, &g()).unwrap();
    assert!(n.total < 1e-20 && n.yaw < 1e-20 && n.position < 1e-20, "{n:?}");
}

#[test]
fn nees_with_identity_covariance_is_squared_norm() {
    for param in [Parameterization::Separate, Parameterization::Grouped] {
        let t = truth(param);
        let mut d = Vector15::zeros();
        d[4] = 1.5;
        d[10] = -0.5; // 2.25 + 0.25
        let est = t.oplus(&d);
        let n = nees(&est, &DMatrix::identity(15, 15), &t, &g()).unwrap();
        assert!((n.total - 2.5).abs() < 1e-12, "{param:?}: {}", n.total);
    }
}

#[test]
fn nees_rejects_indefinite_covariance() {
    let t = truth(Parameterization::Grouped);
    let mut cov = DMatrix::<f64>::identity(15, 15);
    cov[(7, 7)] = -1.0;
    assert!(nees(&t, &cov, &t, &g()).is_err());
}

#[test]
fn average_nees_of_consistent_samples_is_the_dof() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let a = DMatrix::from_fn(15, 15, |_, _| rng.random_range(-0.1..0.1));
    let cov = &a * a.transpose() + DMatrix::identity(15, 15) * 1e-3;
    let l = cov.clone().cholesky().unwrap().l();
    let t = truth(Parameterization::Grouped);
    let m = 4000;
    let mut avg = Nees::default();
    for _ in 0..m {
        let z = nalgebra::DVector::from_fn(15, |_, _| normal(&mut rng));
        let e = &l * z;
        let est = t.oplus(&Vector15::from_column_slice(e.as_slice()));
        let n = nees(&est, &cov, &t, &g()).unwrap();
        avg.total += n.total / m as f64;
        avg.yaw += n.yaw / m as f64;
        avg.position += n.position / m as f64;
    }
    // Three standard deviations of the mean of m chi-square(k) draws.
    for (v, k) in [(avg.total, 15.0), (avg.yaw, 1.0), (avg.position, 3.0)] {
        let sd = (2.0 * k / m as f64).sqrt();
        assert!((v - k).abs() < 3.0 * sd, "{v} vs {k}");
    }
}

#[test]
fn chi_square_bounds_match_sampled_quantiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (dof, trials) in [(1usize, 20usize), (3, 5)] {
        let (lo, hi, expected) = chi_square_bounds(dof, 0.997, trials);
        assert_eq!(expected, dof as f64);
        let n = 1_000_000;
        let mut avgs: Vec<f64> = (0..n)
            .map(|_| (0..dof * trials).map(|_| normal(&mut rng).powi(2)).sum::<f64>() / trials as f64)
            .collect();
        avgs.sort_by(f64::total_cmp);
        let q = |p: f64| avgs[((p * n as f64) as usize).min(n - 1)];
        let (elo, ehi) = (q(0.0015), q(0.9985));
        assert!((lo - elo).abs() / lo < 0.01, "lower {lo} vs {elo}");
        assert!((hi - ehi).abs() / hi < 0.01, "upper {hi} vs {ehi}");
    }
}

#[test]
fn bounds_bracket_the_expectation_and_tighten_with_trials() {
    for dof in [1, 3, 15] {
        let (lo1, hi1, e) = chi_square_bounds(dof, 0.997, 1);
        let (lo100, hi100, _) = chi_square_bounds(dof, 0.997, 100);
        assert!(lo1 < lo100 && lo100 < e && e < hi100 && hi100 < hi1);
    }
}

#[test]
fn yaw_error_recovers_a_pure_gravity_axis_rotation() {
    let t = truth(Parameterization::Grouped);
    for phi in [1e-4, -3e-3, 0.02] {
        let tau = UnobservableDirection {
            phi,
            translation: Vector3::new(1.0, -2.0, 0.5),
        };
        let moved = t.transform_unobservable(&tau, &g());
        let e = estimate_error(&moved, &t, &g()).unwrap();
        // `T` rotates by `φ‖g‖` about the gravity axis.
        assert!((e.yaw - phi * g().norm()).abs() < 1e-9, "{} vs {}", e.yaw, phi * g().norm());
    }
}

fn series(values: &[(f64, f64, f64)], trials: usize) -> MetricSeries {
    MetricSeries {
        stamps: (0..values.len()).map(|k| k as f64).collect(),
        nees: values
            .iter()
            .map(|&(total, yaw, position)| Nees { total, yaw, position })
            .collect(),
        rmse: vec![EstimateError::default(); values.len()],
        trials,
    }
}

#[test]
fn consistent_row_is_marked_yes() {
    let row = SummaryRow::new("only", &series(&[(15.0, 1.0, 3.0); 4], 20), Some(true));
    assert!(row.consistent);
    assert!(summarize(&[row]).lines().nth(1).unwrap().trim_end().ends_with("Yes"));
}

#[test]
fn inconsistent_yaw_is_marked_no() {
    let row = SummaryRow::new("bad", &series(&[(15.0, 40.0, 3.0); 4], 20), None);
    assert!(!row.consistent);
}

#[test]
fn summary_keeps_the_given_row_order() {
    let rows: Vec<SummaryRow> = ["c", "a", "b"]
        .iter()
        .map(|l| SummaryRow::new(*l, &series(&[(15.0, 1.0, 3.0)], 20), None))
        .collect();
    let csv = summary_csv(&rows);
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["c", "a", "b"]);
    let table = summarize(&rows);
    let order: Vec<usize> = ["c ", "a ", "b "].iter().map(|l| table.find(&format!("\n{l}")).unwrap()).collect();
    assert!(order.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn trials_aggregate_to_mean_nees_and_rms_error() {
    let mk = |n: f64, e: f64| TrialMetrics {
        stamps: vec![0.0, 0.1],
        nees: vec![Nees { total: n, yaw: n, position: n }; 2],
        errors: vec![EstimateError { total: e, yaw: e.to_radians(), position: e }; 2],
    };
    let s = MetricSeries::from_trials(&[mk(1.0, 3.0), mk(3.0, 4.0)]).unwrap();
    assert_eq!(s.trials, 2);
    assert!((s.nees[1].total - 2.0).abs() < 1e-12);
    let rms = (12.5f64).sqrt();
    assert!((s.rmse[0].total - rms).abs() < 1e-12);
    assert!((s.rmse[0].yaw - rms).abs() < 1e-9);
    assert!(s.to_csv().starts_with(CSV_HEADER));
    assert_eq!(s.to_csv().lines().count(), 3);

    let mut short = mk(1.0, 1.0);
    short.stamps.pop();
    assert!(MetricSeries::from_trials(&[mk(1.0, 1.0), short]).is_err());
}

//! NEES, RMSE, chi-square bounds and Table-style summaries.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::state::ImuState;

/// NEES of one estimate, split the way it is reported.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Nees {
    pub total: f64,
    pub yaw: f64,
    pub position: f64,
}

/// Errors of one estimate against truth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimateError {
    /// Norm of the 15-dimensional difference (mixed units).
    pub total: f64,
    /// Rotation error about the gravity axis, radians.
    pub yaw: f64,
    /// Euclidean position error, metres.
    pub position: f64,
}

/// `eᵀΣ⁻¹e` for `e = eta(estimate, truth)`, together with the yaw (gravity
/// axis component of the rotation error) and position-block values.
pub fn nees(estimate: &ImuState, cov: &DMatrix<f64>, truth: &ImuState, gravity: &Vector3<f64>) -> Result<Nees> {
    let e = estimate.eta(truth)?;
    let ch = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let ev = nalgebra::DVector::from_column_slice(e.as_slice());
    let total = ev.dot(&ch.solve(&ev));

    let u = gravity / gravity.norm();
    let rot_cov: Matrix3<f64> = cov.fixed_view::<3, 3>(0, 0).into_owned();
    let yaw_err = u.dot(&e.fixed_rows::<3>(0));
    let yaw_var = u.dot(&(rot_cov * u));
    if yaw_var <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }

    let pos_cov: Matrix3<f64> = cov.fixed_view::<3, 3>(6, 6).into_owned();
    let pos_err: Vector3<f64> = e.fixed_rows::<3>(6).into_owned();
    let pos_ch = pos_cov.cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(Nees {
        total,
        yaw: yaw_err * yaw_err / yaw_var,
        position: pos_err.dot(&pos_ch.solve(&pos_err)),
    })
}

pub fn estimate_error(estimate: &ImuState, truth: &ImuState, gravity: &Vector3<f64>) -> Result<EstimateError> {
    let e = estimate.eta(truth)?;
    let u = gravity / gravity.norm();
    Ok(EstimateError {
        total: e.norm(),
        yaw: u.dot(&e.fixed_rows::<3>(0)),
        position: (estimate.position() - truth.position()).norm(),
    })
}

/// Per-stamp metrics averaged over trials. RMSE columns are root-mean-square
/// over trials at each stamp; NEES columns are plain means.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricSeries {
    pub stamps: Vec<f64>,
    pub nees: Vec<Nees>,
    /// `total`, `yaw` (degrees), `position` (metres)
    pub rmse: Vec<EstimateError>,
    pub trials: usize,
}

/// One trial's per-stamp values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialMetrics {
    pub stamps: Vec<f64>,
    pub nees: Vec<Nees>,
    pub errors: Vec<EstimateError>,
}

impl MetricSeries {
    /// Aggregates trials; stamps must match across trials.
    pub fn from_trials(trials: &[TrialMetrics]) -> Result<Self> {
        let Some(first) = trials.first() else {
            return Ok(Self::default());
        };
        let n = first.stamps.len();
        if trials.iter().any(|t| t.stamps != first.stamps || t.nees.len() != n || t.errors.len() != n) {
            return Err(Error::LayoutMismatch("trial stamps differ".into()));
        }
        let m = trials.len() as f64;
        let mut nees = vec![Nees::default(); n];
        let mut rmse = vec![EstimateError::default(); n];
        for t in trials {
            for k in 0..n {
                nees[k].total += t.nees[k].total / m;
                nees[k].yaw += t.nees[k].yaw / m;
                nees[k].position += t.nees[k].position / m;
                let e = &t.errors[k];
                rmse[k].total += e.total * e.total / m;
                rmse[k].yaw += e.yaw.to_degrees().powi(2) / m;
                rmse[k].position += e.position * e.position / m;
            }
        }
        for r in &mut rmse {
            r.total = r.total.sqrt();
            r.yaw = r.yaw.sqrt();
            r.position = r.position.sqrt();
        }
        Ok(Self {
            stamps: first.stamps.clone(),
            nees,
            rmse,
            trials: trials.len(),
        })
    }

    /// Time averages of every column.
    pub fn averages(&self) -> (Nees, EstimateError) {
        let n = self.stamps.len().max(1) as f64;
        let mut a = Nees::default();
        let mut r = EstimateError::default();
        for (x, e) in self.nees.iter().zip(&self.rmse) {
            a.total += x.total / n;
            a.yaw += x.yaw / n;
            a.position += x.position / n;
            r.total += e.total / n;
            r.yaw += e.yaw / n;
            r.position += e.position / n;
        }
        (a, r)
    }

    pub fn to_csv(&self) -> String {
        metrics_csv(&self.stamps, &self.nees, &self.rmse, true)
    }
}

impl TrialMetrics {
    /// Same columns as the aggregate; RMSE columns hold this trial's error
    /// magnitudes.
    pub fn to_csv(&self) -> String {
        metrics_csv(&self.stamps, &self.nees, &self.errors, false)
    }
}

pub const CSV_HEADER: &str = "t,nees_total,nees_yaw,nees_pos,rmse_total,rmse_yaw_deg,rmse_pos_m";

fn metrics_csv(stamps: &[f64], nees: &[Nees], errs: &[EstimateError], yaw_in_degrees: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for ((t, n), e) in stamps.iter().zip(nees).zip(errs) {
        let yaw = if yaw_in_degrees { e.yaw } else { e.yaw.to_degrees().abs() };
        writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            t, n.total, n.yaw, n.position, e.total, yaw, e.position
        )
        .unwrap();
    }
    out
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`: power series below
/// `x < a + 1`, Lentz continued fraction for `Q = 1 − P` above.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let prefix = (-x + a * x.ln() - ln_gamma(a)).exp();
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (sum * prefix).min(1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - prefix * h).max(0.0)
    }
}

pub fn chi_square_cdf(x: f64, dof: f64) -> f64 {
    regularized_gamma_p(0.5 * dof, 0.5 * x)
}

/// Inverse of [`chi_square_cdf`] by bisection.
pub fn chi_square_quantile(p: f64, dof: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, dof.max(1.0));
    while chi_square_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided bounds on the average NEES of `trials` i.i.d. χ²(`dof`) values.
/// Returns `(lower, upper, expected)`.
pub fn chi_square_bounds(dof: usize, confidence: f64, trials: usize) -> (f64, f64, f64) {
    let n = (dof * trials) as f64;
    let tail = 0.5 * (1.0 - confidence);
    let m = trials as f64;
    (
        chi_square_quantile(tail, n) / m,
        chi_square_quantile(1.0 - tail, n) / m,
        dof as f64,
    )
}

pub const DEFAULT_CONFIDENCE: f64 = 0.997;

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    /// Same-point null-space check result, if audited.
    pub r1: Option<bool>,
    pub rmse: EstimateError,
    pub nees: Nees,
    pub trials: usize,
    pub consistent: bool,
}

impl SummaryRow {
    pub fn new(label: impl Into<String>, series: &MetricSeries, r1: Option<bool>) -> Self {
        let (nees, rmse) = series.averages();
        let within = |v: f64, dof: usize| {
            let (lo, hi, _) = chi_square_bounds(dof, DEFAULT_CONFIDENCE, series.trials.max(1));
            v >= lo && v <= hi
        };
        Self {
            label: label.into(),
            r1,
            rmse,
            nees,
            trials: series.trials,
            consistent: within(nees.total, 15) && within(nees.yaw, 1) && within(nees.position, 3),
        }
    }
}

/// Rows in the given order as an aligned text table.
pub fn summarize(rows: &[SummaryRow]) -> String {
    let yes_no = |b: bool| if b { "Yes" } else { "No" };
    let mut out = String::new();
    writeln!(
        out,
        "{:<28} {:>4} {:>10} {:>10} {:>10} {:>11} {:>9} {:>9} {:>10}",
        "config", "R1", "rmse_tot", "rmse_yaw°", "rmse_pos", "nees_tot", "nees_yaw", "nees_pos", "consistent"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<28} {:>4} {:>10.3} {:>10.3} {:>10.3} {:>11.2} {:>9.2} {:>9.2} {:>10}",
            r.label,
            r.r1.map(yes_no).unwrap_or("-"),
            r.rmse.total,
            r.rmse.yaw,
            r.rmse.position,
            r.nees.total,
            r.nees.yaw,
            r.nees.position,
            yes_no(r.consistent)
        )
        .unwrap();
    }
    if let Some(t) = rows.first().map(|r| r.trials) {
        let (lo1, hi1, _) = chi_square_bounds(1, DEFAULT_CONFIDENCE, t.max(1));
        let (lo3, hi3, _) = chi_square_bounds(3, DEFAULT_CONFIDENCE, t.max(1));
        let (lo15, hi15, _) = chi_square_bounds(15, DEFAULT_CONFIDENCE, t.max(1));
        writeln!(
            out,
            "99.7% average-NEES bounds over {t} trials: total [{lo15:.2}, {hi15:.2}], yaw [{lo1:.2}, {hi1:.2}], position [{lo3:.2}, {hi3:.2}]"
        )
        .unwrap();
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "config,r1,rmse_total,rmse_yaw_deg,rmse_pos_m,nees_total,nees_yaw,nees_pos,trials,consistent\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
            r.label,
            r.r1.map(|b| if b { "pass" } else { "fail" }).unwrap_or(""),
            r.rmse.total,
            r.rmse.yaw,
            r.rmse.position,
            r.nees.total,
            r.nees.yaw,
            r.nees.position,
            r.trials,
            r.consistent
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_matches_known_values() {
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn chi_square_quantiles_match_tables() {
        // Standard table values.
        assert!((chi_square_quantile(0.95, 1.0) - 3.841_458_820_694_124).abs() < 1e-8);
        assert!((chi_square_quantile(0.99, 10.0) - 23.209_251_158_954_36).abs() < 1e-8);
        assert!((chi_square_quantile(0.05, 3.0) - 0.351_846_317_749_271_1).abs() < 1e-8);
    }

    #[test]
    fn expected_is_dof() {
        assert_eq!(chi_square_bounds(15, 0.997, 20).2, 15.0);
        assert_eq!(chi_square_bounds(3, 0.997, 20).2, 3.0);
    }
}

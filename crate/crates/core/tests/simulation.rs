use viswf::imu::{propagate_recursive, NoiseParams};
use viswf::linalg::min_eigenvalue;
use viswf::sim::{
    corrupt, generate_truth, run_estimator, run_monte_carlo, run_trial, simulate, EstimatorConfig, ScenarioConfig,
};
use viswf::state::Vector15;
use viswf::vision::{project, to_camera_frame};

fn short(duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        duration,
        ..ScenarioConfig::default()
    }
}

#[test]
fn truth_satisfies_the_process_model() {
    let c = short(10.0);
    let d = generate_truth(&c);
    assert_eq!(d.stamps.len(), c.frames());
    assert_eq!(d.imu.len(), (c.frames() - 1) * c.imu_per_frame());
    for k in 0..d.stamps.len() - 1 {
        let p = propagate_recursive(&d.truth[k], d.interval(k), &c.gravity).unwrap();
        assert!(p.eta(&d.truth[k + 1]).unwrap().amax() < 1e-9, "frame {k}");
    }
}

#[test]
fn noise_free_measurements_are_exact_projections() {
    let c = short(10.0);
    let d = generate_truth(&c);
    let mut total = 0;
    for (k, frame) in d.visual.iter().enumerate() {
        for m in frame {
            let cam = d.rig.camera(m.camera);
            let r = to_camera_frame(&d.landmarks[m.landmark.0 as usize], &d.truth[k], &cam.extrinsics);
            assert!(r.z > c.min_depth);
            assert_eq!(project(&r).unwrap(), m.y);
            assert!(cam.in_image(&cam.to_pixels(&m.y)));
            assert_eq!(m.state.0 as usize, k);
        }
        total += frame.len();
    }
    // The default scene keeps a healthy number of landmarks in view.
    assert!(total as f64 / d.visual.len() as f64 > 8.0);
}

#[test]
fn zero_noise_corruption_is_the_identity() {
    let d = generate_truth(&short(5.0));
    assert_eq!(corrupt(&d, &NoiseParams::zero(), 7), d);
}

#[test]
fn gyro_noise_has_the_configured_density() {
    let mut c = short(60.0);
    let sigma = 0.01;
    c.noise = NoiseParams::isotropic(sigma, 0.0, 0.0, 0.0, 0.0);
    let d = generate_truth(&c);
    let noisy = corrupt(&d, &c.noise, 3);
    let diffs: Vec<f64> = noisy
        .imu
        .iter()
        .zip(&d.imu)
        .flat_map(|(a, b)| (a.gyro - b.gyro).iter().copied().collect::<Vec<_>>())
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let expected = sigma / c.imu_dt().sqrt();
    assert!((sd / expected - 1.0).abs() < 0.02, "{sd} vs {expected}");
    // Accelerometer and pixels untouched.
    assert!(noisy.imu.iter().zip(&d.imu).all(|(a, b)| a.accel == b.accel));
    assert_eq!(noisy.visual, d.visual);
}

#[test]
fn bias_walk_variance_grows_linearly() {
    let mut c = short(10.0);
    let sigma_w = 0.01;
    c.noise = NoiseParams::isotropic(0.0, 0.0, sigma_w, 0.0, 0.0);
    let d = generate_truth(&c);
    let runs = 300;
    let mut var = 0.0;
    for seed in 0..runs {
        let b = corrupt(&d, &c.noise, seed).truth.last().unwrap().bias;
        var += b.fixed_rows::<3>(0).norm_squared() / (3 * runs) as f64;
    }
    let expected = sigma_w * sigma_w * c.duration;
    // ~900 squared normals: 3σ of the relative error is about 14%.
    assert!((var / expected - 1.0).abs() < 0.15, "{var} vs {expected}");
}

#[test]
fn simulation_is_deterministic_in_the_seed() {
    let c = short(3.0);
    assert_eq!(simulate(&c, 5), simulate(&c, 5));
    assert_ne!(simulate(&c, 5).imu, simulate(&c, 6).imu);
}

#[test]
fn every_estimator_reproduces_truth_from_noise_free_data() {
    // Long enough to marginalize several states.
    let c = short(2.0);
    let d = corrupt(&generate_truth(&c), &NoiseParams::zero(), 0);
    for est in EstimatorConfig::all() {
        let r = run_estimator(&c, &est, &d, &Vector15::zeros()).unwrap();
        assert!(r.stats.marginalizations > 0);
        for (x, t) in r.estimates.iter().zip(&r.truth) {
            assert!(x.eta(t).unwrap().amax() < 1e-9, "{}", est.label());
        }
    }
}

#[test]
fn covariances_stay_positive_definite() {
    let c = short(3.0);
    for est in EstimatorConfig::all() {
        let r = run_trial(&c, &est, 4).unwrap();
        for p in &r.covariances {
            assert!(min_eigenvalue(p) > 0.0, "{}", est.label());
        }
        for n in r.metrics(&c.gravity).unwrap().nees {
            assert!(n.total.is_finite() && n.total >= 0.0);
        }
    }
}

#[test]
fn single_trial_monte_carlo_equals_the_trial() {
    let mut c = short(2.0);
    c.mc_trials = 1;
    c.seed = 17;
    let est = EstimatorConfig::all()[4];
    let mc = run_monte_carlo(&c, &est);
    assert!(mc.failures.is_empty());
    assert_eq!(mc.trials.len(), 1);
    assert_eq!(mc.trials[0].1, run_trial(&c, &est, 17).unwrap());
}

#[test]
fn monte_carlo_does_not_depend_on_scheduling() {
    let mut c = short(1.0);
    c.mc_trials = 3;
    let est = EstimatorConfig::all()[0];
    let a = run_monte_carlo(&c, &est).series(&c.gravity).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| run_monte_carlo(&c, &est)).series(&c.gravity).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

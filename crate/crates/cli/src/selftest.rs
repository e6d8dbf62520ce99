//! Fast invariant checks: Lie round trips, analytic Jacobians against
//! central differences, and agreement between the integration paths.

use std::fmt;

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viswf::imu::{
    direct_error, preint_error, process_jacobian, propagate_one_step, propagate_recursive, rmi_integrate,
    rmi_predicted, NoiseParams,
};
use viswf::lie::{se23, so3, Se23};
use viswf::sim::{generate_truth, ScenarioConfig};
use viswf::state::{landmark_to_world, CameraSide, ImuState, Landmark, LandmarkId, Parameterization, StateId, Vector15};
use viswf::vision::{project, to_camera_frame, visual_error, CameraRig, VisualMeasurement};
use viswf::{ExtendedPose, Rotation};

const POINTS: usize = 100;
const H: f64 = 1e-6;
const JACOBIAN_TOL: f64 = 1e-5;
const ROUNDTRIP_TOL: f64 = 1e-9;
const PARAMS: [Parameterization; 2] = [Parameterization::Separate, Parameterization::Grouped];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
        }
    }

    /// NaN fails.
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<40} {:.3e} (tol {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

/// Max-abs difference between `analytic` and central differences of
/// `f` around zero, relative to the larger of 1 and the Jacobian's scale.
pub fn jacobian_error(analytic: &DMatrix<f64>, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> f64 {
    let n = analytic.ncols();
    let mut fd = DMatrix::zeros(analytic.nrows(), n);
    for k in 0..n {
        let mut d = DVector::zeros(n);
        d[k] = H;
        fd.set_column(k, &((f(&d) - f(&-&d)) / (2.0 * H)));
    }
    (analytic - fd).amax() / analytic.amax().max(1.0)
}

/// Runs a named Jacobian check over `POINTS` cases produced by `case`,
/// which returns the analytic Jacobian and the function it differentiates.
pub fn jacobian_check<F>(name: &str, seed: u64, mut case: impl FnMut(&mut ChaCha8Rng) -> (DMatrix<f64>, F)) -> Check
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worst = (0..POINTS)
        .map(|_| {
            let (j, f) = case(&mut rng);
            jacobian_error(&j, f)
        })
        .fold(0.0, f64::max);
    Check::new(name, worst, JACOBIAN_TOL)
}

fn vec3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-s..s))
}

fn random_state(rng: &mut ChaCha8Rng, param: Parameterization) -> ImuState {
    let pose = ExtendedPose::new(Rotation::exp(&vec3(rng, 2.0)), vec3(rng, 3.0), vec3(rng, 5.0));
    let (b, a) = (vec3(rng, 0.05), vec3(rng, 0.2));
    ImuState::new(param, pose, Vector6::new(b.x, b.y, b.z, a.x, a.y, a.z))
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<viswf::imu::ImuMeasurement> {
    (0..n)
        .map(|k| viswf::imu::ImuMeasurement {
            gyro: vec3(rng, 1.0),
            accel: vec3(rng, 3.0) + Vector3::new(0.0, 0.0, 9.81),
            stamp: k as f64 * 0.01,
            dt: 0.01,
        })
        .collect()
}

fn dm<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

fn dv<const R: usize>(v: &nalgebra::SVector<f64, R>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn v15(d: &DVector<f64>) -> Vector15 {
    Vector15::from_column_slice(d.as_slice())
}

fn roundtrips() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut so3_err: f64 = 0.0;
    let mut se23_err: f64 = 0.0;
    for _ in 0..1000 {
        let phi = vec3(&mut rng, 1.7);
        let c = Rotation::exp(&phi);
        so3_err = so3_err.max((Rotation::exp(&c.log()).matrix() - c.matrix()).amax());
        let xi = nalgebra::SVector::<f64, 9>::from_fn(|i, _| if i < 3 { phi[i] } else { rng.random_range(-5.0..5.0) });
        let x = Se23::exp(&xi);
        se23_err = se23_err.max((Se23::exp(&x.log()).to_matrix() - x.to_matrix()).amax());
    }
    vec![
        Check::new("so3 exp/log round trip", so3_err, ROUNDTRIP_TOL),
        Check::new("se23 exp/log round trip", se23_err, ROUNDTRIP_TOL),
    ]
}

fn lie_jacobians() -> Vec<Check> {
    vec![
        jacobian_check("so3 left jacobian", 12, |rng| {
            let phi = vec3(rng, 1.5);
            let c = Rotation::exp(&phi);
            (dm(&so3::left_jacobian(&phi)), move |d: &DVector<f64>| {
                let p = phi + Vector3::from_column_slice(d.as_slice());
                dv(&(Rotation::exp(&p) * c.inverse()).log())
            })
        }),
        jacobian_check("se23 left jacobian", 13, |rng| {
            let xi = nalgebra::SVector::<f64, 9>::from_fn(|i, _| rng.random_range(-1.0..1.0) * if i < 3 { 1.5 } else { 3.0 });
            let x = Se23::exp(&xi);
            (dm(&se23::left_jacobian(&xi)), move |d: &DVector<f64>| {
                let p = xi + nalgebra::SVector::<f64, 9>::from_column_slice(d.as_slice());
                dv(&Se23::exp(&p).compose(&x.inverse()).log())
            })
        }),
    ]
}

fn imu_jacobians() -> Vec<Check> {
    let g = Vector3::new(0.0, 0.0, -9.81);
    let noise = NoiseParams::isotropic(0.01, 0.01, 0.001, 0.001, 1.0);
    let mut out = Vec::new();
    for (k, param) in PARAMS.into_iter().enumerate() {
        let tag = param.name();
        out.push(jacobian_check(&format!("process jacobian ({tag})"), 20 + k as u64, |rng| {
            let x = random_state(rng, param);
            let u = random_samples(rng, 1)[0];
            let dt = rng.random_range(0.001..0.05);
            let next = propagate_one_step(&x, &u, dt, &g).unwrap();
            (dm(&process_jacobian(&x, &u, dt, &g)), move |d: &DVector<f64>| {
                dv(&propagate_one_step(&x.oplus(&v15(d)), &u, dt, &g).unwrap().eta(&next).unwrap())
            })
        }));
        out.push(jacobian_check(&format!("direct error jacobian ({tag})"), 30 + k as u64, |rng| {
            let x_i = random_state(rng, param);
            let seq = random_samples(rng, 8);
            let x_j = propagate_recursive(&x_i, &seq, &g)
                .unwrap()
                .oplus(&Vector15::from_fn(|_, _| rng.random_range(-0.3..0.3)));
            let r = direct_error(&x_i, &x_j, &seq, &g, &noise, false).unwrap();
            let mut j = DMatrix::zeros(15, 30);
            j.view_mut((0, 0), (15, 15)).copy_from(&r.jac_i);
            j.view_mut((0, 15), (15, 15)).copy_from(&r.jac_j);
            (j, move |d: &DVector<f64>| {
                let a = x_i.oplus(&Vector15::from_column_slice(&d.as_slice()[..15]));
                let b = x_j.oplus(&Vector15::from_column_slice(&d.as_slice()[15..]));
                dv(&direct_error(&a, &b, &seq, &g, &noise, false).unwrap().value)
            })
        }));
        // Bias columns of the first state are a first-order model of
        // re-integration and are exercised by the test suite instead.
        out.push(jacobian_check(&format!("preintegrated error jacobian ({tag})"), 40 + k as u64, |rng| {
            let x_i = random_state(rng, param);
            let seq = random_samples(rng, 8);
            let x_j = propagate_recursive(&x_i, &seq, &g)
                .unwrap()
                .oplus(&Vector15::from_fn(|_, _| rng.random_range(-0.3..0.3)));
            let rmi = rmi_integrate(&seq, &x_i.bias, param, &noise).unwrap();
            let r = preint_error(&x_i, &x_j, &rmi, &g, false).unwrap();
            let mut j = DMatrix::zeros(15, 24);
            j.view_mut((0, 0), (15, 9)).copy_from(&r.jac_i.fixed_view::<15, 9>(0, 0));
            j.view_mut((0, 9), (15, 15)).copy_from(&r.jac_j);
            (j, move |d: &DVector<f64>| {
                let mut di = Vector15::zeros();
                di.fixed_rows_mut::<9>(0).copy_from_slice(&d.as_slice()[..9]);
                let a = x_i.oplus(&di);
                let b = x_j.oplus(&Vector15::from_column_slice(&d.as_slice()[9..]));
                dv(&preint_error(&a, &b, &rmi, &g, false).unwrap().value)
            })
        }));
    }
    out
}

fn side(rng: &mut ChaCha8Rng) -> CameraSide {
    if rng.random_bool(0.5) {
        CameraSide::Left
    } else {
        CameraSide::Right
    }
}

/// Reprojection error against observer, anchor and landmark, with the
/// landmark kept a comfortable depth in front of the observing camera.
fn visual_jacobians() -> Vec<Check> {
    let rig = CameraRig::forward_stereo(385.75, 323.12, 236.74, 640.0, 480.0, 0.15);
    let mut out = Vec::new();
    for (k, param) in PARAMS.into_iter().enumerate() {
        let rig = rig.clone();
        out.push(jacobian_check(&format!("visual error jacobian ({})", param.name()), 50 + k as u64, move |rng| loop {
            let anchor = random_state(rng, param);
            let observer =
                anchor.oplus(&Vector15::from_fn(|i, _| if i < 9 { rng.random_range(-0.1..0.1) } else { 0.0 }));
            let z = Landmark {
                alpha: rng.random_range(-0.4..0.4),
                beta: rng.random_range(-0.4..0.4),
                lambda: rng.random_range(0.1..0.5),
                anchor: StateId(0),
                anchor_camera: side(rng),
            };
            let camera = side(rng);
            let world = landmark_to_world(&z, &anchor, &rig.camera(z.anchor_camera).extrinsics).unwrap();
            let r_c = to_camera_frame(&world, &observer, &rig.camera(camera).extrinsics);
            if r_c.z < 0.5 {
                continue;
            }
            let meas = VisualMeasurement {
                y: project(&r_c).unwrap() + nalgebra::Vector2::new(0.01, -0.02),
                landmark: LandmarkId(0),
                camera,
                state: StateId(1),
                cov: rig.normalized_cov(camera),
            };
            let (_, _, jac) = visual_error(&meas, &z, &anchor, &observer, &rig).unwrap();
            let mut j = DMatrix::zeros(2, 33);
            j.view_mut((0, 0), (2, 15)).copy_from(&jac.anchor);
            j.view_mut((0, 15), (2, 15)).copy_from(&jac.observer);
            j.view_mut((0, 30), (2, 3)).copy_from(&jac.landmark);
            let rig = rig.clone();
            break (j, move |d: &DVector<f64>| {
                let a = anchor.oplus(&Vector15::from_column_slice(&d.as_slice()[..15]));
                let o = observer.oplus(&Vector15::from_column_slice(&d.as_slice()[15..30]));
                let z = z.oplus(&Vector3::from_column_slice(&d.as_slice()[30..])).0;
                dv(&visual_error(&meas, &z, &a, &o, &rig).unwrap().0)
            });
        }));
    }
    out
}

/// Integrating noise-free samples reproduces the simulated truth, and the
/// measured increment equals the one implied by the end states.
fn integration() -> Vec<Check> {
    let config = ScenarioConfig {
        duration: 2.0,
        ..ScenarioConfig::default()
    };
    let data = generate_truth(&config);
    let mut prop: f64 = 0.0;
    let mut rmi: f64 = 0.0;
    for param in PARAMS {
        for k in 0..data.stamps.len() - 1 {
            let (a, b) = (data.truth[k].with_param(param), data.truth[k + 1].with_param(param));
            let seq = data.interval(k);
            let p = propagate_recursive(&a, seq, &config.gravity).unwrap();
            prop = prop.max(p.eta(&b).unwrap().amax());
            let dt: f64 = seq.iter().map(|u| u.dt).sum();
            let m = rmi_integrate(seq, &a.bias, param, &NoiseParams::zero()).unwrap();
            let q = rmi_predicted(&a, &b, dt, &config.gravity);
            rmi = rmi.max((m.delta.to_matrix() - q.delta.to_matrix()).amax());
        }
    }
    vec![
        Check::new("recursive propagation reproduces truth", prop, ROUNDTRIP_TOL),
        Check::new("measured increment equals predicted", rmi, ROUNDTRIP_TOL),
    ]
}

/// All checks, in a fixed order.
pub fn run() -> Vec<Check> {
    let mut out = roundtrips();
    out.extend(lie_jacobians());
    out.extend(imu_jacobians());
    out.extend(visual_jacobians());
    out.extend(integration());
    out
}

//! Ground truth and noisy measurements for one trial.

use std::f64::consts::TAU;

use nalgebra::{Vector2, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ScenarioConfig;
use crate::imu::{propagate_one_step, ImuMeasurement, NoiseParams};
use crate::state::{CameraSide, ImuState, LandmarkId, Parameterization, StateId};
use crate::vision::{project, to_camera_frame, CameraRig, VisualMeasurement};
use crate::{ExtendedPose, Rotation};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    /// Camera-frame stamps, seconds.
    pub stamps: Vec<f64>,
    /// True IMU state at each camera frame (bias included).
    pub truth: Vec<ImuState>,
    pub landmarks: Vec<Vector3<f64>>,
    /// All IMU samples; frame `k` is followed by samples
    /// `k·s .. (k+1)·s` with `s` samples per frame.
    pub imu: Vec<ImuMeasurement>,
    /// Measurements per frame. `landmark` is the index into `landmarks` and
    /// `state` the frame index.
    pub visual: Vec<Vec<VisualMeasurement>>,
    pub rig: CameraRig,
}

impl TrialData {
    /// Samples between frames `k` and `k + 1`.
    pub fn interval(&self, k: usize) -> &[ImuMeasurement] {
        let s = self.imu.len() / (self.stamps.len() - 1).max(1);
        &self.imu[k * s..(k + 1) * s]
    }
}

fn attitude(config: &ScenarioConfig, t: f64) -> Rotation {
    let tr = &config.trajectory;
    let yaw = tr.angular_rate * t;
    let w = TAU * tr.tilt_frequency * t;
    let roll = tr.tilt_amplitude * w.sin();
    let pitch = tr.tilt_amplitude * w.cos();
    Rotation::exp(&(Vector3::z() * yaw))
        * Rotation::exp(&(Vector3::y() * pitch))
        * Rotation::exp(&(Vector3::x() * roll))
}

fn position(config: &ScenarioConfig, t: f64) -> Vector3<f64> {
    let tr = &config.trajectory;
    let a = tr.angular_rate * t;
    Vector3::new(
        tr.radius * a.cos(),
        tr.radius * a.sin(),
        tr.vertical_amplitude * (TAU * tr.vertical_frequency * t).sin(),
    )
}

fn velocity(config: &ScenarioConfig, t: f64) -> Vector3<f64> {
    let tr = &config.trajectory;
    let a = tr.angular_rate * t;
    let wz = TAU * tr.vertical_frequency;
    Vector3::new(
        -tr.radius * tr.angular_rate * a.sin(),
        tr.radius * tr.angular_rate * a.cos(),
        tr.vertical_amplitude * wz * (wz * t).cos(),
    )
}

/// Noise-free truth with zero bias, landmarks, ideal IMU samples and
/// noise-free stereo measurements of every visible landmark.
///
/// Inputs come from differencing the path at the IMU rate, and the states
/// are produced by integrating those inputs with the one-step model, so the
/// truth satisfies the process model exactly.
pub fn generate_truth(config: &ScenarioConfig) -> TrialData {
    let dt = config.imu_dt();
    let per = config.imu_per_frame();
    let frames = config.frames();
    let steps = (frames - 1) * per;

    let mut x = ImuState::new(
        Parameterization::Grouped,
        ExtendedPose::new(attitude(config, 0.0), velocity(config, 0.0), position(config, 0.0)),
        Vector6::zeros(),
    );
    let mut truth = vec![x];
    let mut imu = Vec::with_capacity(steps);
    for k in 0..steps {
        let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
        let c1 = attitude(config, t1);
        let gyro = (x.rotation().transpose() * c1).log() / dt;
        let acc = (velocity(config, t1) - velocity(config, t0)) / dt;
        let u = ImuMeasurement {
            gyro,
            accel: x.rotation().transpose() * (acc - config.gravity),
            stamp: t0,
            dt,
        };
        x = propagate_one_step(&x, &u, dt, &config.gravity).expect("positive step");
        imu.push(u);
        if (k + 1) % per == 0 {
            truth.push(x);
        }
    }

    let lm = &config.landmarks;
    let mut landmarks = Vec::with_capacity(lm.count);
    for ring in 0..lm.rings {
        let n = lm.count / lm.rings + usize::from(ring < lm.count % lm.rings);
        let h = if lm.rings == 1 {
            0.0
        } else {
            -0.5 * lm.height_span + lm.height_span * ring as f64 / (lm.rings - 1) as f64
        };
        let offset = if ring % 2 == 1 { 0.5 } else { 0.0 };
        for q in 0..n {
            let a = TAU * (q as f64 + offset) / n as f64;
            landmarks.push(Vector3::new(lm.radius * a.cos(), lm.radius * a.sin(), h));
        }
    }

    let stamps: Vec<f64> = (0..frames).map(|k| (k * per) as f64 * dt).collect();
    let visual = truth
        .iter()
        .enumerate()
        .map(|(k, x)| observe(config, k, x, &landmarks))
        .collect();
    TrialData {
        stamps,
        truth,
        landmarks,
        imu,
        visual,
        rig: config.rig,
    }
}

fn observe(config: &ScenarioConfig, frame: usize, x: &ImuState, landmarks: &[Vector3<f64>]) -> Vec<VisualMeasurement> {
    let mut out = Vec::new();
    for (q, p) in landmarks.iter().enumerate() {
        for side in [CameraSide::Left, CameraSide::Right] {
            let cam = config.rig.camera(side);
            let r_c = to_camera_frame(p, x, &cam.extrinsics);
            if r_c.z <= config.min_depth {
                continue;
            }
            let y = project(&r_c).expect("depth checked");
            if !cam.in_image(&cam.to_pixels(&y)) {
                continue;
            }
            out.push(VisualMeasurement {
                y,
                landmark: LandmarkId(q as u64),
                camera: side,
                state: StateId(frame as u64),
                cov: config.rig.normalized_cov(side),
            });
        }
    }
    out
}

/// Adds white IMU noise, bias random walks starting from zero and pixel
/// noise. The true biases are written into `truth`. Visibility is decided on
/// the noise-free projections, so association is unchanged.
///
/// Densities are treated as continuous-time: per-sample noise has standard
/// deviation `σ/√dt`, and a bias moves by `σ_w·√dt` per sample.
pub fn corrupt(truth: &TrialData, noise: &NoiseParams, seed: u64) -> TrialData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = truth.clone();
    let per = out.imu.len() / (out.stamps.len() - 1).max(1);
    let mut bias = Vector6::<f64>::zeros();
    let chol = |m: &nalgebra::Matrix3<f64>| {
        m.cholesky().map(|c| c.l()).unwrap_or_else(nalgebra::Matrix3::zeros)
    };
    let (lg, la, lwg, lwa) = (
        chol(&noise.gyro_psd),
        chol(&noise.accel_psd),
        chol(&noise.gyro_walk_psd),
        chol(&noise.accel_walk_psd),
    );
    let normal3 = |rng: &mut ChaCha8Rng| {
        Vector3::from_fn(|_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
    };
    for (k, u) in out.imu.iter_mut().enumerate() {
        let s = 1.0 / u.dt.sqrt();
        let (bg, ba) = (bias.fixed_rows::<3>(0).into_owned(), bias.fixed_rows::<3>(3).into_owned());
        u.gyro += bg + lg * normal3(&mut rng) * s;
        u.accel += ba + la * normal3(&mut rng) * s;
        let step_g = lwg * normal3(&mut rng) * u.dt.sqrt();
        let step_a = lwa * normal3(&mut rng) * u.dt.sqrt();
        let mut b = bias.fixed_rows_mut::<3>(0);
        b += step_g;
        let mut b = bias.fixed_rows_mut::<3>(3);
        b += step_a;
        if (k + 1) % per == 0 {
            out.truth[(k + 1) / per].bias = bias;
        }
    }
    let normal2 = |rng: &mut ChaCha8Rng| {
        Vector2::from_fn(|_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
    };
    let sigma = noise.camera_pixel_sigma;
    for frame in &mut out.visual {
        for m in frame.iter_mut() {
            let cam = out.rig.camera(m.camera);
            let n = normal2(&mut rng);
            m.y += Vector2::new(sigma / cam.fu * n.x, sigma / cam.fv * n.y);
        }
    }
    out
}

/// Truth plus one noisy realization, for the configured noise.
pub fn simulate(config: &ScenarioConfig, seed: u64) -> TrialData {
    corrupt(&generate_truth(config), &config.noise, seed)
}

//! Synthetic stereo-inertial scenarios and the Monte Carlo driver.
//!
//! A scenario is described by a plain-text `key = value` file; see
//! [`ScenarioConfig::parse`] for the keys. Unknown keys are errors.

mod driver;
mod scenario;

pub use driver::{
    audit_window, run_estimator, run_monte_carlo, run_trial, sample_initial_error, EstimatorConfig, Filter,
    MonteCarloResult, TrialResult,
};
pub use scenario::{corrupt, generate_truth, simulate, TrialData};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::imu::NoiseParams;
use crate::solver::{ImuHandling, WindowConfig};
use crate::state::Parameterization;
use crate::vision::CameraRig;

/// Circle in the horizontal plane with a vertical sine and a roll/pitch
/// wobble. The body x axis points radially outward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub radius: f64,
    pub angular_rate: f64,
    pub vertical_amplitude: f64,
    pub vertical_frequency: f64,
    pub tilt_amplitude: f64,
    pub tilt_frequency: f64,
}

/// Landmarks evenly spaced on `rings` horizontal rings of a cylinder around
/// the vertical axis, spanning `height_span` metres centred on zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkLayout {
    pub count: usize,
    pub radius: f64,
    pub height_span: f64,
    pub rings: usize,
}

/// One-sigma spread of the initial-state error, which also sets the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSigma {
    pub rotation: f64,
    pub velocity: f64,
    pub position: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
}

impl InitialSigma {
    pub fn as_vector(&self) -> crate::state::Vector15 {
        let mut s = crate::state::Vector15::zeros();
        let vals = [self.rotation, self.velocity, self.position, self.gyro_bias, self.accel_bias];
        for (k, v) in vals.iter().enumerate() {
            s.fixed_rows_mut::<3>(3 * k).fill(*v);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub imu_rate: u32,
    pub cam_rate: u32,
    pub trajectory: Trajectory,
    pub landmarks: LandmarkLayout,
    pub noise: NoiseParams,
    pub gravity: Vector3<f64>,
    pub rig: CameraRig,
    /// Closest depth, metres, at which a landmark counts as visible.
    pub min_depth: f64,
    pub initial_sigma: InitialSigma,
    pub window: WindowConfig,
    pub mc_trials: usize,
    pub seed: u64,
    /// In file order.
    pub estimators: Vec<EstimatorConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let noise = NoiseParams::isotropic(0.01, 0.01, 0.001, 0.001, 1.0);
        let mut rig = CameraRig::forward_stereo(385.75, 323.12, 236.74, 640.0, 480.0, 0.15);
        rig.pixel_sigma = noise.camera_pixel_sigma;
        Self {
            duration: 60.0,
            imu_rate: 200,
            cam_rate: 10,
            trajectory: Trajectory {
                radius: 3.0,
                angular_rate: 0.2,
                vertical_amplitude: 0.5,
                vertical_frequency: 0.05,
                tilt_amplitude: 0.1,
                tilt_frequency: 0.1,
            },
            landmarks: LandmarkLayout {
                count: 60,
                radius: 8.0,
                height_span: 4.0,
                rings: 2,
            },
            noise,
            gravity: Vector3::new(0.0, 0.0, -9.81),
            rig,
            min_depth: 0.1,
            initial_sigma: InitialSigma {
                rotation: 0.02,
                velocity: 0.05,
                position: 0.05,
                gyro_bias: 0.002,
                accel_bias: 0.02,
            },
            window: WindowConfig::default(),
            mc_trials: 20,
            seed: 1,
            estimators: EstimatorConfig::all(),
        }
    }
}

impl ScenarioConfig {
    /// Long-run variant: 250 s and 100 trials.
    pub fn full_scale(mut self) -> Self {
        self.duration = 250.0;
        self.mc_trials = 100;
        self
    }

    pub fn imu_dt(&self) -> f64 {
        1.0 / self.imu_rate as f64
    }

    /// IMU samples per camera frame.
    pub fn imu_per_frame(&self) -> usize {
        (self.imu_rate / self.cam_rate) as usize
    }

    /// Number of camera frames, the first at `t = 0`.
    pub fn frames(&self) -> usize {
        (self.duration * self.cam_rate as f64).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config { line: 0, message: m.into() });
        if self.imu_rate == 0 || self.cam_rate == 0 || self.imu_rate % self.cam_rate != 0 {
            return bad("imu_rate must be a positive multiple of cam_rate");
        }
        if !(self.duration >= 0.0) {
            return bad("duration must be non-negative");
        }
        if self.landmarks.count == 0 || self.landmarks.rings == 0 {
            return bad("landmark count and rings must be positive");
        }
        if self.mc_trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.window.window_size < 2 {
            return bad("window size must be at least 2");
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required");
        }
        if self.rig.pixel_sigma <= 0.0 {
            return bad("pixel noise must be positive");
        }
        Ok(())
    }

    /// Parses a configuration, starting from [`Default`]. Lines look like
    /// `key = value`; `#` starts a comment. Keys:
    ///
    /// ```text
    /// duration imu_rate cam_rate trials seed min_depth gravity (3 numbers)
    /// trajectory.{radius,angular_rate,vertical_amplitude,vertical_frequency,
    ///             tilt_amplitude,tilt_frequency}
    /// landmarks.{count,radius,height_span,rings}
    /// noise.{gyro,accel,gyro_walk,accel_walk,pixel}
    /// camera.{focal,cu,cv,width,height,baseline}
    /// init.{rotation,velocity,position,gyro_bias,accel_bias}
    /// window.size gn.{max_iters,step_tol,cost_tol,max_halvings}
    /// estimator = <grouped|separate> <direct|preintegrated> <exact|approx>
    /// ```
    ///
    /// Any `estimator` line replaces the default list of all eight.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut estimators = Vec::new();
        let mut noise = (0.01, 0.01, 0.001, 0.001, 1.0);
        let mut cam = (385.75, 323.12, 236.74, 640.0, 480.0, 0.15);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let err = |m: String| Error::Config { line, message: m };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("`{key}` expects a number, got `{value}`")))
            };
            let int = || -> Result<u64> {
                value
                    .parse::<u64>()
                    .map_err(|_| err(format!("`{key}` expects a non-negative integer, got `{value}`")))
            };
            match key {
                "duration" => c.duration = num()?,
                "imu_rate" => c.imu_rate = int()? as u32,
                "cam_rate" => c.cam_rate = int()? as u32,
                "trials" => c.mc_trials = int()? as usize,
                "seed" => c.seed = int()?,
                "min_depth" => c.min_depth = num()?,
                "gravity" => {
                    let v: Vec<f64> = value
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err(format!("`gravity` expects three numbers, got `{value}`")))?;
                    if v.len() != 3 {
                        return Err(err(format!("`gravity` expects three numbers, got `{value}`")));
                    }
                    c.gravity = Vector3::new(v[0], v[1], v[2]);
                }
                "trajectory.radius" => c.trajectory.radius = num()?,
                "trajectory.angular_rate" => c.trajectory.angular_rate = num()?,
                "trajectory.vertical_amplitude" => c.trajectory.vertical_amplitude = num()?,
                "trajectory.vertical_frequency" => c.trajectory.vertical_frequency = num()?,
                "trajectory.tilt_amplitude" => c.trajectory.tilt_amplitude = num()?,
                "trajectory.tilt_frequency" => c.trajectory.tilt_frequency = num()?,
                "landmarks.count" => c.landmarks.count = int()? as usize,
                "landmarks.radius" => c.landmarks.radius = num()?,
                "landmarks.height_span" => c.landmarks.height_span = num()?,
                "landmarks.rings" => c.landmarks.rings = int()? as usize,
                "noise.gyro" => noise.0 = num()?,
                "noise.accel" => noise.1 = num()?,
                "noise.gyro_walk" => noise.2 = num()?,
                "noise.accel_walk" => noise.3 = num()?,
                "noise.pixel" => noise.4 = num()?,
                "camera.focal" => cam.0 = num()?,
                "camera.cu" => cam.1 = num()?,
                "camera.cv" => cam.2 = num()?,
                "camera.width" => cam.3 = num()?,
                "camera.height" => cam.4 = num()?,
                "camera.baseline" => cam.5 = num()?,
                "init.rotation" => c.initial_sigma.rotation = num()?,
                "init.velocity" => c.initial_sigma.velocity = num()?,
                "init.position" => c.initial_sigma.position = num()?,
                "init.gyro_bias" => c.initial_sigma.gyro_bias = num()?,
                "init.accel_bias" => c.initial_sigma.accel_bias = num()?,
                "window.size" => c.window.window_size = int()? as usize,
                "gn.max_iters" => c.window.gn.max_iters = int()? as usize,
                "gn.step_tol" => c.window.gn.step_tol = num()?,
                "gn.cost_tol" => c.window.gn.cost_tol = num()?,
                "gn.max_halvings" => c.window.gn.max_halvings = int()? as usize,
                "estimator" => estimators.push(EstimatorConfig::parse(value).map_err(err)?),
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        c.noise = NoiseParams::isotropic(noise.0, noise.1, noise.2, noise.3, noise.4);
        c.rig = CameraRig::forward_stereo(cam.0, cam.1, cam.2, cam.3, cam.4, cam.5);
        c.rig.pixel_sigma = noise.4;
        if !estimators.is_empty() {
            c.estimators = estimators;
        }
        c.validate()?;
        Ok(c)
    }
}

impl EstimatorConfig {
    /// All eight combinations, in the order direct before preintegrated,
    /// grouped before separate, approximate before exact.
    pub fn all() -> Vec<Self> {
        let mut v = Vec::new();
        for handling in [ImuHandling::Direct, ImuHandling::Preintegrated] {
            for param in [Parameterization::Grouped, Parameterization::Separate] {
                for approximate in [true, false] {
                    v.push(Self {
                        param,
                        handling,
                        approximate,
                    });
                }
            }
        }
        v
    }

    /// `"<grouped|separate> <direct|preintegrated> <exact|approx>"`.
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let [p, h, j] = words.as_slice() else {
            return Err(format!("estimator expects `<grouped|separate> <direct|preintegrated> <exact|approx>`, got `{s}`"));
        };
        let param = match *p {
            "grouped" => Parameterization::Grouped,
            "separate" => Parameterization::Separate,
            _ => return Err(format!("unknown parameterization `{p}`")),
        };
        let handling = match *h {
            "direct" => ImuHandling::Direct,
            "preintegrated" | "preint" => ImuHandling::Preintegrated,
            _ => return Err(format!("unknown IMU handling `{h}`")),
        };
        let approximate = match *j {
            "approx" | "approximate" => true,
            "exact" => false,
            _ => return Err(format!("unknown Jacobian flag `{j}`")),
        };
        Ok(Self {
            param,
            handling,
            approximate,
        })
    }

    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            self.handling.name(),
            self.param.name(),
            if self.approximate { "approx" } else { "exact" }
        )
    }
}

//! Runs the sliding-window estimator over simulated trials.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{generate_truth, simulate, ScenarioConfig, TrialData};
use crate::error::{Error, Result};
use crate::eval::{estimate_error, nees, MetricSeries, TrialMetrics};
use crate::imu::propagate_recursive;
use crate::solver::{
    Context, Factor, ImuFactor, ImuHandling, Prior, Solution, VisualFactor, Window, WindowStats,
};
use crate::state::{CameraSide, ImuState, Landmark, LandmarkId, Parameterization, SlamState, StateId, Vector15};
use crate::vision::{triangulate, VisualMeasurement};

/// Which filter variant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorConfig {
    pub param: Parameterization,
    pub handling: ImuHandling,
    /// Replace `𝒥_ℓ⁻¹` of the IMU error by identity.
    pub approximate: bool,
}

/// Newest-state estimate and marginal covariance after each frame's solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub stamps: Vec<f64>,
    pub estimates: Vec<ImuState>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Truth in the estimator's parameterization.
    pub truth: Vec<ImuState>,
    pub stats: WindowStats,
    pub gn_iterations: usize,
}

impl TrialResult {
    pub fn metrics(&self, gravity: &Vector3<f64>) -> Result<TrialMetrics> {
        let mut m = TrialMetrics {
            stamps: self.stamps.clone(),
            ..Default::default()
        };
        for ((x, p), t) in self.estimates.iter().zip(&self.covariances).zip(&self.truth) {
            m.nees.push(nees(x, p, t, gravity)?);
            m.errors.push(estimate_error(x, t, gravity)?);
        }
        Ok(m)
    }
}

/// Initial-state error shared by every estimator run on the same seed.
pub fn sample_initial_error(config: &ScenarioConfig, seed: u64) -> Vector15 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let sigma = config.initial_sigma.as_vector();
    Vector15::from_fn(|i, _| sigma[i] * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
}

/// The sliding-window estimator fed frame by frame from [`TrialData`].
///
/// Tracks are keyed by world landmark index; a track starts when a landmark
/// is seen by both cameras of a frame and is triangulated in the left camera
/// of that frame. It ends when its anchor is marginalized.
#[derive(Debug, Clone)]
pub struct Filter {
    pub estimator: EstimatorConfig,
    pub window: Window,
    window_size: usize,
    tracks: BTreeMap<u64, LandmarkId>,
    next_track: u64,
    next_frame: usize,
}

impl Filter {
    /// Starts at `data.truth[0] ⊕ initial_error` with a prior whose
    /// covariance is the configured initial spread.
    pub fn new(
        config: &ScenarioConfig,
        estimator: &EstimatorConfig,
        data: &TrialData,
        initial_error: &Vector15,
    ) -> Result<Self> {
        let ctx = Context {
            gravity: config.gravity,
            rig: data.rig,
            noise: config.noise,
        };
        let x0 = data.truth[0].with_param(estimator.param).oplus(initial_error);
        let mut state = SlamState::new(estimator.param);
        state.insert_imu(StateId(0), x0)?;
        let sigma = config.initial_sigma.as_vector();
        let info = DMatrix::from_diagonal(&DVector::from_iterator(15, sigma.iter().map(|s| 1.0 / (s * s))));
        let mut window = Window::new(state.clone(), config.window, ctx);
        window.factors.push(Factor::Prior(Prior::new(state, info)));
        Ok(Self {
            estimator: *estimator,
            window,
            window_size: config.window.window_size,
            tracks: BTreeMap::new(),
            next_track: 0,
            next_frame: 0,
        })
    }

    /// Index of the frame the next [`Filter::step`] consumes.
    pub fn next_frame(&self) -> usize {
        self.next_frame
    }

    /// Adds the next frame (marginalizing first when the window is full)
    /// without solving.
    pub fn add_frame(&mut self, data: &TrialData) -> Result<StateId> {
        let k = self.next_frame;
        if k >= data.stamps.len() {
            return Err(Error::UnknownState(StateId(k as u64)));
        }
        let id = StateId(k as u64);
        let window = &mut self.window;
        if k > 0 {
            if window.state.imu.len() >= self.window_size {
                let oldest = *window.state.imu.keys().next().unwrap();
                window.marginalize(&[oldest])?;
                self.tracks.retain(|_, l| window.state.landmarks.contains_key(l));
            }
            let from = StateId(k as u64 - 1);
            let samples = data.interval(k - 1).to_vec();
            let predicted = propagate_recursive(window.state.imu_state(from)?, &samples, &window.ctx.gravity)?;
            window.state.insert_imu(id, predicted)?;
            let f = ImuFactor::new(
                &window.state,
                from,
                id,
                samples,
                self.estimator.handling,
                self.estimator.approximate,
                &window.ctx,
            )?;
            window.factors.push(Factor::Imu(f));
        }

        let mut seen: BTreeMap<u64, [Option<&VisualMeasurement>; 2]> = BTreeMap::new();
        for m in &data.visual[k] {
            let slot = match m.camera {
                CameraSide::Left => 0,
                CameraSide::Right => 1,
            };
            seen.entry(m.landmark.0).or_default()[slot] = Some(m);
        }
        for (q, pair) in seen {
            let lid = match self.tracks.get(&q) {
                Some(l) => *l,
                None => {
                    let [Some(l), Some(r)] = pair else { continue };
                    let Ok(z) = triangulate(&l.y, &r.y, &window.ctx.rig) else { continue };
                    let lid = LandmarkId(self.next_track);
                    self.next_track += 1;
                    window.state.insert_landmark(
                        lid,
                        Landmark {
                            alpha: z.x,
                            beta: z.y,
                            lambda: z.z,
                            anchor: id,
                            anchor_camera: CameraSide::Left,
                        },
                    )?;
                    self.tracks.insert(q, lid);
                    lid
                }
            };
            for m in pair.into_iter().flatten() {
                let meas = VisualMeasurement {
                    landmark: lid,
                    state: id,
                    ..*m
                };
                window.factors.push(Factor::Visual(VisualFactor::new(meas)?));
            }
        }
        self.next_frame += 1;
        Ok(id)
    }

    /// Adds the next frame and solves the window.
    pub fn step(&mut self, data: &TrialData) -> Result<(StateId, Solution)> {
        let id = self.add_frame(data)?;
        Ok((id, self.window.gauss_newton()?))
    }
}

/// Runs `estimator` over every frame of `data`, starting from truth moved
/// by `initial_error`.
pub fn run_estimator(
    config: &ScenarioConfig,
    estimator: &EstimatorConfig,
    data: &TrialData,
    initial_error: &Vector15,
) -> Result<TrialResult> {
    let mut filter = Filter::new(config, estimator, data, initial_error)?;
    let frames = data.stamps.len();
    let mut out = TrialResult {
        stamps: data.stamps.clone(),
        estimates: Vec::with_capacity(frames),
        covariances: Vec::with_capacity(frames),
        truth: data.truth.iter().map(|x| x.with_param(estimator.param)).collect(),
        stats: WindowStats::default(),
        gn_iterations: 0,
    };
    for _ in 0..frames {
        let (id, sol) = filter.step(data)?;
        out.gn_iterations += sol.report.iterations;
        out.estimates.push(*sol.state.imu_state(id)?);
        out.covariances.push(sol.state_covariance(id).ok_or(Error::UnknownState(id))?);
    }
    out.stats = filter.window.stats;
    Ok(out)
}

/// A full window built from noise-free data without marginalization or
/// solving: `config.window.window_size` states with their IMU and visual
/// terms. Used to audit the unobservable directions.
pub fn audit_window(config: &ScenarioConfig, estimator: &EstimatorConfig) -> Result<Window> {
    let mut short = config.clone();
    let frames = config.window.window_size.max(2);
    short.duration = (frames - 1) as f64 / f64::from(config.cam_rate);
    let data = generate_truth(&short);
    let mut filter = Filter::new(&short, estimator, &data, &Vector15::zeros())?;
    for _ in 0..frames.min(data.stamps.len()) {
        filter.add_frame(&data)?;
    }
    Ok(filter.window)
}

/// Simulates a trial from `seed` and runs `estimator` on it.
pub fn run_trial(config: &ScenarioConfig, estimator: &EstimatorConfig, seed: u64) -> Result<TrialResult> {
    let data = simulate(config, seed);
    run_estimator(config, estimator, &data, &sample_initial_error(config, seed))
}

#[derive(Debug)]
pub struct MonteCarloResult {
    pub estimator: EstimatorConfig,
    /// Successful trials by index, in index order.
    pub trials: Vec<(usize, TrialResult)>,
    pub failures: Vec<Error>,
}

impl MonteCarloResult {
    pub fn series(&self, gravity: &Vector3<f64>) -> Result<MetricSeries> {
        let per: Vec<TrialMetrics> = self
            .trials
            .iter()
            .map(|(_, t)| t.metrics(gravity))
            .collect::<Result<_>>()?;
        MetricSeries::from_trials(&per)
    }
}

/// Runs `config.mc_trials` trials in parallel; trial `i` uses seed
/// `config.seed + i`. Results do not depend on scheduling.
pub fn run_monte_carlo(config: &ScenarioConfig, estimator: &EstimatorConfig) -> MonteCarloResult {
    let results: Vec<(usize, Result<TrialResult>)> = (0..config.mc_trials)
        .into_par_iter()
        .map(|i| (i, run_trial(config, estimator, config.seed.wrapping_add(i as u64))))
        .collect();
    let mut out = MonteCarloResult {
        estimator: *estimator,
        trials: Vec::new(),
        failures: Vec::new(),
    };
    for (i, r) in results {
        match r {
            Ok(t) => out.trials.push((i, t)),
            Err(e) => out.failures.push(Error::Trial {
                trial: i,
                source: Box::new(e),
            }),
        }
    }
    out
}

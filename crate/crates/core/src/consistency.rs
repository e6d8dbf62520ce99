//! Executable checks that linearization and marginalization keep the
//! unobservable directions unobservable.
//!
//! * Same-point check: `H(X̄) N(X̄) = 0` at arbitrary linearization points.
//! * Cross-point check: `H(X̄¹) N(X̄²) = 0` for distinct points, which is what
//!   a marginalization prior linearized at an old estimate actually sees.

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::solver::{normal_equations, ErrorKind, Factor, Window};
use crate::state::SlamState;

/// Max-abs entry of row-normalized `H·N` below which a check passes.
pub const PASS_THRESHOLD: f64 = 1e-9;
/// Standard deviation of the random perturbation per degree of freedom.
pub const PERTURBATION_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluationMode {
    SamePoint,
    CrossPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceReport {
    pub mode: EvaluationMode,
    /// Max |H·N| entry for each error term, in factor order (prior excluded).
    pub per_term: Vec<(ErrorKind, f64)>,
    pub aggregate: f64,
    pub trials: usize,
    /// Terms skipped at some evaluation point because a landmark fell behind
    /// the camera.
    pub skipped: usize,
}

impl NullspaceReport {
    pub fn passes(&self) -> bool {
        self.aggregate < PASS_THRESHOLD
    }

    /// Largest entry among terms of one kind, if any are present.
    pub fn max_for(&self, kind: ErrorKind) -> Option<f64> {
        self.per_term
            .iter()
            .filter(|(k, _)| *k == kind)
            .map(|(_, v)| *v)
            .reduce(f64::max)
    }
}

/// Perturbs every variable: `N(0, σ²)` per IMU degree of freedom and for
/// the landmark bearings, and a relative `σ` on inverse depth so the
/// landmark stays in front of the camera.
pub fn perturb(state: &SlamState, sigma: f64, rng: &mut ChaCha8Rng) -> SlamState {
    state
        .oplus(&draw(state, sigma, rng))
        .expect("increment sized from the state")
}

fn draw(state: &SlamState, sigma: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut d = DVector::zeros(state.dim());
    let mut row = 0;
    for _ in state.imu.values() {
        for k in 0..15 {
            d[row + k] = sigma * sample(rng);
        }
        row += 15;
    }
    for z in state.landmarks.values() {
        d[row] = sigma * sample(rng);
        d[row + 1] = sigma * sample(rng);
        d[row + 2] = sigma * z.lambda * sample(rng);
        row += 3;
    }
    d
}

fn sample(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn second_stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Same-point check over `trials` random linearization points around the
/// window's current state. Priors are left out of the analysis.
pub fn check_r1(window: &Window, trials: usize, seed: u64) -> Result<NullspaceReport> {
    run(window, trials, seed, None)
}

/// Cross-point check: `H` at one random point `X̄¹`, `N` at `X̄¹ ⊕ δ` with an
/// independent random `δ`.
pub fn check_r2(window: &Window, trials: usize, seed: u64) -> Result<NullspaceReport> {
    run(window, trials, seed, Some(1.0))
}

/// Cross-point check where the second point is the first one moved by
/// `separation` times an independent perturbation; `0` reproduces
/// [`check_r1`] exactly.
pub fn check_r2_with_separation(
    window: &Window,
    trials: usize,
    seed: u64,
    separation: f64,
) -> Result<NullspaceReport> {
    run(window, trials, seed, Some(separation))
}

fn run(window: &Window, trials: usize, seed: u64, separation: Option<f64>) -> Result<NullspaceReport> {
    let mut rng1 = ChaCha8Rng::seed_from_u64(seed);
    let mut rng2 = second_stream(seed);
    let mut probe = window.clone();
    probe.factors.retain(|f| !matches!(f, Factor::Prior(_)));
    let mut per_term: Vec<(ErrorKind, f64)> = probe.factors.iter().map(|f| (f.kind(), 0.0)).collect();
    let mut skipped = 0;
    let g = window.ctx.gravity;
    for _ in 0..trials {
        let x1 = perturb(&window.state, PERTURBATION_SIGMA, &mut rng1);
        let x2 = match separation {
            None => x1.clone(),
            Some(sep) => {
                let d = draw(&x1, PERTURBATION_SIGMA, &mut rng2);
                if sep == 0.0 {
                    x1.clone()
                } else {
                    x1.oplus(&(d * sep))?
                }
            }
        };
        let n = x2.nullspace(&g);
        let layout = x1.layout();
        for (k, f) in probe.factors.iter().enumerate() {
            let Some(term) = f.linearize(&x1, &probe.ctx)? else {
                skipped += 1;
                continue;
            };
            let rows = term.value.len();
            let mut h = DMatrix::zeros(rows, layout.dim());
            for (id, j) in &term.blocks {
                let off = layout.offset(*id).unwrap();
                let mut v = h.view_mut((0, off), (rows, id.dof()));
                v += j;
            }
            normalize_rows(&mut h);
            let m = (&h * &n).amax();
            per_term[k].1 = per_term[k].1.max(m);
        }
    }
    let aggregate = per_term.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    Ok(NullspaceReport {
        mode: if separation.is_some() {
            EvaluationMode::CrossPoint
        } else {
            EvaluationMode::SamePoint
        },
        per_term,
        aggregate,
        trials,
        skipped,
    })
}

fn normalize_rows(h: &mut DMatrix<f64>) {
    for mut row in h.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
}

/// `diag(NᵀΛN)` at the window's current estimate, prior included. This is
/// a diagnostic of how much information the window claims along the four
/// unobservable directions.
pub fn information_gain(window: &Window) -> Result<Vector4<f64>> {
    let ne = normal_equations(&window.factors, &window.state, &window.ctx)?;
    let n = window.state.nullspace(&window.ctx.gravity);
    let m = n.transpose() * &ne.lambda * &n;
    Ok(Vector4::new(m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(3, 3)]))
}

/// [`information_gain`] over a run of windows.
pub fn information_gain_sequence(windows: &[Window]) -> Result<Vec<Vector4<f64>>> {
    windows.iter().map(information_gain).collect()
}

/// Unit vector along gravity.
pub fn gravity_axis(g: &Vector3<f64>) -> Vector3<f64> {
    g / g.norm()
}

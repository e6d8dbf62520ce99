//! Weighted nonlinear least squares over a sliding window: assembly,
//! Gauss-Newton, and Schur-complement marginalization into a prior.

mod factor;

pub use factor::{
    Context, ErrorKind, ErrorTerm, Factor, ImuFactor, ImuHandling, Prior, VisualFactor,
};

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{floored_inverse, solve_semidefinite, symmetrized};
use crate::state::{Layout, SlamState, StateId, VarId};

/// Eigenvalue floor used when a marginalization pivot is singular.
pub const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnConfig {
    pub max_iters: usize,
    pub step_tol: f64,
    /// Relative cost decrease below which iteration stops.
    pub cost_tol: f64,
    pub max_halvings: usize,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            max_iters: 20,
            step_tol: 1e-8,
            cost_tol: 1e-10,
            max_halvings: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    /// Number of IMU states kept in the window.
    pub window_size: usize,
    pub gn: GnConfig,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_size: 10,
            gn: GnConfig::default(),
        }
    }
}

/// Counters accumulated over the life of a window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowStats {
    /// Marginalization pivots whose eigenvalues had to be floored.
    pub floored_pivots: usize,
    /// Visual terms skipped because the landmark fell behind the camera.
    pub dropped_terms: usize,
    pub marginalizations: usize,
}

#[derive(Debug, Clone)]
pub struct Window {
    pub state: SlamState,
    pub factors: Vec<Factor>,
    pub config: WindowConfig,
    pub ctx: Context,
    pub stats: WindowStats,
}

/// Stacked, dense form of every error term in a window.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub layout: Layout,
    pub errors: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub weight: DMatrix<f64>,
    /// `(kind, first row, rows)` per term, in factor order.
    pub rows: Vec<(ErrorKind, usize, usize)>,
}

/// Dense normal equations `Λ δ = b` with `Λ = HᵀWH`, `b = −HᵀWe`.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub layout: Layout,
    pub lambda: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub cost: f64,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub last_step_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub state: SlamState,
    /// `Λ⁻¹` restricted to the IMU states, in layout order.
    pub imu_covariance: DMatrix<f64>,
    pub report: GnReport,
}

impl Solution {
    /// Marginal covariance of one IMU state.
    pub fn state_covariance(&self, id: StateId) -> Option<DMatrix<f64>> {
        let k = self.state.imu.keys().position(|&s| s == id)?;
        Some(self.imu_covariance.view((15 * k, 15 * k), (15, 15)).into_owned())
    }
}

impl Window {
    pub fn new(state: SlamState, config: WindowConfig, ctx: Context) -> Self {
        Self {
            state,
            factors: Vec::new(),
            config,
            ctx,
            stats: WindowStats::default(),
        }
    }

    pub fn has_prior(&self) -> bool {
        self.factors.iter().any(|f| matches!(f, Factor::Prior(_)))
    }

    /// Linearizes every factor at `state` and stacks the result.
    pub fn assemble_at(&self, state: &SlamState) -> Result<Assembly> {
        let layout = state.layout();
        let mut terms = Vec::new();
        for f in &self.factors {
            for id in f.involved(state)? {
                if !layout.contains(id) {
                    return Err(Error::DanglingId(id));
                }
            }
            if let Some(t) = f.linearize(state, &self.ctx)? {
                terms.push(t);
            }
        }
        let m: usize = terms.iter().map(|t| t.value.len()).sum();
        let mut errors = DVector::zeros(m);
        let mut jacobian = DMatrix::zeros(m, layout.dim());
        let mut weight = DMatrix::zeros(m, m);
        let mut rows = Vec::with_capacity(terms.len());
        let mut row = 0;
        for t in &terms {
            let k = t.value.len();
            errors.rows_mut(row, k).copy_from(&t.value);
            weight.view_mut((row, row), (k, k)).copy_from(&t.weight);
            for (id, j) in &t.blocks {
                let off = layout.offset(*id).unwrap();
                let mut v = jacobian.view_mut((row, off), (k, id.dof()));
                v += j;
            }
            rows.push((t.kind, row, k));
            row += k;
        }
        Ok(Assembly {
            layout,
            errors,
            jacobian,
            weight,
            rows,
        })
    }

    pub fn assemble(&self) -> Result<Assembly> {
        self.assemble_at(&self.state)
    }

    pub fn normal_equations_at(&self, state: &SlamState) -> Result<NormalEquations> {
        normal_equations(&self.factors, state, &self.ctx)
    }

    /// `J = ½ Σ eᵀWe` at `state`, skipping terms that cannot be evaluated.
    pub fn cost_at(&self, state: &SlamState) -> Result<f64> {
        let mut total = 0.0;
        for f in &self.factors {
            total += f.cost(state, &self.ctx)?.unwrap_or(0.0);
        }
        Ok(total)
    }

    /// Gauss-Newton from the current estimate. The window's state is updated
    /// in place and also returned with its covariance.
    pub fn gauss_newton(&mut self) -> Result<Solution> {
        let gn = self.config.gn;
        let mut state = self.state.clone();
        let mut ne = self.normal_equations_at(&state)?;
        let initial_cost = ne.cost;
        let check_rank = !self.has_prior();
        let mut report = GnReport {
            iterations: 0,
            initial_cost,
            final_cost: initial_cost,
            last_step_norm: f64::INFINITY,
            converged: false,
        };
        let imu_dim = 15 * state.imu.len();
        // Factorization of the current `ne`, if any.
        let mut current = None;
        for _ in 0..gn.max_iters {
            report.iterations += 1;
            let fact = factorize(&ne, imu_dim, check_rank)?;
            let step = fact.solve(&ne.rhs);
            current = Some(fact);
            report.last_step_norm = step.norm();
            if report.last_step_norm < gn.step_tol {
                report.converged = true;
                break;
            }
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..=gn.max_halvings {
                let trial = state.oplus(&(&step * scale))?;
                let c = self.cost_at(&trial)?;
                if c <= ne.cost {
                    accepted = Some((trial, c));
                    break;
                }
                scale *= 0.5;
            }
            let Some((next, next_cost)) = accepted else {
                report.converged = true;
                break;
            };
            let decrease = ne.cost - next_cost;
            state = next;
            ne = self.normal_equations_at(&state)?;
            current = None;
            if decrease <= gn.cost_tol * ne.cost.max(1.0) {
                report.converged = true;
                break;
            }
        }
        report.final_cost = ne.cost;
        self.stats.dropped_terms += ne.dropped;
        let fact = match current {
            Some(f) => f,
            None => factorize(&ne, imu_dim, false)?,
        };
        let imu_covariance = fact.imu_covariance();
        self.state = state.clone();
        Ok(Solution {
            state,
            imu_covariance,
            report,
        })
    }

    /// Schur-complements the given IMU states, plus the landmarks anchored to
    /// them, out of the window. Returns the resulting prior, which replaces
    /// every factor that touched a removed variable.
    pub fn marginalize(&mut self, ids: &[StateId]) -> Result<Prior> {
        let mut removed: BTreeSet<VarId> = BTreeSet::new();
        for &id in ids {
            self.state.imu_state(id)?;
            removed.insert(VarId::Imu(id));
        }
        for (lid, z) in &self.state.landmarks {
            if ids.contains(&z.anchor) {
                removed.insert(VarId::Landmark(*lid));
            }
        }
        let mut touching = Vec::new();
        let mut keep = Vec::new();
        for f in self.factors.drain(..) {
            if f.involved(&self.state)?.iter().any(|id| removed.contains(id)) {
                touching.push(f);
            } else {
                keep.push(f);
            }
        }
        self.factors = keep;

        let mut involved: BTreeSet<VarId> = BTreeSet::new();
        for f in &touching {
            involved.extend(f.involved(&self.state)?);
        }
        let retained: Vec<VarId> = involved.difference(&removed).copied().collect();
        if retained.is_empty() {
            return Err(Error::NothingToMarginalize);
        }

        let mut local = SlamState::new(self.state.param);
        for id in &involved {
            match id {
                VarId::Imu(s) => {
                    local.imu.insert(*s, *self.state.imu_state(*s)?);
                }
                VarId::Landmark(l) => {
                    local.landmarks.insert(*l, self.state.landmarks[l]);
                }
            }
        }
        // Anchors of involved landmarks must be present to evaluate terms.
        for z in local.landmarks.values() {
            if !local.imu.contains_key(&z.anchor) {
                return Err(Error::DanglingId(VarId::Imu(z.anchor)));
            }
        }
        let ne = normal_equations(&touching, &local, &self.ctx)?;

        let layout = &ne.layout;
        let idx = |set: &mut dyn Iterator<Item = &VarId>| -> Vec<usize> {
            let mut v = Vec::new();
            for id in set {
                let o = layout.offset(*id).unwrap();
                v.extend(o..o + id.dof());
            }
            v
        };
        let r_idx = idx(&mut retained.iter());
        let m_idx = idx(&mut removed.iter().filter(|id| layout.contains(**id)));
        let sub = |rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |i, j| ne.lambda[(rows[i], cols[j])])
        };
        let l_rr = sub(&r_idx, &r_idx);
        let l_rm = sub(&r_idx, &m_idx);
        let l_mm = sub(&m_idx, &m_idx);
        let b_r = DVector::from_fn(r_idx.len(), |i, _| ne.rhs[r_idx[i]]);
        let b_m = DVector::from_fn(m_idx.len(), |i, _| ne.rhs[m_idx[i]]);

        let l_mm_inv = match l_mm.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => {
                let (inv, n) = floored_inverse(&l_mm, PIVOT_FLOOR);
                self.stats.floored_pivots += n.max(1);
                inv
            }
        };
        let k = &l_rm * &l_mm_inv;
        let info = symmetrized(&(&l_rr - &k * l_rm.transpose()));
        let b = &b_r - &k * &b_m;

        let mut mean = SlamState::new(self.state.param);
        for id in &retained {
            match id {
                VarId::Imu(s) => {
                    mean.imu.insert(*s, *self.state.imu_state(*s)?);
                }
                VarId::Landmark(l) => {
                    mean.landmarks.insert(*l, self.state.landmarks[l]);
                }
            }
        }
        // The retained block is usually rank deficient (a marginalized
        // landmark constrains only part of its observers), but `b` lies in its
        // range, so any solution of `info · s = b` reproduces the gradient.
        let offset = solve_semidefinite(&info, &b, 1e-14);
        let prior = Prior {
            point: mean,
            offset,
            info,
        };

        for id in &removed {
            match id {
                VarId::Imu(s) => {
                    self.state.imu.remove(s);
                }
                VarId::Landmark(l) => {
                    self.state.landmarks.remove(l);
                }
            }
        }
        self.factors.insert(0, Factor::Prior(prior.clone()));
        self.stats.marginalizations += 1;
        Ok(prior)
    }

    /// Adds a new IMU state with its factors, first marginalizing the oldest
    /// state if the window is full.
    pub fn slide(
        &mut self,
        id: StateId,
        x: crate::state::ImuState,
        landmarks: Vec<(crate::state::LandmarkId, crate::state::Landmark)>,
        factors: Vec<Factor>,
    ) -> Result<Option<Prior>> {
        let mut prior = None;
        if self.state.imu.len() >= self.config.window_size {
            let oldest = *self.state.imu.keys().next().unwrap();
            prior = Some(self.marginalize(&[oldest])?);
        }
        self.state.insert_imu(id, x)?;
        for (lid, z) in landmarks {
            self.state.insert_landmark(lid, z)?;
        }
        self.factors.extend(factors);
        Ok(prior)
    }
}

/// Builds dense normal equations from `factors` at `state`.
pub fn normal_equations(
    factors: &[Factor],
    state: &SlamState,
    ctx: &Context,
) -> Result<NormalEquations> {
    let layout = state.layout();
    let n = layout.dim();
    let mut lambda = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    let mut cost = 0.0;
    let mut dropped = 0;
    for f in factors {
        if let Factor::Prior(p) = f {
            cost += p.accumulate(state, &layout, &mut lambda, &mut rhs)?;
            continue;
        }
        match f.linearize(state, ctx)? {
            Some(t) => cost += factor::accumulate(&t, &layout, &mut lambda, &mut rhs)?,
            None => dropped += 1,
        }
    }
    Ok(NormalEquations {
        layout,
        lambda,
        rhs,
        cost,
        dropped,
    })
}

/// Relative eigenvalue threshold below which a direction counts as null.
pub const RANK_TOL: f64 = 1e-9;

fn rank_deficiency(lambda: &DMatrix<f64>) -> Error {
    let eig = symmetrized(lambda).symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let threshold = RANK_TOL * max.max(1.0);
    let null: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] < threshold)
        .collect();
    let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut vectors = DMatrix::zeros(lambda.nrows(), null.len());
    for (c, &i) in null.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Error::RankDeficient {
        null_count: null.len(),
        smallest,
        threshold,
        null_vectors: vectors,
    }
}

/// Cholesky factor of `Λ` with the IMU states moved to the end, so their
/// block of `Λ⁻¹` comes from the trailing factor alone.
struct Factorization {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// `order[i]` is the layout index of factored row `i`.
    order: Vec<usize>,
    imu_dim: usize,
}

impl Factorization {
    fn new(lambda: &DMatrix<f64>, imu_dim: usize) -> Option<Self> {
        let n = lambda.nrows();
        let order: Vec<usize> = (imu_dim..n).chain(0..imu_dim).collect();
        let permuted = DMatrix::from_fn(n, n, |i, j| lambda[(order[i], order[j])]);
        Some(Self {
            chol: permuted.cholesky()?,
            order,
            imu_dim,
        })
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let x = self.chol.solve(&DVector::from_fn(rhs.len(), |i, _| rhs[self.order[i]]));
        let mut out = DVector::zeros(rhs.len());
        for (i, &k) in self.order.iter().enumerate() {
            out[k] = x[i];
        }
        out
    }

    /// `(L₂₂L₂₂ᵀ)⁻¹` for the trailing IMU block `L₂₂`.
    fn imu_covariance(&self) -> DMatrix<f64> {
        let k = self.imu_dim;
        let n = self.order.len();
        let l22 = self.chol.l_dirty().view((n - k, n - k), (k, k)).lower_triangle();
        let inv = l22
            .solve_lower_triangular(&DMatrix::identity(k, k))
            .expect("Cholesky diagonal is positive");
        symmetrized(&(inv.transpose() * inv))
    }
}

/// Factors `Λ`. With `check_rank`, a near-singular `Λ` is reported even when
/// the factorization happens to succeed.
fn factorize(ne: &NormalEquations, imu_dim: usize, check_rank: bool) -> Result<Factorization> {
    if check_rank {
        let err = rank_deficiency(&ne.lambda);
        if matches!(err, Error::RankDeficient { null_count, .. } if null_count > 0) {
            return Err(err);
        }
    }
    Factorization::new(&ne.lambda, imu_dim).ok_or_else(|| rank_deficiency(&ne.lambda))
}

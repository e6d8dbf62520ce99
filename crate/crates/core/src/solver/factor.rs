use nalgebra::{DMatrix, DVector, Matrix2, Vector3};

use crate::error::{Error, Result};
use crate::imu::preint::{preint_linearize, rmi_integrate_mean};
use crate::imu::process::direct_linearize;
use crate::imu::{direct_error, preint_error, rmi_integrate, ImuMeasurement, NoiseParams};
use crate::state::{Layout, SlamState, StateId, VarId};
use crate::vision::{visual_error, CameraRig, VisualMeasurement};

/// How IMU measurements between two states enter the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImuHandling {
    /// Re-propagate the state through every sample at each linearization.
    Direct,
    /// Compare a relative motion increment against the one implied by the
    /// two states.
    Preintegrated,
}

impl ImuHandling {
    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Preintegrated => "preint",
        }
    }
}

/// Problem-wide constants needed to evaluate errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub gravity: Vector3<f64>,
    pub rig: CameraRig,
    pub noise: NoiseParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    Prior,
    ImuDirect,
    ImuPreint,
    Visual,
}

/// One linearized residual block: `e`, its weight and `∂e/∂δ` per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTerm {
    pub kind: ErrorKind,
    pub value: DVector<f64>,
    pub weight: DMatrix<f64>,
    pub blocks: Vec<(VarId, DMatrix<f64>)>,
}

impl ErrorTerm {
    pub fn involved(&self) -> impl Iterator<Item = VarId> + '_ {
        self.blocks.iter().map(|(id, _)| *id)
    }

    pub fn cost(&self) -> f64 {
        0.5 * self.value.dot(&(&self.weight * &self.value))
    }
}

/// Gaussian prior on a subset of the variables, left by marginalization.
///
/// The prior is linear in `eta(point, X)`: its mean is `point ⊕ offset` to
/// first order, and its error is `eta(point, X) + offset`. Keeping the offset
/// out of the group keeps the prior exact as a quadratic even when `offset`
/// is large along weakly informed directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    /// Linearization point `X̄_r`, holding exactly the constrained variables.
    pub point: SlamState,
    /// Mean minus linearization point, in the layout of `point`.
    pub offset: DVector<f64>,
    /// Information matrix `Σ_r⁻¹` in the layout of `point`.
    pub info: DMatrix<f64>,
}

impl Prior {
    /// Prior centred on `mean`.
    pub fn new(mean: SlamState, info: DMatrix<f64>) -> Self {
        Self {
            offset: DVector::zeros(mean.dim()),
            point: mean,
            info,
        }
    }

    pub fn ids(&self) -> Vec<VarId> {
        self.point.ids().collect()
    }

    /// `point ⊕ offset`.
    pub fn mean(&self) -> Result<SlamState> {
        self.point.oplus(&self.offset)
    }

    pub fn cov(&self) -> DMatrix<f64> {
        crate::linalg::floored_inverse(&self.info, 1e-12).0
    }

    /// Adds this prior to normal equations in `layout`. Equivalent to
    /// linearizing and accumulating, without forming the identity blocks.
    pub(crate) fn accumulate(
        &self,
        state: &SlamState,
        layout: &Layout,
        lambda: &mut DMatrix<f64>,
        rhs: &mut DVector<f64>,
    ) -> Result<f64> {
        let e = self.error(state)?;
        let we = &self.info * &e;
        let own = self.point.layout();
        let ranges = own
            .ids()
            .map(|id| {
                let to = layout.offset(id).ok_or(Error::DanglingId(id))?;
                Ok((own.offset(id).unwrap(), to, id.dof()))
            })
            .collect::<Result<Vec<_>>>()?;
        for &(pa, oa, na) in &ranges {
            let mut r = rhs.rows_mut(oa, na);
            r += we.rows(pa, na);
            for &(pb, ob, nb) in &ranges {
                let mut v = lambda.view_mut((oa, ob), (na, nb));
                v += self.info.view((pa, pb), (na, nb));
            }
        }
        Ok(0.5 * e.dot(&we))
    }

    fn error(&self, state: &SlamState) -> Result<DVector<f64>> {
        Ok(self.point.eta(&restrict(state, &self.point)?)? + &self.offset)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuFactor {
    pub from: StateId,
    pub to: StateId,
    pub samples: Vec<ImuMeasurement>,
    pub handling: ImuHandling,
    pub approximate: bool,
    /// Frozen when the factor is created.
    pub weight: DMatrix<f64>,
}

impl ImuFactor {
    /// Builds the factor, fixing its weight from the current estimate of the
    /// `from` state.
    pub fn new(
        state: &SlamState,
        from: StateId,
        to: StateId,
        samples: Vec<ImuMeasurement>,
        handling: ImuHandling,
        approximate: bool,
        ctx: &Context,
    ) -> Result<Self> {
        let x_i = state.imu_state(from)?;
        let x_j = state.imu_state(to)?;
        let weight = match handling {
            ImuHandling::Direct => {
                direct_error(x_i, x_j, &samples, &ctx.gravity, &ctx.noise, approximate)?.weight
            }
            ImuHandling::Preintegrated => {
                let rmi = rmi_integrate(&samples, &x_i.bias, x_i.param, &ctx.noise)?;
                preint_error(x_i, x_j, &rmi, &ctx.gravity, approximate)?.weight
            }
        };
        Ok(Self {
            from,
            to,
            samples,
            handling,
            approximate,
            weight: DMatrix::from_column_slice(15, 15, weight.as_slice()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualFactor {
    pub meas: VisualMeasurement,
    pub weight: DMatrix<f64>,
}

impl VisualFactor {
    pub fn new(meas: VisualMeasurement) -> Result<Self> {
        let w: Matrix2<f64> = meas.cov.try_inverse().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            meas,
            weight: DMatrix::from_column_slice(2, 2, w.as_slice()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Prior(Prior),
    Imu(ImuFactor),
    Visual(VisualFactor),
}

impl Factor {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Self::Prior(_) => ErrorKind::Prior,
            Self::Imu(f) if f.handling == ImuHandling::Direct => ErrorKind::ImuDirect,
            Self::Imu(_) => ErrorKind::ImuPreint,
            Self::Visual(_) => ErrorKind::Visual,
        }
    }

    /// Variables the factor depends on; a visual factor also depends on the
    /// landmark's anchor.
    pub fn involved(&self, state: &SlamState) -> Result<Vec<VarId>> {
        Ok(match self {
            Self::Prior(p) => p.ids(),
            Self::Imu(f) => vec![VarId::Imu(f.from), VarId::Imu(f.to)],
            Self::Visual(f) => {
                let z = state
                    .landmarks
                    .get(&f.meas.landmark)
                    .ok_or(Error::DanglingId(VarId::Landmark(f.meas.landmark)))?;
                let mut ids = vec![VarId::Imu(f.meas.state), VarId::Landmark(f.meas.landmark)];
                if z.anchor != f.meas.state {
                    ids.push(VarId::Imu(z.anchor));
                }
                ids
            }
        })
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        match self {
            Self::Prior(p) => &p.info,
            Self::Imu(f) => &f.weight,
            Self::Visual(f) => &f.weight,
        }
    }

    /// Linearizes at `state`. A visual factor whose landmark falls behind the
    /// camera yields `Ok(None)`.
    pub fn linearize(&self, state: &SlamState, ctx: &Context) -> Result<Option<ErrorTerm>> {
        let kind = self.kind();
        let dm = |m: &[f64], r: usize, c: usize| DMatrix::from_column_slice(r, c, m);
        Ok(Some(match self {
            Self::Prior(p) => {
                let value = p.error(state)?;
                let layout = p.point.layout();
                // Identity blocks: the prior is frozen at its linearization point.
                let blocks = layout
                    .ids()
                    .map(|id| {
                        let off = layout.offset(id).unwrap();
                        let mut j = DMatrix::zeros(layout.dim(), id.dof());
                        j.view_mut((off, 0), (id.dof(), id.dof()))
                            .fill_with_identity();
                        (id, -j)
                    })
                    .collect();
                ErrorTerm {
                    kind,
                    value,
                    weight: p.info.clone(),
                    blocks,
                }
            }
            Self::Imu(f) => {
                let x_i = state.imu_state(f.from)?;
                let x_j = state.imu_state(f.to)?;
                let (value, ji, jj) = match f.handling {
                    ImuHandling::Direct => {
                        direct_linearize(x_i, x_j, &f.samples, &ctx.gravity, f.approximate)?
                    }
                    ImuHandling::Preintegrated => {
                        let rmi = rmi_integrate_mean(&f.samples, &x_i.bias, x_i.param)?;
                        preint_linearize(x_i, x_j, &rmi, &ctx.gravity, f.approximate)?
                    }
                };
                ErrorTerm {
                    kind,
                    value: DVector::from_column_slice(value.as_slice()),
                    weight: f.weight.clone(),
                    blocks: vec![
                        (VarId::Imu(f.from), dm(ji.as_slice(), 15, 15)),
                        (VarId::Imu(f.to), dm(jj.as_slice(), 15, 15)),
                    ],
                }
            }
            Self::Visual(f) => {
                let lid = f.meas.landmark;
                let z = state
                    .landmarks
                    .get(&lid)
                    .ok_or(Error::DanglingId(VarId::Landmark(lid)))?;
                let anchor = state.imu_state(z.anchor)?;
                let observer = state.imu_state(f.meas.state)?;
                let (e, _, jac) = match visual_error(&f.meas, z, anchor, observer, &ctx.rig) {
                    Ok(r) => r,
                    Err(Error::BehindCamera(_)) => return Ok(None),
                    Err(err) => return Err(err),
                };
                let mut blocks = Vec::with_capacity(3);
                if z.anchor == f.meas.state {
                    let sum = jac.observer + jac.anchor;
                    blocks.push((VarId::Imu(f.meas.state), dm(sum.as_slice(), 2, 15)));
                } else {
                    blocks.push((VarId::Imu(f.meas.state), dm(jac.observer.as_slice(), 2, 15)));
                    blocks.push((VarId::Imu(z.anchor), dm(jac.anchor.as_slice(), 2, 15)));
                }
                blocks.push((VarId::Landmark(lid), dm(jac.landmark.as_slice(), 2, 3)));
                ErrorTerm {
                    kind,
                    value: DVector::from_column_slice(e.as_slice()),
                    weight: f.weight.clone(),
                    blocks,
                }
            }
        }))
    }

    /// Cost contribution `½ eᵀWe` without Jacobians; `None` if the term
    /// cannot be evaluated (landmark behind the camera).
    pub fn cost(&self, state: &SlamState, ctx: &Context) -> Result<Option<f64>> {
        let quad = |e: &[f64], w: &DMatrix<f64>| {
            let e = DVector::from_column_slice(e);
            0.5 * e.dot(&(w * &e))
        };
        Ok(Some(match self {
            Self::Prior(p) => quad(p.error(state)?.as_slice(), &p.info),
            Self::Imu(f) => {
                let x_i = state.imu_state(f.from)?;
                let x_j = state.imu_state(f.to)?;
                let e = match f.handling {
                    ImuHandling::Direct => {
                        crate::imu::propagate_recursive(x_i, &f.samples, &ctx.gravity)?
                            .eta_unchecked(x_j)
                    }
                    ImuHandling::Preintegrated => {
                        let rmi = rmi_integrate_mean(&f.samples, &x_i.bias, x_i.param)?;
                        let pred = crate::imu::rmi_predicted(x_i, x_j, rmi.dt, &ctx.gravity);
                        rmi.as_state().eta_unchecked(&pred.as_state())
                    }
                };
                quad(e.as_slice(), &f.weight)
            }
            Self::Visual(_) => match self.linearize(state, ctx)? {
                Some(t) => t.cost(),
                None => return Ok(None),
            },
        }))
    }
}

/// The part of `state` holding the same variables as `like`.
pub(crate) fn restrict(state: &SlamState, like: &SlamState) -> Result<SlamState> {
    let mut out = SlamState::new(state.param);
    for id in like.imu.keys() {
        out.imu.insert(*id, *state.imu_state(*id)?);
    }
    for id in like.landmarks.keys() {
        let z = state
            .landmarks
            .get(id)
            .ok_or(Error::DanglingId(VarId::Landmark(*id)))?;
        out.landmarks.insert(*id, *z);
    }
    Ok(out)
}

/// Adds `HᵀWH` and `−HᵀWe` of one term into dense normal equations laid out
/// by `layout`. Returns the term's cost.
pub(crate) fn accumulate(
    term: &ErrorTerm,
    layout: &Layout,
    lambda: &mut DMatrix<f64>,
    rhs: &mut DVector<f64>,
) -> Result<f64> {
    let we = &term.weight * &term.value;
    let wj: Vec<DMatrix<f64>> = term.blocks.iter().map(|(_, j)| &term.weight * j).collect();
    for (a, (ida, ja)) in term.blocks.iter().enumerate() {
        let oa = layout.offset(*ida).ok_or(Error::DanglingId(*ida))?;
        let mut r = rhs.rows_mut(oa, ida.dof());
        r -= ja.tr_mul(&we);
        for (b, (idb, _)) in term.blocks.iter().enumerate().skip(a) {
            let ob = layout.offset(*idb).ok_or(Error::DanglingId(*idb))?;
            let block = ja.tr_mul(&wj[b]);
            if b != a {
                let mut vt = lambda.view_mut((ob, oa), (idb.dof(), ida.dof()));
                vt += block.transpose();
            }
            let mut v = lambda.view_mut((oa, ob), (ida.dof(), idb.dof()));
            v += block;
        }
    }
    Ok(term.cost())
}

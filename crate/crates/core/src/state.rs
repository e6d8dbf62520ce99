//! IMU and landmark states, the composite window state, and the transformation
//! along the four unobservable directions (rotation about gravity and global
//! translation).
//!
//! Increments are applied on the left: `X ⊕ δ = Exp(δ)·X` for the group parts
//! and plain addition elsewhere, so that `eta(oplus(X, δ), X) = δ` exactly.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::lie::se23;
use crate::vision::Extrinsics;
use crate::{ExtendedPose, Rotation};

pub type Vector15 = SVector<f64, 15>;
pub type Matrix15 = SMatrix<f64, 15, 15>;
pub type Matrix15x4 = SMatrix<f64, 15, 4>;

pub const IMU_DOF: usize = 15;
pub const LANDMARK_DOF: usize = 3;

/// Smallest inverse depth an increment may produce.
pub const MIN_INVERSE_DEPTH: f64 = 1e-6;

/// How orientation, velocity and position are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parameterization {
    /// SO(3) × ℝ³ × ℝ³ × ℝ⁶ with component-wise differences.
    Separate,
    /// SE₂(3) × ℝ⁶ with the right-invariant difference on the navigation part.
    Grouped,
}

impl Parameterization {
    pub fn name(self) -> &'static str {
        match self {
            Self::Separate => "separate",
            Self::Grouped => "grouped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LandmarkId(pub u64);

/// Any estimated variable. IMU states order before landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarId {
    Imu(StateId),
    Landmark(LandmarkId),
}

impl VarId {
    pub fn dof(self) -> usize {
        match self {
            Self::Imu(_) => IMU_DOF,
            Self::Landmark(_) => LANDMARK_DOF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CameraSide {
    Left,
    Right,
}

/// Rotation `phi` (scaled by the gravity vector) about gravity plus a global
/// translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnobservableDirection {
    pub phi: f64,
    pub translation: Vector3<f64>,
}

impl UnobservableDirection {
    pub fn zero() -> Self {
        Self {
            phi: 0.0,
            translation: Vector3::zeros(),
        }
    }

    pub fn from_vector(tau: &SVector<f64, 4>) -> Self {
        Self {
            phi: tau[0],
            translation: Vector3::new(tau[1], tau[2], tau[3]),
        }
    }

    fn rotation(&self, gravity: &Vector3<f64>) -> Rotation {
        Rotation::exp(&(gravity * self.phi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuState {
    pub param: Parameterization,
    pub pose: ExtendedPose,
    /// `[b_g; b_a]`
    pub bias: Vector6<f64>,
}

impl ImuState {
    pub fn new(param: Parameterization, pose: ExtendedPose, bias: Vector6<f64>) -> Self {
        Self { param, pose, bias }
    }

    pub fn rotation(&self) -> &Rotation {
        &self.pose.rotation
    }

    pub fn velocity(&self) -> &Vector3<f64> {
        &self.pose.velocity
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.pose.position
    }

    pub fn gyro_bias(&self) -> Vector3<f64> {
        self.bias.fixed_rows::<3>(0).into_owned()
    }

    pub fn accel_bias(&self) -> Vector3<f64> {
        self.bias.fixed_rows::<3>(3).into_owned()
    }

    pub fn with_param(mut self, param: Parameterization) -> Self {
        self.param = param;
        self
    }

    /// `self ⊖ other`, with `self` playing the role of the reference (barred)
    /// state.
    pub fn eta(&self, other: &ImuState) -> Result<Vector15> {
        if self.param != other.param {
            return Err(Error::ParameterizationMismatch);
        }
        Ok(self.eta_unchecked(other))
    }

    pub(crate) fn eta_unchecked(&self, other: &ImuState) -> Vector15 {
        let nav = match self.param {
            Parameterization::Separate => se23::join(
                &(self.pose.rotation * other.pose.rotation.transpose()).log(),
                &(self.pose.velocity - other.pose.velocity),
                &(self.pose.position - other.pose.position),
            ),
            Parameterization::Grouped => (self.pose * other.pose.inverse()).log(),
        };
        stack(&nav, &(self.bias - other.bias))
    }

    pub fn oplus(&self, d: &Vector15) -> ImuState {
        let nav: se23::Vector9<f64> = d.fixed_rows::<9>(0).into_owned();
        let pose = match self.param {
            Parameterization::Separate => {
                let (phi, dv, dr) = se23::split(&nav);
                ExtendedPose::new(
                    Rotation::exp(&phi) * self.pose.rotation,
                    self.pose.velocity + dv,
                    self.pose.position + dr,
                )
            }
            Parameterization::Grouped => ExtendedPose::exp(&nav) * self.pose,
        };
        ImuState::new(self.param, pose, self.bias + d.fixed_rows::<6>(9))
    }

    /// `(C_T C, C_T v, C_T r + r_T, b)` with `C_T = Exp(g φ_T)`.
    pub fn transform_unobservable(
        &self,
        tau: &UnobservableDirection,
        gravity: &Vector3<f64>,
    ) -> ImuState {
        let ct = tau.rotation(gravity);
        let pose = ExtendedPose::new(
            ct * self.pose.rotation,
            ct * self.pose.velocity,
            ct * self.pose.position + tau.translation,
        );
        ImuState::new(self.param, pose, self.bias)
    }

    /// Derivative of `eta(X̄, T(X̄, −δτ))` with respect to `δτ`; the sign
    /// matches the usual presentation with `+g` in the first column.
    pub fn nullspace_block(&self, gravity: &Vector3<f64>) -> Matrix15x4 {
        let mut n = Matrix15x4::zeros();
        n.fixed_view_mut::<3, 1>(0, 0).copy_from(gravity);
        n.fixed_view_mut::<3, 3>(6, 1)
            .copy_from(&nalgebra::Matrix3::identity());
        if self.param == Parameterization::Separate {
            n.fixed_view_mut::<3, 1>(3, 0)
                .copy_from(&(-self.pose.velocity.cross(gravity)));
            n.fixed_view_mut::<3, 1>(6, 0)
                .copy_from(&(-self.pose.position.cross(gravity)));
        }
        n
    }
}

pub(crate) fn stack(nav: &se23::Vector9<f64>, bias: &Vector6<f64>) -> Vector15 {
    let mut v = Vector15::zeros();
    v.fixed_rows_mut::<9>(0).copy_from(nav);
    v.fixed_rows_mut::<6>(9).copy_from(bias);
    v
}

/// Anchored inverse-depth landmark: direction `[α, β, 1]` and inverse depth
/// `λ` in the anchor state's camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub anchor: StateId,
    pub anchor_camera: CameraSide,
}

impl Landmark {
    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.alpha, self.beta, self.lambda)
    }

    /// Landmarks are untouched by the unobservable transformation.
    pub fn transform_unobservable(&self, _tau: &UnobservableDirection) -> Landmark {
        *self
    }

    pub fn eta(&self, other: &Landmark) -> Vector3<f64> {
        self.coords() - other.coords()
    }

    /// Additive increment. Returns the landmark and whether `λ` had to be
    /// clamped to [`MIN_INVERSE_DEPTH`].
    pub fn oplus(&self, d: &Vector3<f64>) -> (Landmark, bool) {
        let mut z = *self;
        z.alpha += d.x;
        z.beta += d.y;
        z.lambda += d.z;
        let clamped = z.lambda < MIN_INVERSE_DEPTH;
        if clamped {
            z.lambda = MIN_INVERSE_DEPTH;
        }
        (z, clamped)
    }
}

/// World position `C_i(C_bc (1/λ)[α, β, 1]ᵀ + t) + r_i` of a landmark anchored
/// at `anchor`.
pub fn landmark_to_world(
    z: &Landmark,
    anchor: &ImuState,
    extrinsics: &Extrinsics,
) -> Result<Vector3<f64>> {
    if z.lambda <= 0.0 {
        return Err(Error::NonPositiveInverseDepth(z.lambda));
    }
    let p_c = Vector3::new(z.alpha, z.beta, 1.0) / z.lambda;
    Ok(anchor.pose.rotation * (extrinsics.rotation * p_c + extrinsics.translation)
        + anchor.pose.position)
}

/// Offsets of each variable inside stacked vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    entries: BTreeMap<VarId, usize>,
    dim: usize,
}

impl Layout {
    pub fn new(ids: impl IntoIterator<Item = VarId>) -> Self {
        let mut entries = BTreeMap::new();
        for id in ids {
            entries.insert(id, 0);
        }
        let mut dim = 0;
        for (id, offset) in entries.iter_mut() {
            *offset = dim;
            dim += id.dof();
        }
        Self { entries, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self, id: VarId) -> Option<usize> {
        self.entries.get(&id).copied()
    }

    pub fn contains(&self, id: VarId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// All variables of a window: IMU states and landmarks, each in ascending id
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SlamState {
    pub param: Parameterization,
    pub imu: BTreeMap<StateId, ImuState>,
    pub landmarks: BTreeMap<LandmarkId, Landmark>,
    /// Number of increments that hit the inverse-depth floor.
    pub clamp_count: usize,
}

impl SlamState {
    pub fn new(param: Parameterization) -> Self {
        Self {
            param,
            imu: BTreeMap::new(),
            landmarks: BTreeMap::new(),
            clamp_count: 0,
        }
    }

    pub fn insert_imu(&mut self, id: StateId, x: ImuState) -> Result<()> {
        if x.param != self.param {
            return Err(Error::ParameterizationMismatch);
        }
        self.imu.insert(id, x);
        Ok(())
    }

    pub fn insert_landmark(&mut self, id: LandmarkId, z: Landmark) -> Result<()> {
        if !self.imu.contains_key(&z.anchor) {
            return Err(Error::UnknownState(z.anchor));
        }
        if z.lambda <= 0.0 {
            return Err(Error::NonPositiveInverseDepth(z.lambda));
        }
        self.landmarks.insert(id, z);
        Ok(())
    }

    pub fn imu_state(&self, id: StateId) -> Result<&ImuState> {
        self.imu.get(&id).ok_or(Error::UnknownState(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        self.imu
            .keys()
            .map(|&id| VarId::Imu(id))
            .chain(self.landmarks.keys().map(|&id| VarId::Landmark(id)))
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.ids())
    }

    pub fn dim(&self) -> usize {
        self.imu.len() * IMU_DOF + self.landmarks.len() * LANDMARK_DOF
    }

    /// Checks that every anchor exists and all IMU states share the tag.
    pub fn validate(&self) -> Result<()> {
        if self.imu.values().any(|x| x.param != self.param) {
            return Err(Error::ParameterizationMismatch);
        }
        for z in self.landmarks.values() {
            if !self.imu.contains_key(&z.anchor) {
                return Err(Error::UnknownState(z.anchor));
            }
        }
        Ok(())
    }

    fn same_variables(&self, other: &SlamState) -> Result<()> {
        if self.param != other.param {
            return Err(Error::ParameterizationMismatch);
        }
        if !self.imu.keys().eq(other.imu.keys()) || !self.landmarks.keys().eq(other.landmarks.keys())
        {
            return Err(Error::LayoutMismatch(
                "states hold different variable ids".into(),
            ));
        }
        Ok(())
    }

    /// Block-stacked `eta`, `self` being the reference.
    pub fn eta(&self, other: &SlamState) -> Result<DVector<f64>> {
        self.same_variables(other)?;
        let mut out = DVector::zeros(self.dim());
        let mut row = 0;
        for (a, b) in self.imu.values().zip(other.imu.values()) {
            out.fixed_rows_mut::<IMU_DOF>(row)
                .copy_from(&a.eta_unchecked(b));
            row += IMU_DOF;
        }
        for (a, b) in self.landmarks.values().zip(other.landmarks.values()) {
            out.fixed_rows_mut::<LANDMARK_DOF>(row).copy_from(&a.eta(b));
            row += LANDMARK_DOF;
        }
        Ok(out)
    }

    pub fn oplus(&self, d: &DVector<f64>) -> Result<SlamState> {
        if d.len() != self.dim() {
            return Err(Error::LayoutMismatch(format!(
                "increment has {} entries, state has {}",
                d.len(),
                self.dim()
            )));
        }
        let mut out = self.clone();
        let mut row = 0;
        for x in out.imu.values_mut() {
            *x = x.oplus(&d.fixed_rows::<IMU_DOF>(row).into_owned());
            row += IMU_DOF;
        }
        for z in out.landmarks.values_mut() {
            let (next, clamped) = z.oplus(&d.fixed_rows::<LANDMARK_DOF>(row).into_owned());
            *z = next;
            out.clamp_count += clamped as usize;
            row += LANDMARK_DOF;
        }
        Ok(out)
    }

    pub fn transform_unobservable(
        &self,
        tau: &UnobservableDirection,
        gravity: &Vector3<f64>,
    ) -> SlamState {
        let mut out = self.clone();
        for x in out.imu.values_mut() {
            *x = x.transform_unobservable(tau, gravity);
        }
        for z in out.landmarks.values_mut() {
            *z = z.transform_unobservable(tau);
        }
        out
    }

    /// Stacked null space, `dim × 4`; landmark rows are zero.
    pub fn nullspace(&self, gravity: &Vector3<f64>) -> DMatrix<f64> {
        let mut n = DMatrix::zeros(self.dim(), 4);
        for (k, x) in self.imu.values().enumerate() {
            n.fixed_view_mut::<IMU_DOF, 4>(k * IMU_DOF, 0)
                .copy_from(&x.nullspace_block(gravity));
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(param: Parameterization) -> ImuState {
        let pose = ExtendedPose::new(
            Rotation::exp(&Vector3::new(0.3, -0.2, 1.1)),
            Vector3::new(1.0, -0.5, 0.2),
            Vector3::new(3.0, 2.0, -1.0),
        );
        ImuState::new(param, pose, Vector6::new(0.01, -0.02, 0.0, 0.1, 0.0, -0.1))
    }

    #[test]
    fn eta_of_self_is_zero() {
        for p in [Parameterization::Separate, Parameterization::Grouped] {
            let x = sample(p);
            assert!(x.eta(&x).unwrap().amax() < 1e-14);
        }
    }

    #[test]
    fn eta_rejects_mixed_tags() {
        let a = sample(Parameterization::Separate);
        let b = sample(Parameterization::Grouped);
        assert!(matches!(a.eta(&b), Err(Error::ParameterizationMismatch)));
    }

    #[test]
    fn oplus_then_eta_returns_increment() {
        let d = Vector15::from_fn(|i, _| 0.03 * (i as f64 - 7.0));
        for p in [Parameterization::Separate, Parameterization::Grouped] {
            let x = sample(p);
            assert_relative_eq!(x.oplus(&d).eta(&x).unwrap(), d, epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_with_zero_is_identity() {
        let g = Vector3::new(0.0, 0.0, -9.81);
        let x = sample(Parameterization::Grouped);
        assert_eq!(x.transform_unobservable(&UnobservableDirection::zero(), &g), x);
    }

    #[test]
    fn landmark_on_optical_axis() {
        let anchor = ImuState::new(
            Parameterization::Separate,
            ExtendedPose::identity(),
            Vector6::zeros(),
        );
        let ext = Extrinsics::identity();
        let mut z = Landmark {
            alpha: 0.0,
            beta: 0.0,
            lambda: 1.0,
            anchor: StateId(0),
            anchor_camera: CameraSide::Left,
        };
        assert_eq!(landmark_to_world(&z, &anchor, &ext).unwrap(), Vector3::new(0.0, 0.0, 1.0));
        z.lambda = 0.5;
        assert_eq!(landmark_to_world(&z, &anchor, &ext).unwrap(), Vector3::new(0.0, 0.0, 2.0));
        z.lambda = 0.0;
        assert!(landmark_to_world(&z, &anchor, &ext).is_err());
    }

    #[test]
    fn stacked_nullspace_has_zero_landmark_rows() {
        let g = Vector3::new(0.0, 0.0, -9.81);
        let mut s = SlamState::new(Parameterization::Separate);
        s.insert_imu(StateId(0), sample(Parameterization::Separate)).unwrap();
        s.insert_imu(StateId(1), sample(Parameterization::Separate)).unwrap();
        s.insert_landmark(
            LandmarkId(0),
            Landmark {
                alpha: 0.1,
                beta: 0.2,
                lambda: 0.3,
                anchor: StateId(0),
                anchor_camera: CameraSide::Left,
            },
        )
        .unwrap();
        let n = s.nullspace(&g);
        assert_eq!(n.shape(), (33, 4));
        assert!(n.rows(30, 3).iter().all(|&v| v == 0.0));
    }
}

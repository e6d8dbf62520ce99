use nalgebra::{SMatrix, Vector3, Vector6};

use super::process::step_jacobians;
use super::{error_jacobian_inv, propagate_cov, ImuMeasurement, ImuResidual, NoiseParams, WEIGHT_FLOOR};
use crate::error::{Error, Result};
use crate::lie::so3::wedge;
use crate::linalg::floored_inverse_static;
use crate::state::{ImuState, Matrix15, Parameterization, Vector15};
use crate::{ExtendedPose, Rotation};

/// Relative motion increment between two states.
///
/// The increment is stored in the same parameterization as the states it
/// connects, and perturbed the same way, so `cov` and `bias_jacobian` live
/// in that tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct Rmi {
    pub param: Parameterization,
    pub delta: ExtendedPose,
    /// Zero for a measured increment; `b_j − b_i` for a predicted one.
    pub delta_b: Vector6<f64>,
    pub dt: f64,
    /// Bias the measurements were corrected with.
    pub bias_lin: Vector6<f64>,
    pub cov: Matrix15,
    /// Response of the navigation part to a change of `bias_lin`.
    pub bias_jacobian: SMatrix<f64, 9, 6>,
}

impl Rmi {
    pub fn new(param: Parameterization, bias_lin: Vector6<f64>) -> Self {
        Self {
            param,
            delta: ExtendedPose::identity(),
            delta_b: Vector6::zeros(),
            dt: 0.0,
            bias_lin,
            cov: Matrix15::zeros(),
            bias_jacobian: SMatrix::zeros(),
        }
    }

    pub fn delta_c(&self) -> &Rotation {
        &self.delta.rotation
    }

    pub fn delta_v(&self) -> &Vector3<f64> {
        &self.delta.velocity
    }

    pub fn delta_r(&self) -> &Vector3<f64> {
        &self.delta.position
    }

    pub(crate) fn as_state(&self) -> ImuState {
        ImuState::new(self.param, self.delta, self.delta_b)
    }
}

/// Adds one sample to the increment. The increment behaves like an IMU state
/// that starts at identity and is propagated without gravity, using the
/// frozen bias `bias_lin`.
pub fn rmi_accumulate(rmi: &Rmi, u: &ImuMeasurement, dt: f64, noise: &NoiseParams) -> Result<Rmi> {
    if dt <= 0.0 {
        return Err(Error::NonPositiveStep(dt));
    }
    let zero_g = Vector3::zeros();
    let s = ImuState::new(rmi.param, rmi.delta, rmi.bias_lin);
    let step = step_jacobians(&s, u, dt, &zero_g);
    let next = super::propagate_one_step(&s, u, dt, &zero_g)?;
    let f_nn = step.f.fixed_view::<9, 9>(0, 0);
    let f_nb = step.f.fixed_view::<9, 6>(0, 9);
    Ok(Rmi {
        param: rmi.param,
        delta: next.pose,
        delta_b: Vector6::zeros(),
        dt: rmi.dt + dt,
        bias_lin: rmi.bias_lin,
        cov: propagate_cov(&rmi.cov, &step, &noise.discrete(dt)),
        bias_jacobian: f_nn * rmi.bias_jacobian + f_nb,
    })
}

/// Accumulates a whole sequence from a fresh increment.
pub fn rmi_integrate(
    seq: &[ImuMeasurement],
    bias_lin: &Vector6<f64>,
    param: Parameterization,
    noise: &NoiseParams,
) -> Result<Rmi> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    seq.iter()
        .try_fold(Rmi::new(param, *bias_lin), |acc, u| rmi_accumulate(&acc, u, u.dt, noise))
}

/// Like [`rmi_integrate`] but skips the covariance; used when only the mean
/// and bias Jacobian are needed.
pub(crate) fn rmi_integrate_mean(
    seq: &[ImuMeasurement],
    bias_lin: &Vector6<f64>,
    param: Parameterization,
) -> Result<Rmi> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let zero_g = Vector3::zeros();
    let mut rmi = Rmi::new(param, *bias_lin);
    for u in seq {
        let s = ImuState::new(param, rmi.delta, rmi.bias_lin);
        let step = step_jacobians(&s, u, u.dt, &zero_g);
        let next = super::propagate_one_step(&s, u, u.dt, &zero_g)?;
        rmi.bias_jacobian =
            step.f.fixed_view::<9, 9>(0, 0) * rmi.bias_jacobian + step.f.fixed_view::<9, 6>(0, 9);
        rmi.delta = next.pose;
        rmi.dt += u.dt;
    }
    Ok(rmi)
}

/// The increment implied by two states:
///
/// ```text
/// ΔC = C_iᵀ C_j
/// Δv = C_iᵀ (v_j − v_i − g Δt)
/// Δr = C_iᵀ (r_j − r_i − v_i Δt − ½ g Δt²)
/// Δb = b_j − b_i
/// ```
pub fn rmi_predicted(x_i: &ImuState, x_j: &ImuState, dt: f64, gravity: &Vector3<f64>) -> Rmi {
    let ct = x_i.rotation().transpose();
    let delta = ExtendedPose::new(
        ct * *x_j.rotation(),
        ct * (x_j.velocity() - x_i.velocity() - gravity * dt),
        ct * (x_j.position() - x_i.position() - x_i.velocity() * dt - gravity * (0.5 * dt * dt)),
    );
    Rmi {
        param: x_i.param,
        delta,
        delta_b: x_j.bias - x_i.bias,
        dt,
        bias_lin: x_i.bias,
        cov: Matrix15::zeros(),
        bias_jacobian: SMatrix::zeros(),
    }
}

/// Jacobians of [`rmi_predicted`] with respect to `X_i` and `X_j`.
fn predicted_jacobians(x_i: &ImuState, rmi: &Rmi, gravity: &Vector3<f64>) -> (Matrix15, Matrix15) {
    let dt = rmi.dt;
    let ct = x_i.rotation().transpose();
    let ctm = *ct.matrix();
    let i6 = SMatrix::<f64, 6, 6>::identity();
    let mut ji = Matrix15::zeros();
    let mut jj = Matrix15::zeros();
    ji.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-ctm));
    ji.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-ctm));
    ji.fixed_view_mut::<3, 3>(6, 3).copy_from(&(-ctm * dt));
    ji.fixed_view_mut::<3, 3>(6, 6).copy_from(&(-ctm));
    ji.fixed_view_mut::<6, 6>(9, 9).copy_from(&(-i6));
    jj.fixed_view_mut::<3, 3>(0, 0).copy_from(&ctm);
    jj.fixed_view_mut::<3, 3>(3, 3).copy_from(&ctm);
    jj.fixed_view_mut::<3, 3>(6, 6).copy_from(&ctm);
    jj.fixed_view_mut::<6, 6>(9, 9).copy_from(&i6);
    let (vi, ri) = (*x_i.velocity(), *x_i.position());
    match x_i.param {
        Parameterization::Separate => {
            let c = x_i.rotation().matrix();
            ji.fixed_view_mut::<3, 3>(3, 0)
                .copy_from(&(ctm * wedge(&(c * rmi.delta_v()))));
            ji.fixed_view_mut::<3, 3>(6, 0)
                .copy_from(&(ctm * wedge(&(c * rmi.delta_r()))));
        }
        Parameterization::Grouped => {
            ji.fixed_view_mut::<3, 3>(3, 0).copy_from(&(ctm * wedge(&vi)));
            ji.fixed_view_mut::<3, 3>(6, 0)
                .copy_from(&(ctm * wedge(&(ri + vi * dt))));
            jj.fixed_view_mut::<3, 3>(3, 0)
                .copy_from(&(-ctm * wedge(&(vi + gravity * dt))));
            jj.fixed_view_mut::<3, 3>(6, 0)
                .copy_from(&(-ctm * wedge(&(ri + vi * dt + gravity * (0.5 * dt * dt)))));
        }
    }
    (ji, jj)
}

/// Preintegration error `e = eta(ΔX_Y, ΔX_X(X_i, X_j))` with weight `Σ_ij⁻¹`.
///
/// The measured increment is used as given; its bias Jacobian supplies the
/// dependence on `b_i`.
pub fn preint_error(
    x_i: &ImuState,
    x_j: &ImuState,
    measured: &Rmi,
    gravity: &Vector3<f64>,
    approximate: bool,
) -> Result<ImuResidual> {
    let (value, jac_i, jac_j) = preint_linearize(x_i, x_j, measured, gravity, approximate)?;
    Ok(ImuResidual {
        value,
        weight: floored_inverse_static(&measured.cov, WEIGHT_FLOOR),
        jac_i,
        jac_j,
    })
}

pub(crate) fn preint_linearize(
    x_i: &ImuState,
    x_j: &ImuState,
    measured: &Rmi,
    gravity: &Vector3<f64>,
    approximate: bool,
) -> Result<(Vector15, Matrix15, Matrix15)> {
    if x_i.param != x_j.param || measured.param != x_i.param {
        return Err(Error::ParameterizationMismatch);
    }
    let predicted = rmi_predicted(x_i, x_j, measured.dt, gravity);
    let value = measured.as_state().eta_unchecked(&predicted.as_state());
    let (dx_i, dx_j) = predicted_jacobians(x_i, &predicted, gravity);
    let j_y = error_jacobian_inv(x_i.param, &value, approximate);
    let j_x = error_jacobian_inv(x_i.param, &(-value), approximate);
    let mut dy_i = Matrix15::zeros();
    dy_i.fixed_view_mut::<9, 6>(0, 9)
        .copy_from(&measured.bias_jacobian);
    Ok((value, j_y * dy_i - j_x * dx_i, -(j_x * dx_j)))
}

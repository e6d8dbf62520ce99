use nalgebra::{Matrix3, SMatrix, Vector3};

use super::{error_jacobian_inv, propagate_cov, ImuMeasurement, ImuResidual, NoiseParams, WEIGHT_FLOOR};
use crate::error::{Error, Result};
use crate::lie::so3::{self, wedge};
use crate::linalg::floored_inverse_static;
use crate::state::{ImuState, Matrix15, Parameterization, Vector15};
use crate::{ExtendedPose, Rotation};

/// Linearization of one propagation step: state Jacobian `F` and the
/// Jacobian `G` with respect to `[w_g; w_a; w_bg; w_ba]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepJacobians {
    pub f: Matrix15,
    pub g: SMatrix<f64, 15, 12>,
}

/// Noise-free one-step model:
///
/// ```text
/// C' = C Exp(T(u_g − b_g))
/// v' = v + T(C(u_a − b_a) + g)
/// r' = r + T v + ½T²(C(u_a − b_a) + g)
/// b' = b
/// ```
pub fn propagate_one_step(x: &ImuState, u: &ImuMeasurement, dt: f64, gravity: &Vector3<f64>) -> Result<ImuState> {
    if dt <= 0.0 {
        return Err(Error::NonPositiveStep(dt));
    }
    Ok(step_unchecked(x, u, dt, gravity))
}

fn step_unchecked(x: &ImuState, u: &ImuMeasurement, dt: f64, gravity: &Vector3<f64>) -> ImuState {
    let omega = u.gyro - x.gyro_bias();
    let acc = x.rotation() * (u.accel - x.accel_bias()) + gravity;
    let pose = ExtendedPose::new(
        *x.rotation() * Rotation::exp(&(omega * dt)),
        x.velocity() + acc * dt,
        x.position() + x.velocity() * dt + acc * (0.5 * dt * dt),
    );
    ImuState::new(x.param, pose, x.bias)
}

/// Folds [`propagate_one_step`] over `seq`, each sample held for its `dt`.
pub fn propagate_recursive(x: &ImuState, seq: &[ImuMeasurement], gravity: &Vector3<f64>) -> Result<ImuState> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    seq.iter()
        .try_fold(*x, |acc, u| propagate_one_step(&acc, u, u.dt, gravity))
}

/// Jacobian of the one-step model, evaluated at the pre-step state `x`.
pub fn process_jacobian(x: &ImuState, u: &ImuMeasurement, dt: f64, gravity: &Vector3<f64>) -> Matrix15 {
    step_jacobians(x, u, dt, gravity).f
}

pub(crate) fn step_jacobians(x: &ImuState, u: &ImuMeasurement, dt: f64, gravity: &Vector3<f64>) -> StepJacobians {
    let t = dt;
    let half_t2 = 0.5 * t * t;
    let c = *x.rotation().matrix();
    let omega = u.gyro - x.gyro_bias();
    let acc_body = u.accel - x.accel_bias();
    let i3 = Matrix3::identity();

    // Rotation response to a gyro-bias increment: δφ' = −T C J_ℓ(Tω) δb_g.
    let d_phi_d_bg = -(c * so3::left_jacobian(&(omega * t))) * t;
    let d_bias_a = -c * t;
    let d_bias_a_r = -c * half_t2;

    let mut f = Matrix15::identity();
    f.fixed_view_mut::<3, 3>(0, 9).copy_from(&d_phi_d_bg);
    match x.param {
        Parameterization::Separate => {
            let ca = wedge(&(c * acc_body));
            f.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-ca * t));
            f.fixed_view_mut::<3, 3>(6, 0).copy_from(&(-ca * half_t2));
            f.fixed_view_mut::<3, 3>(6, 3).copy_from(&(i3 * t));
            f.fixed_view_mut::<3, 3>(3, 12).copy_from(&d_bias_a);
            f.fixed_view_mut::<3, 3>(6, 12).copy_from(&d_bias_a_r);
        }
        Parameterization::Grouped => {
            let next = step_unchecked(x, u, dt, gravity);
            let gw = wedge(gravity);
            f.fixed_view_mut::<3, 3>(3, 0).copy_from(&(gw * t));
            f.fixed_view_mut::<3, 3>(6, 0).copy_from(&(gw * half_t2));
            f.fixed_view_mut::<3, 3>(6, 3).copy_from(&(i3 * t));
            // A left rotation increment also moves v' and r' by (·)^∧ terms.
            f.fixed_view_mut::<3, 3>(3, 9)
                .copy_from(&(wedge(next.velocity()) * d_phi_d_bg));
            f.fixed_view_mut::<3, 3>(6, 9)
                .copy_from(&(wedge(next.position()) * d_phi_d_bg));
            f.fixed_view_mut::<3, 3>(3, 12).copy_from(&d_bias_a);
            f.fixed_view_mut::<3, 3>(6, 12).copy_from(&d_bias_a_r);
        }
    }

    let mut g = SMatrix::<f64, 15, 12>::zeros();
    g.fixed_view_mut::<9, 6>(0, 0)
        .copy_from(&f.fixed_view::<9, 6>(0, 9));
    g.fixed_view_mut::<6, 6>(9, 6)
        .copy_from(&(SMatrix::<f64, 6, 6>::identity() * t));
    StepJacobians { f, g }
}

/// Propagates through `seq`, returning the final state, the chained Jacobian
/// `D f_ij / D X_i` and the accumulated covariance of the propagated state.
pub fn propagate_with_jacobians(
    x: &ImuState,
    seq: &[ImuMeasurement],
    gravity: &Vector3<f64>,
    noise: &NoiseParams,
) -> Result<(ImuState, Matrix15, Matrix15)> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut state = *x;
    let mut chain = Matrix15::identity();
    let mut cov = Matrix15::zeros();
    for u in seq {
        if u.dt <= 0.0 {
            return Err(Error::NonPositiveStep(u.dt));
        }
        let step = step_jacobians(&state, u, u.dt, gravity);
        cov = propagate_cov(&cov, &step, &noise.discrete(u.dt));
        chain = step.f * chain;
        state = step_unchecked(&state, u, u.dt, gravity);
    }
    Ok((state, chain, cov))
}

/// Direct-integration error `e = eta(f_ij(X_i), X_j)` with weight `Σ_ij⁻¹`.
pub fn direct_error(
    x_i: &ImuState,
    x_j: &ImuState,
    seq: &[ImuMeasurement],
    gravity: &Vector3<f64>,
    noise: &NoiseParams,
    approximate: bool,
) -> Result<ImuResidual> {
    if x_i.param != x_j.param {
        return Err(Error::ParameterizationMismatch);
    }
    let (_, _, cov) = propagate_with_jacobians(x_i, seq, gravity, noise)?;
    let (value, jac_i, jac_j) = direct_linearize(x_i, x_j, seq, gravity, approximate)?;
    Ok(ImuResidual {
        value,
        weight: floored_inverse_static(&cov, WEIGHT_FLOOR),
        jac_i,
        jac_j,
    })
}

pub(crate) fn direct_linearize(
    x_i: &ImuState,
    x_j: &ImuState,
    seq: &[ImuMeasurement],
    gravity: &Vector3<f64>,
    approximate: bool,
) -> Result<(Vector15, Matrix15, Matrix15)> {
    if x_i.param != x_j.param {
        return Err(Error::ParameterizationMismatch);
    }
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut predicted = *x_i;
    let mut chain = Matrix15::identity();
    for u in seq {
        if u.dt <= 0.0 {
            return Err(Error::NonPositiveStep(u.dt));
        }
        chain = step_jacobians(&predicted, u, u.dt, gravity).f * chain;
        predicted = step_unchecked(&predicted, u, u.dt, gravity);
    }
    let value = predicted.eta_unchecked(x_j);
    let jac_i = error_jacobian_inv(x_i.param, &value, approximate) * chain;
    let jac_j = -error_jacobian_inv(x_i.param, &(-value), approximate);
    Ok((value, jac_i, jac_j))
}

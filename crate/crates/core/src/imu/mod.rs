//! IMU measurement model, one-step and recursive propagation, preintegrated
//! relative motion increments, and the two IMU error terms.

pub(crate) mod preint;
pub(crate) mod process;

pub use preint::{preint_error, rmi_accumulate, rmi_integrate, rmi_predicted, Rmi};
pub use process::{
    direct_error, process_jacobian, propagate_one_step, propagate_recursive, propagate_with_jacobians,
    StepJacobians,
};

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::lie::{se23, so3};
use crate::state::{Matrix15, Parameterization, Vector15};

pub type Matrix12 = SMatrix<f64, 12, 12>;

/// One IMU sample, held constant for `dt` seconds starting at `stamp`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuMeasurement {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub stamp: f64,
    pub dt: f64,
}

/// Continuous-time noise densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub gyro_psd: Matrix3<f64>,
    pub accel_psd: Matrix3<f64>,
    pub gyro_walk_psd: Matrix3<f64>,
    pub accel_walk_psd: Matrix3<f64>,
    pub camera_pixel_sigma: f64,
}

impl NoiseParams {
    /// Per-axis densities (`σ`, so the PSD is `σ²·I`).
    pub fn isotropic(gyro: f64, accel: f64, gyro_walk: f64, accel_walk: f64, pixel: f64) -> Self {
        let m = |s: f64| Matrix3::identity() * (s * s);
        Self {
            gyro_psd: m(gyro),
            accel_psd: m(accel),
            gyro_walk_psd: m(gyro_walk),
            accel_walk_psd: m(accel_walk),
            camera_pixel_sigma: pixel,
        }
    }

    pub fn zero() -> Self {
        Self::isotropic(0.0, 0.0, 0.0, 0.0, 0.0)
    }

    /// Covariance of the discrete noise `[w_g; w_a; w_bg; w_ba]` over a step
    /// of length `dt`.
    pub fn discrete(&self, dt: f64) -> Matrix12 {
        let mut q = Matrix12::zeros();
        let blocks = [self.gyro_psd, self.accel_psd, self.gyro_walk_psd, self.accel_walk_psd];
        for (k, b) in blocks.iter().enumerate() {
            q.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&(b / dt));
        }
        q
    }
}

/// Value, weight and Jacobians of a 15-dimensional IMU error.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuResidual {
    pub value: Vector15,
    pub weight: Matrix15,
    pub jac_i: Matrix15,
    pub jac_j: Matrix15,
}

/// Weight floor used when inverting an accumulated covariance.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// `𝒥_ℓ⁻¹(e)` of the full 15-dimensional difference, or identity when the
/// approximation is requested. The bias block is always identity.
pub fn error_jacobian_inv(param: Parameterization, e: &Vector15, approximate: bool) -> Matrix15 {
    let mut j = Matrix15::identity();
    if approximate {
        return j;
    }
    match param {
        Parameterization::Grouped => {
            let nav: se23::Vector9<f64> = e.fixed_rows::<9>(0).into_owned();
            j.fixed_view_mut::<9, 9>(0, 0)
                .copy_from(&se23::left_jacobian_inv(&nav));
        }
        Parameterization::Separate => {
            let phi: Vector3<f64> = e.fixed_rows::<3>(0).into_owned();
            j.fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&so3::left_jacobian_inv(&phi));
        }
    }
    j
}

/// `Σ ← F Σ Fᵀ + G Q Gᵀ`, symmetrized.
pub(crate) fn propagate_cov(cov: &Matrix15, step: &StepJacobians, q: &Matrix12) -> Matrix15 {
    let next = step.f * cov * step.f.transpose() + step.g * q * step.g.transpose();
    (next + next.transpose()) * 0.5
}

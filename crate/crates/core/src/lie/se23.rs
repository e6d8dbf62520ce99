//! The extended pose group SE₂(3): orientation, velocity and position packed
//! in a 5×5 matrix
//!
//! ```text
//! [ C  v  r ]
//! [ 0  1  0 ]
//! [ 0  0  1 ]
//! ```
//!
//! Tangent vectors are ordered `[φ; ν; ρ]` (rotation, velocity, position) to
//! match the IMU state layout.

use std::ops::Mul;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::so3::{self, Coeffs, So3};
use crate::scalar::Real;

pub type Vector9<T> = SVector<T, 9>;
pub type Matrix9<T> = SMatrix<T, 9, 9>;
pub type Matrix5<T> = SMatrix<T, 5, 5>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se23<T: Real> {
    pub rotation: So3<T>,
    pub velocity: Vector3<T>,
    pub position: Vector3<T>,
}

impl<T: Real> Se23<T> {
    pub fn new(rotation: So3<T>, velocity: Vector3<T>, position: Vector3<T>) -> Self {
        Self {
            rotation,
            velocity,
            position,
        }
    }

    pub fn identity() -> Self {
        Self::new(So3::identity(), Vector3::zeros(), Vector3::zeros())
    }

    pub fn to_matrix(&self) -> Matrix5<T> {
        let mut m = Matrix5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.velocity);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.position);
        m
    }

    /// Reads the blocks of a 5×5 matrix; the bottom rows are not checked.
    pub fn from_matrix_unchecked(m: &Matrix5<T>) -> Self {
        Self::new(
            So3::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned()),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
            m.fixed_view::<3, 1>(0, 4).into_owned(),
        )
    }

    pub fn compose(&self, other: &Self) -> Self {
        let c = self.rotation.matrix();
        Self::new(
            self.rotation * other.rotation,
            c * other.velocity + self.velocity,
            c * other.position + self.position,
        )
    }

    pub fn inverse(&self) -> Self {
        let ct = self.rotation.transpose();
        Self::new(ct, -(ct * self.velocity), -(ct * self.position))
    }

    pub fn exp(xi: &Vector9<T>) -> Self {
        let (phi, nu, rho) = split(xi);
        let j = so3::left_jacobian(&phi);
        Self::new(So3::exp(&phi), j * nu, j * rho)
    }

    pub fn log(&self) -> Vector9<T> {
        let phi = self.rotation.log();
        let j_inv = so3::left_jacobian_inv(&phi);
        join(&phi, &(j_inv * self.velocity), &(j_inv * self.position))
    }

    /// Adjoint matrix: `X Exp(ξ) X⁻¹ = Exp(Ad_X ξ)`.
    pub fn adjoint(&self) -> Matrix9<T> {
        let c = *self.rotation.matrix();
        let mut ad = Matrix9::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&c);
        ad.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(so3::wedge(&self.velocity) * c));
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&c);
        ad.fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(so3::wedge(&self.position) * c));
        ad.fixed_view_mut::<3, 3>(6, 6).copy_from(&c);
        ad
    }
}

impl<T: Real> Mul for Se23<T> {
    type Output = Se23<T>;

    fn mul(self, rhs: Self) -> Self::Output {
        self.compose(&rhs)
    }
}

pub fn split<T: Real>(xi: &Vector9<T>) -> (Vector3<T>, Vector3<T>, Vector3<T>) {
    (
        xi.fixed_rows::<3>(0).into_owned(),
        xi.fixed_rows::<3>(3).into_owned(),
        xi.fixed_rows::<3>(6).into_owned(),
    )
}

pub fn join<T: Real>(phi: &Vector3<T>, nu: &Vector3<T>, rho: &Vector3<T>) -> Vector9<T> {
    let mut xi = Vector9::zeros();
    xi.fixed_rows_mut::<3>(0).copy_from(phi);
    xi.fixed_rows_mut::<3>(3).copy_from(nu);
    xi.fixed_rows_mut::<3>(6).copy_from(rho);
    xi
}

/// `ξ^∧` as a 5×5 Lie algebra element.
pub fn wedge<T: Real>(xi: &Vector9<T>) -> Matrix5<T> {
    let (phi, nu, rho) = split(xi);
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3::wedge(&phi));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&nu);
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&rho);
    m
}

pub fn vee<T: Real>(m: &Matrix5<T>) -> Vector9<T> {
    let phi = so3::vee(&m.fixed_view::<3, 3>(0, 0).into_owned());
    join(
        &phi,
        &m.fixed_view::<3, 1>(0, 3).into_owned(),
        &m.fixed_view::<3, 1>(0, 4).into_owned(),
    )
}

/// Matrix form of `ad(ξ)`, the derivative of the adjoint at the identity.
pub fn ad<T: Real>(xi: &Vector9<T>) -> Matrix9<T> {
    let (phi, nu, rho) = split(xi);
    let pw = so3::wedge(&phi);
    let mut m = Matrix9::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&pw);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&so3::wedge(&nu));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&pw);
    m.fixed_view_mut::<3, 3>(6, 0).copy_from(&so3::wedge(&rho));
    m.fixed_view_mut::<3, 3>(6, 6).copy_from(&pw);
    m
}

/// Coupling block of the left Jacobian between rotation and one translational
/// component `t`.
fn q_block<T: Real>(phi: &Vector3<T>, t: &Vector3<T>) -> Matrix3<T> {
    let theta = phi.norm();
    let p = so3::wedge(phi);
    let r = so3::wedge(t);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    let pp = p * p;
    r * T::lit(0.5)
        + (pr + rp + prp) * Coeffs::c(theta)
        + (pp * r + rp * p - prp * T::lit(3.0)) * Coeffs::e(theta)
        + (prp * p + p * prp) * Coeffs::f(theta)
}

/// Left Jacobian of SE₂(3) in closed block form.
pub fn left_jacobian<T: Real>(xi: &Vector9<T>) -> Matrix9<T> {
    let (phi, nu, rho) = split(xi);
    let j = so3::left_jacobian(&phi);
    let mut m = Matrix9::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&q_block(&phi, &nu));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    m.fixed_view_mut::<3, 3>(6, 0).copy_from(&q_block(&phi, &rho));
    m.fixed_view_mut::<3, 3>(6, 6).copy_from(&j);
    m
}

pub fn left_jacobian_inv<T: Real>(xi: &Vector9<T>) -> Matrix9<T> {
    let (phi, nu, rho) = split(xi);
    let j_inv = so3::left_jacobian_inv(&phi);
    let mut m = Matrix9::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&j_inv);
    m.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(-(j_inv * q_block(&phi, &nu) * j_inv)));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&j_inv);
    m.fixed_view_mut::<3, 3>(6, 0)
        .copy_from(&(-(j_inv * q_block(&phi, &rho) * j_inv)));
    m.fixed_view_mut::<3, 3>(6, 6).copy_from(&j_inv);
    m
}

/// Left Jacobian as `∫₀¹ exp(s·ad ξ) ds`, evaluated by composite Simpson
/// quadrature over a truncated power series. Slow; used to cross-check
/// [`left_jacobian`].
pub fn left_jacobian_numeric<T: Real>(xi: &Vector9<T>, intervals: usize) -> Matrix9<T> {
    let a = ad(xi);
    let n = intervals + intervals % 2;
    let h = T::one() / T::lit(n as f64);
    let expm = |s: T| -> Matrix9<T> {
        let scaled = a * s;
        let mut term = Matrix9::identity();
        let mut acc = Matrix9::identity();
        for k in 1..40 {
            term = term * scaled / T::lit(k as f64);
            acc += term;
        }
        acc
    };
    let mut sum = expm(T::zero()) + expm(T::one());
    for i in 1..n {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        sum += expm(h * T::lit(i as f64)) * w;
    }
    sum * (h / T::lit(3.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_zero_is_identity() {
        assert_eq!(Se23::<f64>::exp(&Vector9::zeros()), Se23::identity());
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let x = Se23::exp(&Vector9::from_fn(|i, _| 0.1 * (i as f64) - 0.35));
        assert_eq!(x * Se23::identity(), x);
        let id = x * x.inverse();
        assert_relative_eq!(id.to_matrix(), Matrix5::identity(), epsilon = 1e-14);
    }

    #[test]
    fn closed_form_jacobian_matches_quadrature() {
        let xi = Vector9::from_column_slice(&[0.3, -0.5, 0.9, 1.0, -2.0, 0.5, 3.0, 0.2, -1.1]);
        assert_relative_eq!(
            left_jacobian(&xi),
            left_jacobian_numeric(&xi, 512),
            epsilon = 1e-10
        );
    }

    #[test]
    fn jacobian_inverse_is_inverse() {
        let xi = Vector9::from_column_slice(&[0.01, 0.02, -0.03, 1.0, 2.0, 3.0, -1.0, 0.5, 0.2]);
        let prod = left_jacobian(&xi) * left_jacobian_inv(&xi);
        assert_relative_eq!(prod, Matrix9::identity(), epsilon = 1e-12);
    }

    #[test]
    fn adjoint_moves_tangent_through_conjugation() {
        let x = Se23::exp(&Vector9::from_fn(|i, _| 0.2 * ((i * 7 % 5) as f64) - 0.4));
        let xi = Vector9::from_fn(|i, _| 0.05 * (i as f64) - 0.2);
        let lhs = (x * Se23::exp(&xi) * x.inverse()).log();
        assert_relative_eq!(lhs, x.adjoint() * xi, epsilon = 1e-12);
    }
}

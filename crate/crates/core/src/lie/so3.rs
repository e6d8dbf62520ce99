//! The rotation group SO(3) stored as a direction-cosine matrix.

use std::ops::Mul;

use nalgebra::{ComplexField, Matrix3, Vector3};

use crate::scalar::Real;

/// Skew-symmetric matrix `v^∧` with `v^∧ w = v × w`.
pub fn wedge<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// Inverse of [`wedge`]; reads the antisymmetric part of `m`.
pub fn vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    let half = T::lit(0.5);
    Vector3::new(
        (m[(2, 1)] - m[(1, 2)]) * half,
        (m[(0, 2)] - m[(2, 0)]) * half,
        (m[(1, 0)] - m[(0, 1)]) * half,
    )
}

/// Coefficients of `I + a φ^∧ + b (φ^∧)²` style closed forms, evaluated with a
/// Taylor series below the scalar's series threshold.
pub(crate) struct Coeffs;

impl Coeffs {
    /// sin θ / θ
    pub fn a<T: Real>(theta: T) -> T {
        if theta < T::series_threshold() {
            let t2 = theta * theta;
            series(t2, &[1.0, -1.0 / 6.0, 1.0 / 120.0, -1.0 / 5040.0, 1.0 / 362880.0])
        } else {
            theta.sin() / theta
        }
    }

    /// (1 − cos θ) / θ²
    pub fn b<T: Real>(theta: T) -> T {
        if theta < T::series_threshold() {
            let t2 = theta * theta;
            series(
                t2,
                &[0.5, -1.0 / 24.0, 1.0 / 720.0, -1.0 / 40320.0, 1.0 / 3628800.0],
            )
        } else {
            let s = (theta * T::lit(0.5)).sin();
            T::lit(2.0) * s * s / (theta * theta)
        }
    }

    /// (θ − sin θ) / θ³
    pub fn c<T: Real>(theta: T) -> T {
        if theta < T::series_threshold() {
            let t2 = theta * theta;
            series(
                t2,
                &[
                    1.0 / 6.0,
                    -1.0 / 120.0,
                    1.0 / 5040.0,
                    -1.0 / 362880.0,
                    1.0 / 39916800.0,
                ],
            )
        } else {
            (theta - theta.sin()) / (theta * theta * theta)
        }
    }

    /// (1 − (θ/2) cot(θ/2)) / θ², the quadratic coefficient of J_ℓ⁻¹.
    pub fn d<T: Real>(theta: T) -> T {
        if theta < T::series_threshold() {
            let t2 = theta * theta;
            series(
                t2,
                &[1.0 / 12.0, 1.0 / 720.0, 1.0 / 30240.0, 1.0 / 1209600.0],
            )
        } else {
            let half = theta * T::lit(0.5);
            (T::one() - half * half.cos() / half.sin()) / (theta * theta)
        }
    }

    /// (θ² + 2 cos θ − 2) / (2 θ⁴)
    pub fn e<T: Real>(theta: T) -> T {
        if theta < T::series_threshold() {
            let t2 = theta * theta;
            series(
                t2,
                &[1.0 / 24.0, -1.0 / 720.0, 1.0 / 40320.0, -1.0 / 3628800.0],
            )
        } else {
            let t2 = theta * theta;
            (t2 + T::lit(2.0) * theta.cos() - T::lit(2.0)) / (T::lit(2.0) * t2 * t2)
        }
    }

    /// (2θ − 3 sin θ + θ cos θ) / (2 θ⁵)
    pub fn f<T: Real>(theta: T) -> T {
        if theta < T::series_threshold() {
            let t2 = theta * theta;
            series(t2, &[1.0 / 120.0, -1.0 / 2520.0, 1.0 / 120960.0])
        } else {
            let t2 = theta * theta;
            (T::lit(2.0) * theta - T::lit(3.0) * theta.sin() + theta * theta.cos())
                / (T::lit(2.0) * t2 * t2 * theta)
        }
    }
}

fn series<T: Real>(t2: T, coeffs: &[f64]) -> T {
    coeffs
        .iter()
        .rev()
        .fold(T::zero(), |acc, &c| acc * t2 + T::lit(c))
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct So3<T: Real> {
    matrix: Matrix3<T>,
}

impl<T: Real> So3<T> {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
        }
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(matrix: Matrix3<T>) -> Self {
        Self { matrix }
    }

    /// Projects an arbitrary matrix onto the closest rotation (polar decomposition).
    pub fn from_matrix_orthonormalized(m: &Matrix3<T>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.unwrap();
        let v_t = svd.v_t.unwrap();
        let mut r = u * v_t;
        if r.determinant() < T::zero() {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self { matrix: r }
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.matrix
    }

    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
        }
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix * other.matrix,
        }
    }

    pub fn act(&self, v: &Vector3<T>) -> Vector3<T> {
        self.matrix * v
    }

    /// Frobenius norm of `RᵀR − I` and `det(R) − 1`.
    pub fn orthonormality_error(&self) -> (T, T) {
        let e = self.matrix.transpose() * self.matrix - Matrix3::identity();
        (e.norm(), self.matrix.determinant() - T::one())
    }

    /// `Exp(φ)` via Rodrigues.
    pub fn exp(phi: &Vector3<T>) -> Self {
        let theta = phi.norm();
        let k = wedge(phi);
        Self {
            matrix: Matrix3::identity() + k * Coeffs::a(theta) + k * k * Coeffs::b(theta),
        }
    }

    /// `Log(R)` with angle in `[0, π]`.
    ///
    /// Near θ = π the axis comes from the symmetric part `(R + Rᵀ)/2`, using the
    /// largest diagonal of `(R + I)/2` as pivot. The sign follows the
    /// antisymmetric part when it is resolvable; at exactly π the first nonzero
    /// component is made positive.
    pub fn log(&self) -> Vector3<T> {
        let r = &self.matrix;
        let w = vee(r);
        let sin_t = w.norm();
        let cos_t = (r.trace() - T::one()) * T::lit(0.5);
        let theta = sin_t.atan2(cos_t);
        if theta < T::small_angle() {
            return w;
        }
        if T::pi() - theta > T::lit(1e-2) {
            return w * (T::one() / Coeffs::a(theta));
        }
        let half = T::lit(0.5);
        let b = (r + r.transpose()) * half;
        let one_minus_cos = T::one() - cos_t;
        let m = (b - Matrix3::identity() * cos_t) / one_minus_cos;
        let p = (r + Matrix3::identity()) * half;
        let mut pivot = 0;
        for i in 1..3 {
            if p[(i, i)] > p[(pivot, pivot)] {
                pivot = i;
            }
        }
        let ni = ComplexField::sqrt(m[(pivot, pivot)].max(T::zero()));
        let mut axis = Vector3::zeros();
        for j in 0..3 {
            axis[j] = if j == pivot { ni } else { m[(pivot, j)] / ni };
        }
        axis /= axis.norm();
        let dot = axis.dot(&w);
        let tiny = T::lit(1e-12);
        if dot < -tiny {
            axis = -axis;
        } else if dot <= tiny {
            if let Some(first) = axis.iter().find(|c| ComplexField::abs(**c) > tiny) {
                if *first < T::zero() {
                    axis = -axis;
                }
            }
        }
        axis * theta
    }
}

impl<T: Real> Mul for So3<T> {
    type Output = So3<T>;

    fn mul(self, rhs: Self) -> Self::Output {
        self.compose(&rhs)
    }
}

impl<T: Real> Mul<Vector3<T>> for So3<T> {
    type Output = Vector3<T>;

    fn mul(self, rhs: Vector3<T>) -> Self::Output {
        self.matrix * rhs
    }
}

impl<T: Real> Mul<Vector3<T>> for &So3<T> {
    type Output = Vector3<T>;

    fn mul(self, rhs: Vector3<T>) -> Self::Output {
        self.matrix * rhs
    }
}

/// Left Jacobian `J_ℓ(φ)`: `Exp(φ + δ) ≈ Exp(J_ℓ(φ) δ) Exp(φ)`.
pub fn left_jacobian<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let theta = phi.norm();
    let k = wedge(phi);
    Matrix3::identity() + k * Coeffs::b(theta) + k * k * Coeffs::c(theta)
}

/// Inverse left Jacobian; valid for ‖φ‖ < 2π.
pub fn left_jacobian_inv<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let theta = phi.norm();
    let k = wedge(phi);
    Matrix3::identity() - k * T::lit(0.5) + k * k * Coeffs::d(theta)
}

/// Right Jacobian `J_r(φ) = J_ℓ(−φ)`.
pub fn right_jacobian<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    left_jacobian(&(-phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn exp_zero_is_identity() {
        assert_eq!(So3::<f64>::exp(&Vector3::zeros()), So3::identity());
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let r = So3::exp(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-15);
    }

    #[test]
    fn exp_tiny_angle_is_first_order() {
        let phi = Vector3::new(1e-12, -2e-12, 0.5e-12);
        let r = So3::exp(&phi);
        let expected = Matrix3::identity() + wedge(&phi);
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-20);
    }

    #[test]
    fn log_identity_is_zero() {
        assert_eq!(So3::<f64>::identity().log(), Vector3::zeros());
    }

    #[test]
    fn log_roundtrip() {
        let phi = Vector3::new(0.1, -0.2, 0.3);
        assert_relative_eq!(So3::exp(&phi).log(), phi, epsilon = 1e-15);
    }

    #[test]
    fn log_half_turn_about_x() {
        let r = So3::from_matrix_unchecked(Matrix3::new(
            1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0,
        ));
        assert_relative_eq!(r.log(), Vector3::new(PI, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn log_near_half_turn_keeps_sign() {
        let phi = Vector3::new(-0.3, 0.5, -0.8).normalize() * (PI - 1e-7);
        assert_relative_eq!(So3::exp(&phi).log(), phi, epsilon = 1e-9);
    }

    #[test]
    fn jacobian_inverse_at_zero_is_identity() {
        assert_eq!(left_jacobian_inv::<f64>(&Vector3::zeros()), Matrix3::identity());
    }

    #[test]
    fn inverse_left_jacobian_matches_finite_difference_of_log() {
        let phi = Vector3::new(0.0, 0.0, 0.5);
        let base = So3::exp(&phi);
        let h = 1e-6;
        let mut fd = Matrix3::zeros();
        for i in 0..3 {
            let mut d = Vector3::zeros();
            d[i] = h;
            let plus = (So3::exp(&d) * base).log();
            let minus = (So3::exp(&-d) * base).log();
            fd.set_column(i, &((plus - minus) / (2.0 * h)));
        }
        assert_relative_eq!(left_jacobian_inv(&phi), fd, epsilon = 1e-9);
    }

    #[test]
    fn f32_roundtrip() {
        let phi = Vector3::new(0.4f32, -0.1, 0.2);
        assert_relative_eq!(So3::exp(&phi).log(), phi, epsilon = 1e-5);
    }
}

use nalgebra::RealField;

/// Floating-point scalar the Lie kernels are written against: `f32` or `f64`.
pub trait Real: RealField + Copy + num_traits::FromPrimitive {
    /// Below this angle the closed-form Exp/Log/Jacobian coefficients are
    /// replaced with their Taylor series.
    fn series_threshold() -> Self;

    /// Below this angle Log uses the first-order antisymmetric-part formula.
    fn small_angle() -> Self;

    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).unwrap()
    }
}

impl Real for f64 {
    fn series_threshold() -> Self {
        5e-2
    }

    fn small_angle() -> Self {
        1e-6
    }
}

impl Real for f32 {
    fn series_threshold() -> Self {
        2.5e-1
    }

    fn small_angle() -> Self {
        1e-3
    }
}

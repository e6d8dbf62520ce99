//! Sliding-window visual-inertial estimation with checks that unobservable
//! directions stay unobservable through linearization and marginalization.
//!
//! The Lie kernels in [`lie`] are generic over `f32`/`f64`; everything built
//! on top of them works in `f64`.

pub mod consistency;
pub mod error;
pub mod eval;
pub mod imu;
pub mod lie;
pub mod linalg;
pub mod scalar;
pub mod sim;
pub mod solver;
pub mod state;
pub mod vision;

pub use error::{Error, Result};
pub use scalar::Real;

/// Rotation in double precision.
pub type Rotation = lie::So3<f64>;
/// SE₂(3) extended pose in double precision.
pub type ExtendedPose = lie::Se23<f64>;
/// Single-precision rotation.
pub type Rotationf32 = lie::So3<f32>;
/// Single-precision extended pose.
pub type ExtendedPosef32 = lie::Se23<f32>;

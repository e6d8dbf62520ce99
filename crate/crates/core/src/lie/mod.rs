//! Matrix Lie group kernels for SO(3) and SE₂(3).
//!
//! Values are immutable and `Copy`; all functions are pure.

pub mod se23;
pub mod so3;

pub use se23::{Matrix5, Matrix9, Se23, Vector9};
pub use so3::So3;

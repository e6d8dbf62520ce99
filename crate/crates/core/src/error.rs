use thiserror::Error;

use crate::state::{StateId, VarId};

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameterization mismatch between IMU states")]
    ParameterizationMismatch,

    #[error("inverse depth must be positive, got {0}")]
    NonPositiveInverseDepth(f64),

    #[error("integration step must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("measurement sequence is empty")]
    EmptySequence,

    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("state layouts differ: {0}")]
    LayoutMismatch(String),

    #[error("error term references unknown variable {0:?}")]
    DanglingId(VarId),

    #[error("unknown IMU state {0:?}")]
    UnknownState(StateId),

    #[error(
        "information matrix is rank deficient: {null_count} eigenvalue(s) below {threshold:e}, smallest {smallest:e}"
    )]
    RankDeficient {
        null_count: usize,
        smallest: f64,
        threshold: f64,
        /// Eigenvectors spanning the near-null space, one per column.
        null_vectors: nalgebra::DMatrix<f64>,
    },

    #[error("marginalized variables share no error term with the retained state")]
    NothingToMarginalize,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

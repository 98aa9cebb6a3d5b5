//! Error type shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("grid spacing must be positive, got {0}")]
    BadSpacing(f64),

    #[error("file format violation at line {line}, token {col}: {msg} (token `{token}`)")]
    FileFormat {
        line: usize,
        col: usize,
        token: String,
        msg: String,
    },

    #[error("subdifferential undefined for non-convex data; use supporting_plane_check")]
    NonConvexData,

    #[error("slope is not a subgradient at the requested point (violation {0:.3e})")]
    NotSubgradient(f64),

    #[error("growth violation: full-kernel evaluation requires growth exponent < s (tail integral would diverge); use the localized kernel")]
    GrowthViolation,

    #[error("point {0:?} is outside the grid")]
    OutsideGrid([f64; 3]),

    #[error("bounded part is not small at the boundary band (aliasing risk): residual {0:.3e}")]
    BoundaryResidual(f64),

    #[error("strict-convexity probe failed: minimum Hessian eigenvalue estimate {eig:.3e} at node {node}")]
    NotStrictlyConvex { node: usize, eig: f64 },

    #[error("barrier decay-exponent fit {fitted:.3} deviates from 1-s = {expected:.3} by more than 0.15 (box too small or tail inconsistent)")]
    DecayFit { fitted: f64, expected: f64 },

    #[error("localized kernel radius {0} exceeds the resolvable section range {1}")]
    LocalizedRange(f64, f64),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

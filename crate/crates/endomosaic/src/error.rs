//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point has non-positive depth (z = {z})")]
    NonPositiveDepth { z: f64 },

    #[error("homography projection is degenerate (beta = {beta})")]
    DegenerateProjection { beta: f64 },

    #[error("homography is not invertible")]
    DegenerateHomography,

    #[error("rays are (near) parallel, cross product norm {cross_norm}")]
    ParallelRays { cross_norm: f64 },

    #[error("dot-to-ray assignment is ambiguous: {0}")]
    MatchingFailure(String),

    #[error("design matrix is rank deficient (rank {rank} < 8)")]
    RankDeficient { rank: usize },

    #[error("a displaced laser point fell behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("only {count} overlapping pixels, need at least {required}")]
    InsufficientOverlap { count: usize, required: usize },

    #[error("expected {expected} laser dots, found {found}")]
    DotCountMismatch { expected: usize, found: usize },

    #[error("registration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("point cloud is degenerate (all points collinear)")]
    DegenerateCloud,

    #[error("mosaic canvas {width}x{height} exceeds the configured maximum {max}")]
    CanvasOverflow { width: i64, height: i64, max: u32 },

    #[error("invalid phantom parameters: {0}")]
    InvalidParams(String),

    #[error("laser ray {ray} misses the phantom surface")]
    OutOfView { ray: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

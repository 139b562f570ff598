use thiserror::Error;

use crate::fpm::ReconstructionState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pupil radius {radius:.3} px does not fit inside a {grid}x{grid} grid")]
    ApertureExceedsGrid { radius: f64, grid: usize },

    #[error("illumination NA {0:.4} is unphysical (must be < 1)")]
    UnphysicalNa(f64),

    #[error("object grid of {grid} px cannot hold a {shift:.1} px illumination shift plus a {radius:.1} px pupil")]
    Coverage { grid: usize, shift: f64, radius: f64 },

    #[error("at least {needed} images are required, got {got}")]
    TooFewImages { needed: usize, got: usize },

    #[error("point configuration is degenerate; the least-squares system is rank deficient")]
    RankDeficient,

    #[error("transform could not be fit: {inliers} consensus points, {needed} required")]
    TransformUnfit { inliers: usize, needed: usize },

    #[error("radius response is flat; falling back to {fallback:.3} px")]
    RadiusIndeterminate { fallback: f64 },

    #[error("no brightfield images in the stack")]
    NoBrightfield,

    #[error("reconstruction diverged at iteration {iteration} (cost {cost:.4e}, initial {initial:.4e})")]
    Divergence { iteration: usize, cost: f64, initial: f64, snapshot: Box<ReconstructionState> },

    #[error("bar target registration failed: {0}")]
    Registration(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient
                | Error::TransformUnfit { .. }
                | Error::RadiusIndeterminate { .. }
                | Error::Divergence { .. }
        )
    }
}

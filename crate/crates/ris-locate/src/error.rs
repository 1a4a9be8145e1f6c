//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building scenes, synthesizing
/// channels, or running the estimation pipeline.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Scene construction or lookup with impossible geometry.
    #[error("invalid scene: {0}")]
    InvalidScene(String),

    /// A path index outside the scene's path list.
    #[error("path index {index} out of range for segment with {available} paths")]
    PathIndexOutOfRange { index: usize, available: usize },

    /// A physical quantity that must be strictly positive was not.
    #[error("non-positive {quantity}: {value}")]
    NonPositive { quantity: &'static str, value: f64 },

    /// Mismatched matrix/vector dimensions.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// RIS phase entries must stay on the unit circle.
    #[error("RIS phase entry {index} has modulus {modulus}, expected 1")]
    NonUnitModulus { index: usize, modulus: f64 },

    /// |sin(aoa) - sin(aod)| exceeded 1 while forming the effective channel.
    #[error("spatial frequency overflow: |sin(aoa) - sin(aod)| = {0} > 1")]
    SpatialFrequencyOverflow(f64),

    /// Greedy pursuit ran out of residual before selecting enough atoms.
    #[error("residual collapsed below {threshold:e} after {selected} atoms")]
    ResidualCollapse { selected: usize, threshold: f64 },

    /// An iterative solver hit a numerically singular system.
    #[error("ill-posed instance: {0}")]
    IllPosed(String),

    /// Angle extraction left the arcsin domain; the geometry admits two
    /// mirror-image solutions and the estimate cannot be resolved.
    #[error("ambiguous geometry: |sin(aoa) - sin(diff)| = {0} > 1")]
    AmbiguousGeometry(f64),

    /// A delay outside the representable range.
    #[error("invalid delay {value:e}: {reason}")]
    InvalidDelay { value: f64, reason: &'static str },

    /// Grid or dictionary parameter out of range.
    #[error("invalid grid parameter: {0}")]
    InvalidGrid(String),

    /// Experiment-level misuse (empty inputs and the like).
    #[error("invalid experiment input: {0}")]
    InvalidExperiment(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum DlmError {
    #[error("invalid basis specification: {0}")]
    InvalidBasis(String),

    #[error("evaluation point {point} lies outside the knot range [{lo}, {hi}]")]
    PointOutOfRange { point: f64, lo: f64, hi: f64 },

    #[error("series of length n = {n} is too short for maximum lag p = {p} (need n > p)")]
    SeriesTooShort { n: usize, p: usize },

    #[error("invalid penalty parameter: {0}")]
    InvalidPenalty(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("sampler failed at iteration {iteration}: {source}")]
    Sampler {
        iteration: usize,
        #[source]
        source: Box<DlmError>,
    },

    #[error("posterior summary requested from an empty sample collection")]
    EmptySamples,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("least-squares fit failed: {0}")]
    LeastSquares(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DlmError {
    /// True for failures caused by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            DlmError::NotPositiveDefinite { .. } | DlmError::LeastSquares(_) => true,
            DlmError::Sampler { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = DlmError> = std::result::Result<T, E>;

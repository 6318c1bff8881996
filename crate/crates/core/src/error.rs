//! Error types shared across the crate.

/// Errors produced by sampling, propagation, theory evaluation and fitting.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("initial coherence is zero; relative coherence is undefined")]
    ZeroInitialCoherence,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("realization {index} (base seed {seed}, stream {stream}) failed: {source}")]
    Realization {
        index: usize,
        seed: u64,
        stream: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("linear algebra backend error: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

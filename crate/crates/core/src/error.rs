use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("column {column} has norm {norm}, expected unit norm")]
    NotUnitNorm { column: usize, norm: f64 },

    #[error("invalid signed permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is rank deficient: singular value {singular_value:e} is below 1e-12")]
    RankDeficient { singular_value: f64 },

    #[error("threshold {zeta} zeroes the entire sparse code; use a smaller threshold")]
    EmptyCode { zeta: f64 },

    #[error("gradient step with eta = {eta} produced non-finite entries; use a smaller step size")]
    Diverged { eta: f64 },

    #[error("global matching needs at least two clients, got {0}")]
    TooFewLayers(usize),

    #[error("layer {layer} has no remaining atoms; the requested global width is too large")]
    EmptyLayer { layer: usize },

    #[error("requested {requested} global atoms but a client only has {available}")]
    TooManyGlobalAtoms { requested: usize, available: usize },

    #[error("rate estimation needs at least 3 error values, got {0}")]
    TooFewPoints(usize),

    #[error("client {client} failed: {source}")]
    ClientFailed {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Unsupported(String),

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("insufficient pool: {0}")]
    InsufficientPool(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn mismatch(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// An iteration that made no progress because the code was empty or the
    /// polar factor was rank deficient.
    pub fn is_degenerate_step(&self) -> bool {
        matches!(self, Error::EmptyCode { .. } | Error::RankDeficient { .. })
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network shape: {0}")]
    InvalidShape(String),

    #[error("input shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("behavior dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("novelty is undefined for an empty comparison pool")]
    EmptyPool,

    #[error("{what} requires at least {needed} elements, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("correlation is undefined for a constant input")]
    UndefinedCorrelation,

    #[error("series have unequal lengths")]
    RaggedSeries,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn too_few(what: &'static str, needed: usize, got: usize) -> Self {
        Error::TooFew { what, needed, got }
    }
}

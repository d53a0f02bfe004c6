use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(
        "no arrangement set exceeded gamma_t = {threshold} within {attempts} attempts \
         (best gamma found: {best_gamma}); lower gamma_t or raise max_attempts"
    )]
    ArrangementExhausted {
        threshold: f64,
        attempts: u64,
        best_gamma: f64,
    },

    #[error("exhaustive search over {candidates} candidate sets exceeds the limit of {limit}")]
    SearchTooLarge { candidates: String, limit: u64 },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("png encoding: {0}")]
    Png(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

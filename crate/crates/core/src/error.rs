use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("noise budget depleted: level {level} bits, scale {scale} bits")]
    BudgetDepleted { level: u32, scale: u32 },

    #[error("level mismatch: {0} vs {1} bits (align with mod_down first)")]
    LevelMismatch(u32, u32),

    #[error("scale mismatch: {0} vs {1} bits")]
    ScaleMismatch(u32, u32),

    #[error("missing rotation key for {direction} rotation by {amount}")]
    MissingRotationKey { direction: &'static str, amount: usize },

    #[error("missing conjugation key")]
    MissingConjugationKey,

    #[error("encoding overflow: |value| = {magnitude:e} needs < 2^{limit_bits}")]
    EncodingOverflow { magnitude: f64, limit_bits: i64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("iteration {iteration} of {total} failed: {source}")]
    IterationFailed {
        iteration: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("checksum mismatch in {0}")]
    Checksum(PathBuf),

    #[error("cache: {0}")]
    Cache(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

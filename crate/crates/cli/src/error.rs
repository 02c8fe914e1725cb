use std::path::PathBuf;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}:{line}: {msg}", path.display())]
    Csv { path: PathBuf, line: u64, msg: String },

    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Keys(String),

    #[error("{0}")]
    Core(#[from] hegwas::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 1 for bad input, 2 for cryptographic or budget failures, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        use hegwas::Error as E;
        match self {
            CliError::Csv { .. } | CliError::Input(_) | CliError::Io { .. } => 1,
            CliError::Keys(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidParams(_) | E::Dimension(_) | E::Numerical(_) | E::Format(_) | E::Io(_) => 1,
                E::BudgetDepleted { .. }
                | E::LevelMismatch(..)
                | E::ScaleMismatch(..)
                | E::MissingRotationKey { .. }
                | E::MissingConjugationKey
                | E::EncodingOverflow { .. }
                | E::IterationFailed { .. }
                | E::Checksum(_) => 2,
                E::Cache(_) => 3,
            },
        }
    }
}

use thiserror::Error;

/// Failures of a CLI run, each mapped to a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot read {path}: {message}")]
    Unreadable { path: String, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("condition failure: {0}")]
    Condition(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Condition(_) => 1,
            CliError::Parse { .. } | CliError::Unreadable { .. } => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<lvcoex::Error> for CliError {
    fn from(e: lvcoex::Error) -> Self {
        use lvcoex::Error as E;
        match e {
            E::InvalidArgument(_) | E::SpecViolation(_) | E::InvalidPerturbation(_) => {
                CliError::Validation(e.to_string())
            }
            E::KUndefined(_) => CliError::Condition(e.to_string()),
            E::NumericalFailure { .. } | E::UniquenessViolation { .. } | E::MonotonicityViolation { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("output: {e}"))
    }
}

use designbench::Error as CoreError;
use thiserror::Error;

/// Command failures, each tied to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing value in column `{column}` at line {line}")]
    MissingValue { column: String, line: u64 },

    #[error("treatment column `{column}` must be 0 or 1; found `{value}` at line {line}")]
    NonBinaryTreatment { column: String, value: String, line: u64 },

    #[error("{0}")]
    Design(String),

    #[error("estimator {estimator}: {source}; reduce covariates or drop estimator")]
    Numerical {
        estimator: String,
        #[source]
        source: CoreError,
    },

    #[error("{failed} verification check(s) failed")]
    Verification { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Io { .. }
            | CliError::Parse { .. }
            | CliError::MissingValue { .. }
            | CliError::NonBinaryTreatment { .. } => 3,
            CliError::Design(_) | CliError::Numerical { .. } => 4,
            CliError::Verification { .. } => 5,
        }
    }

    /// Classifies a core failure raised while evaluating `estimator`.
    pub fn from_core(estimator: &str, err: CoreError) -> Self {
        match err.root() {
            CoreError::InvalidConfig(msg) => CliError::Usage(msg.clone()),
            _ if err.is_numerical() => CliError::Numerical { estimator: estimator.to_string(), source: err },
            _ => CliError::Design(format!("{estimator}: {err}")),
        }
    }

    /// Splits a core `InvalidConfig("key: message")` into key and message.
    pub fn from_config(err: CoreError) -> Self {
        match err {
            CoreError::InvalidConfig(msg) => match msg.split_once(": ") {
                Some((key, rest)) if !key.contains(' ') => {
                    CliError::Config { key: key.to_string(), message: rest.to_string() }
                }
                _ => CliError::Usage(msg),
            },
            other => CliError::from_core("simulate", other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

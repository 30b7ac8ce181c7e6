use std::path::PathBuf;

use delaycredit_core::Error as CoreError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: missing column `{column}` (header must be exactly year,r,sigma,n_obs,B,V,C,C_y)")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}, line {line}: cannot parse `{value}` in column {column}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.root() {
                CoreError::SingularImplicitStep { .. }
                | CoreError::NonFiniteValue { .. }
                | CoreError::AllPathsExcluded { .. }
                | CoreError::NonFiniteCoefficient { .. }
                | CoreError::BreakdownNotConverged { .. }
                | CoreError::LatticeMismatch => EXIT_NUMERICAL,
                _ => EXIT_INPUT,
            },
            _ => EXIT_INPUT,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

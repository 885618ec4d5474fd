use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = OdlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OdlError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("numerical failure at step {step}: {detail}")]
    NumericalFailure { step: u64, detail: String },

    #[error("infeasible workload: {active_seconds:.3} s of activity requested per hour")]
    InfeasibleWorkload { active_seconds: f64 },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {}{}: {msg}", path.display(), line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Format {
        path: PathBuf,
        line: Option<usize>,
        msg: String,
    },
}

impl OdlError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OdlError::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        OdlError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OdlError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: Option<usize>, msg: impl Into<String>) -> Self {
        OdlError::Format {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code used by the command line tool.
    ///
    /// 1 = usage/configuration, 2 = I/O or malformed files, 3 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            OdlError::Io { .. } | OdlError::Format { .. } => 2,
            OdlError::NumericalFailure { .. } => 3,
            _ => 1,
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(OdlError::invalid(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

use thiserror::Error;

use crate::solver::SolveReport;

/// Errors raised anywhere in the library.
///
/// The CLI maps [`Error::is_input`] to exit code 1 and everything else
/// (convergence and internal failures) to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error(
        "exploration solver did not converge after {} iterations (violation {:.3e}, bound {:.6})",
        .0.iterations, .0.final_violation, .0.bound
    )]
    Convergence(SolveReport),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, configs, parameters).
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Capacity(_) | Error::Config(_) | Error::Io { .. } | Error::Csv(_)
        )
    }
}

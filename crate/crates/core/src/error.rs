use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the balancing library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver failure: {message}")]
    Solver {
        message: String,
        /// Free-form iterate or basis diagnostics.
        diagnostics: String,
    },

    #[error("linear program is {status:?}")]
    Lp { status: crate::lp::LpStatus },

    #[error("data error at row {row}, column `{column}`: {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("{side} side: {source}")]
    Side {
        side: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn solver(msg: impl Into<String>, diagnostics: impl Into<String>) -> Self {
        Error::Solver {
            message: msg.into(),
            diagnostics: diagnostics.into(),
        }
    }

    /// Coarse classification used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_) | Error::Dimension { .. } | Error::Domain(_) => ErrorKind::Usage,
            Error::Data { .. } | Error::Csv(_) | Error::Io(_) => ErrorKind::Data,
            Error::Solver { .. } | Error::Lp { .. } => ErrorKind::Solver,
            Error::Side { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Solver,
}

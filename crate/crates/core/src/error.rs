use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input file: {0}")]
    MissingFile(PathBuf),

    #[error("parse error in {file} at row {row}, column '{column}': {message}")]
    Parse {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("unbalanced design: {0}")]
    Unbalanced(String),

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("t = {t} outside basis domain [0, {t_end}]")]
    Domain { t: f64, t_end: f64 },

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty selection: {0}")]
    Selection(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Conditioning(_) | Error::Numeric(_))
    }
}

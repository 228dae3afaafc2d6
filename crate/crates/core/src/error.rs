use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("row {row} is fully masked; softmax over an empty support is undefined")]
    DegenerateRow { row: usize },

    #[error("expected a 1x1 scalar, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },

    #[error("row {row} of the propagation graph sums to {sum}, expected 1")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible split: {0}")]
    Infeasible(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("load error: {0}")]
    Load(String),

    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite_epoch})")]
    Diverged { epoch: usize, last_finite_epoch: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (bad config, bad files) rather
    /// than failures during computation.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Infeasible(_)
                | Error::Parse { .. }
                | Error::Load(_)
                | Error::Checkpoint(_)
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Dimension { .. }
                | Error::Domain(_)
        )
    }
}

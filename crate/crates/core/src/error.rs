use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed record in an input file.
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("environment required: the {0} model needs at least one environmental covariate")]
    EnvironmentRequired(&'static str),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("insufficient samples: need at least {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("stick exhaustion: no atom selected after {0} atoms")]
    StickExhaustion(usize),

    #[error("oracle size bound exceeded: {0}")]
    OracleTooLarge(String),

    #[error("infeasible simulation truth: {0}")]
    InfeasibleTruth(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("worker failure: {0}")]
    Worker(String),

    #[error("run interrupted after sweep {0}")]
    Interrupted(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for problems with user-supplied data (as opposed to configuration or runtime faults).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Dataset(_)
                | Error::EnvironmentRequired(_)
                | Error::InfeasibleTruth(_)
        )
    }

    pub fn is_usage_error(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

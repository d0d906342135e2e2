use std::path::PathBuf;

use crate::reconstruct::Reconstruction;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input")]
    EmptyInput,

    #[error("vertex {vertex} out of range (n = {n})")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible generator parameters: {0}")]
    Infeasible(String),

    #[error("empty description [{lo}, {hi}]")]
    EmptyDescription { lo: u32, hi: u32 },

    #[error("pair probability requested for a group paired with itself ({0})")]
    SelfPair(usize),

    #[error("reconstruction stopped at {} vertices, target {target} ({reason})", partial.graph.n())]
    Incomplete {
        target: usize,
        reason: String,
        partial: Box<Reconstruction>,
    },

    #[error("{0} is undefined: zero denominator")]
    Undefined(&'static str),

    #[error("partitions cover different element sets ({0} vs {1})")]
    MismatchedElements(usize, usize),

    #[error("budget {budget} exceeds candidate pool of {pool}")]
    BudgetTooLarge { budget: usize, pool: usize },

    #[error("every vertex is immunized")]
    AllImmunized,

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }

    /// Attaches a file path to an error raised while reading or writing it.
    pub fn at_path(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

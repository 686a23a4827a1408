//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by kernels, the reduction engine, and file IO.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation was called with incompatible or invalid dimensions.
    #[error("{op}: {msg}")]
    Dimension { op: &'static str, msg: String },

    /// A row block assigned to a rank is too short for a local QR.
    #[error("partition: rank {rank} gets {rows} rows but needs at least {min}")]
    Partition {
        rank: usize,
        rows: usize,
        min: usize,
    },

    /// A reduction tree violates one of its structural invariants.
    #[error("invalid tree: {0}")]
    TreeInvalid(String),

    /// The tree text format could not be parsed.
    #[error("tree parse error at line {line}: {msg}")]
    TreeParse { line: usize, msg: String },

    /// A merge operation failed during a reduction; carries the schedule
    /// position so the failing merge can be identified.
    #[error("merge failed at round {round}, {dst}<-{src}: {source}")]
    MergeFailed {
        round: usize,
        dst: usize,
        src: usize,
        #[source]
        source: Box<Error>,
    },

    /// A factorization is missing data needed to replay Q.
    #[error("incomplete factorization: {0}")]
    IncompleteFactorization(String),

    /// A binary or text file does not conform to its declared format.
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            msg: msg.into(),
        }
    }
}

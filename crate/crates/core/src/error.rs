use thiserror::Error;

/// Errors raised by the segmentation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate linear system: rank {rank} < {cols} columns")]
    DegenerateSystem { rank: usize, cols: usize },

    #[error("eigen-solver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("no consensus: best inlier ratio {best_ratio:.3} below required {required:.3}")]
    NoConsensus { best_ratio: f64, required: f64 },

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("sampson distance undefined: both epipolar gradients vanish")]
    ZeroDenominator,

    #[error("graph with {nodes} nodes exceeds exact solver limit of {limit}")]
    TooLarge { nodes: usize, limit: usize },

    #[error("need at least {required} atoms, found {found}")]
    InsufficientAtoms { required: usize, found: usize },

    #[error("group {group} lost all members")]
    GroupCollapse { group: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dimension mismatch at line {line} (feature row {row}): expected {expected} coordinates, found {found}")]
    DimensionMismatch {
        line: usize,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

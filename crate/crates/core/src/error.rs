use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("a gene cannot be paired with itself: {0}")]
    SelfPair(String),
    #[error("unknown gene: {0}")]
    UnknownGene(String),
    #[error("invalid gene identifier {0:?}")]
    InvalidGeneId(String),
    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cell {cell:?} is not a finite number")]
    NonNumeric { line: usize, cell: String },
    #[error("duplicate gene {0}")]
    DuplicateGene(String),
    #[error("input is empty")]
    EmptyFile,
    #[error("line {0}: expected at least two tab-separated columns")]
    MalformedRow(usize),
    #[error("cannot draw {requested} negatives: only {available} candidate pairs remain")]
    InsufficientUniverse { requested: usize, available: usize },
    #[error("both classes must be present")]
    SingleClass,
    #[error("no positive examples")]
    NoPositives,
    #[error("split {0} is empty for at least one class")]
    EmptySplit(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch normalization needs at least two examples in training mode")]
    BatchTooSmall,
    #[error("label {0} is not a valid class index")]
    InvalidLabel(usize),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("training loss diverged at epoch {0}")]
    DivergedLoss(usize),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionUnsupported(u32),
    #[error("checkpoint payload is {found} bytes, manifest expects {expected}")]
    PayloadLengthMismatch { expected: usize, found: usize },
    #[error("input length mismatch: checkpoint expects L={checkpoint}, matrix has L={matrix}")]
    LengthMismatch { checkpoint: usize, matrix: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

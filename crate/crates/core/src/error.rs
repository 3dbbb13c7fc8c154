use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation pipeline, its solvers and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature grid has no foreground cells")]
    EmptyForeground,
    #[error("descriptor dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("sinkhorn scaling collapsed (epsilon too small?)")]
    NumericalUnderflow,

    #[error("every target view is unusable")]
    AllViewsUnusable,

    #[error("invalid depth: {0}")]
    InvalidDepth(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("ransac found no consensus set")]
    NoConsensus,
    #[error("too few point pairs: {got} < {need}")]
    TooFewPairs { got: usize, need: usize },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("sequence {0} has no canonical alignment label")]
    MissingLabel(String),

    #[error("descriptor sampling exhausted after {0} draws")]
    SamplingExhausted(usize),
    #[error("camera sees no parts")]
    NoVisibleParts,

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("truncated file: need {need} bytes, have {have}")]
    TruncatedFile { need: usize, have: usize },
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("no valid depth pixels")]
    NoValidDepth,

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema error in {}: {message}", .path.display())]
    SchemaError { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

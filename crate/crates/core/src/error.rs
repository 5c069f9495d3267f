use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sequence of length {len} is shorter than the filter width {width}")]
    WindowTooShort { len: usize, width: usize },

    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("parameter trees are not congruent: {0}")]
    Incongruent(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward cache does not match the model: {0}")]
    StaleCache(String),

    #[error("empty input: {0}")]
    Empty(String),

    // data loading
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: activity `{activity}` has no entry in the label map")]
    UnknownActivity { path: PathBuf, activity: String },

    #[error("no matching sensor files found under {0}")]
    EmptyDirectory(PathBuf),

    #[error("{path}: malformed row {row}: {reason}")]
    MalformedRow { path: PathBuf, row: usize, reason: String },

    // checkpoint container
    #[error("bad checkpoint magic {0:?}")]
    CheckpointMagic([u8; 4]),

    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u8),

    #[error("checkpoint truncated while reading {0}")]
    CheckpointTruncated(String),

    #[error("duplicate tensor name `{0}` in checkpoint")]
    DuplicateName(String),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),

    // wire protocol
    #[error("bad frame magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported protocol version {0}")]
    BadVersion(u8),

    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),

    #[error("frame truncated: {0}")]
    TruncatedFrame(String),

    #[error("frame length {len} exceeds limit {max}")]
    FrameTooLarge { len: u64, max: u64 },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("client {client}: {reason}")]
    ClientFailure { client: u32, reason: String },

    // configuration
    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

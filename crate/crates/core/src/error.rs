use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("row {row} has norm below the 1e-12 floor")]
    ZeroNormRow { row: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("matrix data length {len} does not equal {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("function evaluation was not finite at coordinate {coordinate}")]
    NonFiniteEvaluation { coordinate: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("temperature must be positive")]
    NonPositiveTemperature,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("vector is not unit norm (norm {norm})")]
    NotUnitNorm { norm: f64 },
    #[error("operation needs at least two classes")]
    SingleClassUnsupported,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },
    #[error("invalid dimension: {0}")]
    InvalidDimension(&'static str),
    #[error("center bank mode does not allow this update")]
    ModeMismatch,
    #[error("vectors coincide; direction undefined")]
    CoincidentVectors,
    #[error("forward cache does not match the current encoder parameters")]
    StaleCache,
    #[error("optimizer kind does not match the requested step")]
    KindMismatch,
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("file truncated: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: usize, found: usize },
    #[error("split has no records")]
    EmptySplit,
    #[error("not enough samples: {0}")]
    InsufficientSamples(&'static str),
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("k = {k} exceeds the {available} available gallery items")]
    KExceedsGallery { k: usize, available: usize },
    #[error("expected {expected} columns, got {actual}")]
    WrongDimension { expected: usize, actual: usize },
}

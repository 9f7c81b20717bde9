use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // PGM
    #[error("unsupported format: magic {0:?}, expected P5")]
    UnsupportedFormat(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0}, expected 255")]
    UnsupportedMaxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),

    // manifests
    #[error("{path}:{line}: {msg}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("duplicate manifest path {0}")]
    DuplicatePath(String),
    #[error("class ids are not contiguous: missing {missing:?} in [0, {classes})")]
    ClassIdGap { missing: Vec<u32>, classes: u32 },

    // binary containers
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic {
        expected: &'static str,
        found: Vec<u8>,
    },
    #[error("unsupported version {0}")]
    VersionMismatch(u32),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    // preprocessing
    #[error("empty foreground")]
    EmptyForeground,
    #[error("aspect ratio {0} outside (0, 1]")]
    AspectOutOfRange(f64),

    // kernel
    #[error("shape error: {0}")]
    Shape(String),
    #[error("batch norm in train mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),

    // model
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("empty batch")]
    EmptyBatch,

    // pairs
    #[error("class {class} has {available} samples, fewer than n = {n}")]
    NotEnoughSamples {
        class: u32,
        available: usize,
        n: usize,
    },
    #[error("class {0} has no samples")]
    EmptyClass(u32),

    // matcher
    #[error("template matrix is empty")]
    EmptyMatrix,
    #[error("duplicate class id {0}")]
    DuplicateClass(u32),
    #[error("allowed class set is empty")]
    EmptyAllowedSet,
    #[error("class {0} is not in the template matrix")]
    UnknownClass(u32),

    // evaluation
    #[error("c_seen = {c_seen} must lie in (0, {classes})")]
    SplitOutOfRange { c_seen: usize, classes: usize },
    #[error("split/test mismatch: {0}")]
    SplitMismatch(String),
    #[error("empty pair list")]
    EmptyPairList,
    #[error("invalid config: {0}")]
    Config(String),

    // toy generator
    #[error("invalid glyph spec: {0}")]
    Glyph(String),
    #[error("could not generate {0} distinct glyph classes")]
    Distinctness(usize),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::MalformedHeader(_) => "malformed_header",
            Error::UnsupportedMaxval(_) => "unsupported_maxval",
            Error::Truncated { .. } => "truncated",
            Error::InvalidImage(_) => "invalid_image",
            Error::ManifestParse { .. } => "manifest_parse",
            Error::DuplicatePath(_) => "duplicate_path",
            Error::ClassIdGap { .. } => "class_id_gap",
            Error::BadMagic { .. } => "bad_magic",
            Error::VersionMismatch(_) => "version_mismatch",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::MissingParameter(_) => "missing_parameter",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::EmptyForeground => "empty_foreground",
            Error::AspectOutOfRange(_) => "aspect_out_of_range",
            Error::Shape(_) => "shape",
            Error::BatchTooSmall(_) => "batch_too_small",
            Error::Architecture(_) => "architecture",
            Error::EmptyBatch => "empty_batch",
            Error::NotEnoughSamples { .. } => "not_enough_samples",
            Error::EmptyClass(_) => "empty_class",
            Error::EmptyMatrix => "empty_matrix",
            Error::DuplicateClass(_) => "duplicate_class",
            Error::EmptyAllowedSet => "empty_allowed_set",
            Error::UnknownClass(_) => "unknown_class",
            Error::SplitOutOfRange { .. } => "split_out_of_range",
            Error::SplitMismatch(_) => "split_mismatch",
            Error::EmptyPairList => "empty_pair_list",
            Error::Config(_) => "config",
            Error::Glyph(_) => "glyph",
            Error::Distinctness(_) => "distinctness",
        }
    }
}

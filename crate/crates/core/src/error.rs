use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("audio contains a non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("signal of {len} samples does not fit transform length {n_uniform}")]
    TooLong { len: usize, n_uniform: usize },

    #[error("conjugate symmetry violated at bin {bin}: imaginary part {imag:e}")]
    SymmetryViolation { bin: usize, imag: f64 },

    #[error("log magnitude {value} at bin {bin} would overflow on exponentiation")]
    Overflow { bin: usize, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),

    #[error("mean requested from an empty accumulator")]
    EmptyAccumulator,

    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("not a normalization vector file (bad magic)")]
    BadMagic,

    #[error("unsupported normalization vector file version {0}")]
    VersionUnsupported(u32),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches the path of the file being processed.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ Error::InFile { .. } => e,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any file context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InFile { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by caller-supplied parameters or mismatched
    /// inputs, as opposed to I/O or data corruption.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.root(),
            Error::TooLong { .. }
                | Error::InvalidParams(_)
                | Error::SampleRateMismatch { .. }
                | Error::MetadataMismatch(_)
                | Error::LengthMismatch { .. }
                | Error::EmptyAccumulator
        )
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = OodError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OodError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("NPY format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("expected a 4-axis array, found rank {actual}")]
    Rank { actual: usize },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("duplicate sample_id {0:?}")]
    DuplicateId(String),

    #[error("shape mismatch: {expected:?} vs {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("malformed CSV {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("sample {0:?} has no DSC value")]
    MissingDsc(String),

    #[error("sample {0:?} has no label")]
    MissingLabel(String),

    #[error("axis {axis} has length {length}, shorter than kernel {kernel}")]
    KernelTooLarge {
        axis: &'static str,
        length: usize,
        kernel: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("need at least {required} samples, got {actual}")]
    SampleSize { required: usize, actual: usize },

    #[error("requested {requested} components but at most {bound} are allowed (min(n_train - 1, d))")]
    TooManyComponents { requested: usize, bound: usize },

    #[error(
        "covariance is singular: Cholesky failed at pivot {pivot} (d = {d}, n = {n}); \
         use a relative or absolute epsilon policy, or reduce dimensionality"
    )]
    SingularCovariance { d: usize, n: usize, pivot: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl OodError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OodError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            OodError::Config(_) | OodError::TooManyComponents { .. } => 1,
            OodError::SingularCovariance { .. } => 3,
            _ => 2,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("joint index {index} out of range for {joints} joints")]
    JointOutOfRange { index: usize, joints: usize },

    #[error("invalid topology: {}", .0.join("; "))]
    InvalidTopology(Vec<String>),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("shape mismatch in {}: {detail}", .path.display())]
    FileShape { path: PathBuf, detail: String },

    #[error("checksum mismatch in {}", .0.display())]
    Checksum(PathBuf),

    #[error("malformed {}: {detail}", .path.display())]
    Format { path: PathBuf, detail: String },

    #[error("skeleton mismatch: {0}")]
    SkeletonMismatch(String),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad data or validation rather than usage.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_))
    }
}

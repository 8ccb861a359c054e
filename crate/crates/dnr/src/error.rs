use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

/// Errors raised by the file, evaluation and command-line layers.
#[derive(Debug, thiserror::Error)]
pub enum DnrError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: dnr_core::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] dnr_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Replay(String),
    #[error("{0}")]
    Worker(String),
}

pub type Result<T, E = DnrError> = std::result::Result<T, E>;

/// Process exit status for each error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Other = 1,
    Usage = 2,
    Io = 3,
    InvalidParameter = 4,
    Data = 5,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn name(self) -> &'static str {
        match self {
            ExitKind::Other => "internal",
            ExitKind::Usage => "usage",
            ExitKind::Io => "io",
            ExitKind::InvalidParameter => "invalid-parameter",
            ExitKind::Data => "data",
        }
    }
}

impl fmt::Display for ExitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn core_kind(e: &dnr_core::Error) -> ExitKind {
    use dnr_core::Error as E;
    match e {
        E::InvalidParameter(_) => ExitKind::InvalidParameter,
        E::Seed { source, .. } => core_kind(source),
        E::Parse { .. }
        | E::EmptyGraph
        | E::UnknownNode(_)
        | E::Unlabeled(_)
        | E::DimensionMismatch { .. }
        | E::NodeOutOfRange { .. }
        | E::ModelMismatch(_) => ExitKind::Data,
        E::NonFiniteLoss { .. } => ExitKind::Other,
    }
}

impl DnrError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        DnrError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn data(path: impl AsRef<Path>, source: dnr_core::Error) -> Self {
        DnrError::Data {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, line: usize, message: impl Into<String>) -> Self {
        DnrError::Format {
            path: path.as_ref().to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ExitKind {
        match self {
            DnrError::Io { .. } => ExitKind::Io,
            DnrError::Data { source, .. } => core_kind(source),
            DnrError::Format { .. } | DnrError::Json(_) | DnrError::Replay(_) => ExitKind::Data,
            DnrError::Core(e) => core_kind(e),
            DnrError::Usage(_) => ExitKind::Usage,
            DnrError::Worker(_) => ExitKind::Other,
        }
    }
}

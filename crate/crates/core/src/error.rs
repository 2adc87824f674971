use std::path::PathBuf;

/// Errors produced across the crate.
///
/// Variants split into two families so front ends can map them onto exit
/// codes: IO/format problems (`Io`, `Format`, `Truncated`) and contract
/// violations (everything else).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rectangle {rect} is outside the {width}x{height} image")]
    OutOfBounds { rect: String, width: usize, height: usize },

    #[error("capacity exceeded: tensor needs {needed} bytes, budget is {budget} bytes")]
    Capacity { needed: u64, budget: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("level-set evolution diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("stage `{stage}` failed at frame {frame}: {source}")]
    Stage {
        stage: &'static str,
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// Attribute `e` to a pipeline stage and frame; already-attributed
    /// errors pass through.
    pub(crate) fn at_stage(stage: &'static str, frame: usize, e: Error) -> Self {
        match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                frame,
                source: Box::new(e),
            },
        }
    }

    /// True for filesystem and file-format failures, false for contract
    /// violations on otherwise well-formed inputs.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Format(_) | Error::Truncated { .. } => true,
            Error::UnsupportedMaxval(_) => true,
            Error::Stage { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

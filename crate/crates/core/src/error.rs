use std::path::PathBuf;

/// Errors produced by the detection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image: {0}")]
    MalformedImage(String),

    #[error("not a grayscale image: {0}")]
    NotGrayscale(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("singular normal equations")]
    SingularNormalEquations,

    #[error("singular system: linear solve failed at pivot {pivot}")]
    SingularSystem { pivot: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("empty history")]
    EmptyHistory,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),
}

impl Error {
    /// Short, stable identifier for machine-readable error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "missing_file",
            Error::Io { .. } => "io",
            Error::MalformedImage(_) => "malformed_image",
            Error::NotGrayscale(_) => "not_grayscale",
            Error::Parse { .. } => "parse",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::SingularNormalEquations => "singular_normal_equations",
            Error::SingularSystem { .. } => "singular_system",
            Error::DegenerateLabels(_) => "degenerate_labels",
            Error::EmptyHistory => "empty_history",
            Error::EmptyInput(_) => "empty_input",
            Error::OutOfBounds(_) => "out_of_bounds",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

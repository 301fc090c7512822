use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants split into two families: validation failures (bad shapes,
/// bad configs, malformed inputs) and runtime failures (I/O, non-finite
/// losses, graph cycles). Callers that need to distinguish them use
/// [`Error::is_validation`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("root node must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("graph cycle detected at node {0}")]
    Cycle(usize),

    #[error("non-finite loss while probing coordinate {coordinate} of parameter {param}")]
    NonFinite { param: usize, coordinate: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("bias undefined for ({b}, {z}): {reason}")]
    UndefinedBias { b: usize, z: usize, reason: &'static str },

    #[error("parse error at {location}: {detail}")]
    Parse { location: String, detail: String },

    #[error("value {value} out of range {range}")]
    Range { value: f64, range: &'static str },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::NonFinite { .. } | Error::Cycle(_))
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

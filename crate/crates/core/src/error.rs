use std::path::PathBuf;

/// Errors surfaced by tensor ops, model construction, I/O and the training loop.
///
/// `Shape` and `Contract` indicate caller bugs (mismatched extents, violated
/// preconditions); `Numeric` indicates non-finite data reaching a checked op;
/// `Budget` is raised when a constructed model exceeds a hard resource bound.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    #[error("contract violation in {op}: {msg}")]
    Contract { op: &'static str, msg: String },

    #[error("non-finite value in {op}: {msg}")]
    Numeric { op: &'static str, msg: String },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {msg}")]
    Image { path: PathBuf, msg: String },

    #[error("invalid config key `{key}`")]
    ConfigKey { key: String },

    #[error("invalid value for config key `{key}`: {msg}")]
    ConfigValue { key: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Shape { op, msg: msg.into() }
    }

    pub(crate) fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Contract { op, msg: msg.into() }
    }

    pub(crate) fn numeric(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Numeric { op, msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

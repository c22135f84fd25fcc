use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid config at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("capacity error: {slots} label-slots (L={labels} x M={per_label}) exceed {prototypes} prototypes; assignment requires K >= L*M")]
    Capacity {
        labels: usize,
        per_label: usize,
        slots: usize,
        prototypes: usize,
    },

    #[error("label {label} has no {missing} samples")]
    SingleClass { label: usize, missing: &'static str },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("missing input artifact: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed artifact {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

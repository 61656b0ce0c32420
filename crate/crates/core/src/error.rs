use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty scene")]
    EmptyScene,

    #[error("degenerate triangle {index} in object {object}")]
    DegenerateTriangle { object: u32, index: u32 },

    #[error("unknown object id {0}")]
    UnknownObject(u32),

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    #[error("invalid material `{name}`: {reason}")]
    InvalidMaterial { name: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no paths")]
    NoPaths,

    #[error("zero variance")]
    ZeroVariance,

    #[error("degenerate angle")]
    DegenerateAngle,

    #[error("time {t} s outside trajectory range [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Whether this error stems from bad user input (files, config, arguments)
    /// rather than a failure during the run itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NoPaths | Error::ZeroVariance | Error::DegenerateAngle)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

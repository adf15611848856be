use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by callers that must map errors to exit codes:
/// bad input data versus a failure inside the processing pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Pipeline,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    CoordinateOutOfRange { lat: f64, lon: f64 },

    #[error("record {id}: {reason}")]
    BadRecord { id: String, reason: String },

    #[error("trajectory {id}: {reason}")]
    BadTrajectory { id: String, reason: String },

    #[error("invalid epsilon {0}: must be positive and finite")]
    InvalidEpsilon(f64),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid route: {0}")]
    InvalidRoute(String),

    #[error("network is empty")]
    EmptyNetwork,

    #[error("mapped point on segment {segment} is not on the route")]
    OffRoute { segment: u64 },

    #[error("trajectory pairs mismatched at {id}: {reason}")]
    PairingMismatch { id: String, reason: String },

    #[error("no data: {0}")]
    NoData(String),

    #[error("exact oracle limited to n <= {max}, got {n}")]
    OracleTooLarge { n: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{}:{line}: {reason}", .path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", .path.display())]
    BadFile { path: PathBuf, reason: String },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// Input errors come from files and parameters handed to us; pipeline
    /// errors are violations detected while processing validated data.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::CoordinateOutOfRange { .. }
            | Error::BadRecord { .. }
            | Error::BadTrajectory { .. }
            | Error::InvalidEpsilon(_)
            | Error::InvalidNetwork(_)
            | Error::InvalidRoute(_)
            | Error::InvalidParameter(_)
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::EmptyNetwork
            | Error::BadFile { .. } => ErrorKind::Input,
            Error::OffRoute { .. }
            | Error::PairingMismatch { .. }
            | Error::NoData(_)
            | Error::OracleTooLarge { .. } => ErrorKind::Pipeline,
            Error::Stage { source, .. } => source.kind(),
        }
    }
}

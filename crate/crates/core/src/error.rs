use std::path::PathBuf;

use thiserror::Error;

use crate::scenario::Direction;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation. `field` names the offending key.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("direction {direction}: cannot place {requested_m:.1} m of nodes on a {available_m:.1} m lane")]
    GeometryOverflow {
        direction: Direction,
        requested_m: f64,
        available_m: f64,
    },

    #[error("MCS index {0} is not in the MCS table")]
    UnknownMcs(u8),

    #[error(
        "message of {width} subchannel(s) starting at {start} does not fit a grid of {subchannels}"
    )]
    DoesNotFit {
        start: usize,
        width: usize,
        subchannels: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

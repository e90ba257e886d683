use std::path::PathBuf;

use thiserror::Error;

use crate::specs::Buffer;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{location}: {source}")]
    Parse {
        location: String,
        #[source]
        source: serde_json::Error,
    },

    /// A value or combination of values violates a spec invariant.
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },

    #[error("layer `{layer}`: no feasible tiling, a single-element tile overflows {buffer}")]
    Infeasible { layer: String, buffer: Buffer },

    #[error("design-space exploration found no feasible point ({reason})")]
    NoFeasiblePoint { reason: String },
}

impl Error {
    pub(crate) fn invalid(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by a tiling that cannot fit the buffers.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. } | Error::NoFeasiblePoint { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

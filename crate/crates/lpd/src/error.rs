use thiserror::Error;

use crate::params::NetworkParams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] listrecon::Error),

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Backward was requested for a forward pass that kept no activations.
    #[error("missing recorded activations: {0}")]
    State(String),

    /// Training produced a non-finite loss; carries the best checkpoint so far.
    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Box<NetworkParams>,
    },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Core(listrecon::Error::Io(e))
    }
}

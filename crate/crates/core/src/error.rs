use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate LOR: detector {0} paired with itself")]
    DegenerateLor(usize),

    #[error("{what} index {index} out of range (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid TOF kernel: {0}")]
    InvalidKernel(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    /// The expected count of an event is zero, so its log-likelihood is -inf.
    #[error("objective is singular: expected count of event {0} is zero")]
    ObjectiveSingular(usize),

    #[error("step configuration diverged: {0}")]
    StepConfig(String),

    #[error("invalid simulation: {0}")]
    InvalidSimulation(String),

    #[error("invalid metric input: {0}")]
    InvalidMetric(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("hash mismatch: {0}")]
    HashMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

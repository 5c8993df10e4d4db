use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{0} did not converge within the iteration cap")]
    NoConvergence(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no m <= {m_max} with ||combo^m|| < 1; raise m_max")]
    ContractionNotFound { m_max: usize },

    #[error("floating-point overflow evaluating {0}")]
    Overflow(&'static str),

    #[error("edge ({from}, {to}) is not in the switch graph")]
    NotAnEdge { from: usize, to: usize },

    #[error("vertex {vertex} out of range 1..={max}")]
    VertexOutOfRange { vertex: usize, max: usize },

    #[error("time {t} outside the signal horizon {duration}")]
    TimeOutOfRange { t: usize, duration: usize },

    #[error("enumeration exceeded the cap of {cap} nodes; use a smaller instance or horizon")]
    EnumerationCap { cap: usize },

    #[error("resampling cap of {cap} draws exceeded for matrix {index}")]
    ResampleCap { index: usize, cap: usize },

    #[error("instance parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

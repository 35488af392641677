use thiserror::Error;

/// Errors raised by constructors and evaluators across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("visibility {0} outside [0, 1]")]
    Visibility(f64),

    #[error("measurement axis is not unit length (norm {0})")]
    NonUnitAxis(f64),

    #[error("subsystem index {index} out of range for {qubits} qubit(s)")]
    SubsystemOutOfRange { index: usize, qubits: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("herald outcome {label} fires with probability {probability:e}")]
    HeraldNeverFires { label: String, probability: f64 },

    #[error("expected Bob arity {expected}, found {found}")]
    Arity { expected: usize, found: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid hidden-variable model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown outcome label {0:?}")]
    UnknownLabel(String),

    #[error("invalid counts: {0}")]
    Counts(String),
}

pub type Result<T> = std::result::Result<T, Error>;

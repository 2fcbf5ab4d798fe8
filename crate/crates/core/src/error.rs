use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count {0} outside supported range 1..={max}", max = crate::statevector::MAX_QUBITS)]
    Size(usize),

    #[error("qubit index {index} out of range for {n_qubits}-qubit register")]
    QubitIndex { index: usize, n_qubits: usize },

    #[error("control qubit equals target qubit ({0})")]
    ControlIsTarget(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parameter index {index} out of range (circuit has {count} parameters)")]
    ParamIndex { index: usize, count: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shot count must be positive")]
    ZeroShots,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training set is empty")]
    EmptyData,

    #[error("group {group}: {source}")]
    Group {
        group: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

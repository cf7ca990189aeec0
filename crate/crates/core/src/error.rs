use thiserror::Error;

/// Everything that can go wrong between loading a chain and reporting on it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },

    #[error("matrix has no rows")]
    Empty,

    #[error("row {row} sums to {sum} (deficit {deficit:e})")]
    RowSum { row: usize, sum: f64, deficit: f64 },

    #[error("entry ({row}, {col}) = {value} is outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },

    #[error("expected {expected} labels, got {got}")]
    LabelCount { expected: usize, got: usize },

    #[error("chain has no absorbing state")]
    NoAbsorbingState,

    #[error("chain is not absorbing: states {states:?} cannot reach an absorbing state")]
    NotAbsorbing { states: Vec<String> },

    #[error("state index {index} out of range for {n} states")]
    StateOutOfRange { index: usize, n: usize },

    #[error("unknown state '{0}'")]
    UnknownState(String),

    #[error("state {state} is absorbing; both observed states must be transient")]
    NotTransient { state: String },

    #[error("state {state} has recurrence probability {hjj}, too close to 1")]
    RecurrenceTooHigh { state: String, hjj: f64 },

    #[error("observation pair ({from} -> {to}) is impossible: {reason}")]
    ImpossiblePair {
        from: String,
        to: String,
        reason: String,
    },

    #[error("series did not reach epsilon {epsilon:e} within {cap} terms")]
    SeriesCap { epsilon: f64, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid Wright-Fisher parameters: {0}")]
    WrightFisher(String),

    #[error("simulation failed: {0}")]
    Simulation(String),

    #[error("enumeration limit: {0}")]
    Enumeration(String),

    #[error("io error: {0}")]
    Io(String),
}

impl ChainError {
    /// Stable process exit code for the command-line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            ChainError::ImpossiblePair { .. } => 3,
            ChainError::Simulation(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, ChainError>;

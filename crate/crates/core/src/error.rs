use thiserror::Error;

/// Errors surfaced by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{field} = {value} is out of range (max {max})")]
    FieldOutOfRange {
        field: &'static str,
        value: u64,
        max: u64,
    },

    #[error(
        "allocation of {size} B can never fit generation {generation} (capacity {capacity} B)"
    )]
    Unsatisfiable {
        size: u64,
        generation: usize,
        capacity: u64,
    },

    #[error("generation {generation} exhausted: need {needed} B, {free} B free after collection")]
    HeapExhausted {
        generation: usize,
        needed: u64,
        free: u64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: thread {thread} returns from method {method} without a matching call")]
    UnbalancedReturn {
        line: usize,
        thread: u32,
        method: u32,
    },

    #[error("trace references undeclared {what} {id}")]
    Undeclared { what: &'static str, id: u32 },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(err: std::io::Error) -> Self {
        SimError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

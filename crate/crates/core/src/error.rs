use thiserror::Error;

/// Errors raised by the simulator, planners and file formats.
#[derive(Debug, Error)]
pub enum SharpError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numeric overflow in gate {gate} at row {row}")]
    NumericOverflow { gate: &'static str, row: usize },

    #[error("capacity error: {buffer} buffer needs {required} bytes but holds {available}")]
    Capacity {
        buffer: &'static str,
        required: u64,
        available: u64,
    },

    #[error("simulation deadlock at cycle {cycle}: blocked phases {blocked:?}")]
    Deadlock { cycle: u64, blocked: Vec<String> },

    #[error("functional mismatch at step {step}, gate {gate}, row {row}: got {got}, expected {expected}")]
    Mismatch {
        step: usize,
        gate: &'static str,
        row: usize,
        got: f64,
        expected: f64,
    },

    #[error("invalid program: {0}")]
    Program(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SharpError {
    /// True for errors caused by bad inputs rather than by the simulator itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SharpError::Config(_)
                | SharpError::Dimension { .. }
                | SharpError::Capacity { .. }
                | SharpError::Format(_)
                | SharpError::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SharpError>;

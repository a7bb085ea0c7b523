use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("invalid game instance: {0}")]
    InvalidInstance(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scenario data error at row {row}: {message}")]
    ScenarioData { row: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("system of size {size} exceeds the enumeration limit of {limit}")]
    OracleTooLarge { size: usize, limit: usize },

    #[error("empty solution set")]
    EmptySolutionSet,

    #[error("pivot {value:.3e} below floor {floor:.3e} in structured solve")]
    PivotFloor { value: f64, floor: f64 },

    #[error("singular linear system")]
    Singular,

    #[error(
        "smoothing Newton stopped after {iterations} iterations with residual {best_residual:.3e}"
    )]
    IterationCap {
        iterations: usize,
        best_residual: f64,
    },

    #[error("subproblem for scenario {scenario} failed: {source}")]
    Subproblem {
        scenario: usize,
        #[source]
        source: Box<CoreError>,
    },
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

impl From<std::io::Error> for CoreError {
    fn from(err: std::io::Error) -> Self {
        CoreError::Io(err.to_string())
    }
}

pub(crate) fn check_len(expected: usize, found: usize, context: &'static str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(CoreError::DimensionMismatch {
            expected,
            found,
            context,
        })
    }
}

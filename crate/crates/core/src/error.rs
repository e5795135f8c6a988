use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("assumption violated: {reason} (q={q_id}, omega={omega})")]
    AssumptionViolation {
        reason: String,
        q_id: String,
        omega: f64,
    },

    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),

    #[error("iteration did not converge after {iterations} steps: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("resonant symbol: {small} of {total} frequencies below floor {floor:e}")]
    ResonantSymbol {
        small: usize,
        total: usize,
        floor: f64,
    },

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("schedule chain broken at {link}: {detail}")]
    ScheduleInvariant { link: String, detail: String },

    #[error("no feasible lambda: worst field {field} with slack {slack:e} at lambda {lambda}")]
    NoFeasibleLambda {
        field: usize,
        lambda: f64,
        slack: f64,
    },

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("corrupt record: {0}")]
    CorruptRecord(String),

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag used by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::GridMismatch(_) => "grid-mismatch",
            Error::AssumptionViolation { .. } => "assumption-violation",
            Error::EigenNonConvergence(_) => "eigen-non-convergence",
            Error::NonConvergence { .. } => "non-convergence",
            Error::ResonantSymbol { .. } => "resonant-symbol",
            Error::IllConditioned(_) => "ill-conditioned",
            Error::ScheduleInvariant { .. } => "schedule-invariant",
            Error::NoFeasibleLambda { .. } => "no-feasible-lambda",
            Error::WrongRegime(_) => "wrong-regime",
            Error::CorruptRecord(_) => "corrupt-record",
            Error::Solver(_) => "solver",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

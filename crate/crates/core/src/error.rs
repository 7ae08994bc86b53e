use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("no observations")]
    NoObservations,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing periods: {}", .0.join(", "))]
    MissingPeriods(Vec<String>),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("second moment does not exist (denominator {0})")]
    NoSecondMoment(f64),

    #[error("{0}")]
    Unfeasible(String),

    #[error("singular matrix; null-space direction {direction:?}")]
    Singular { direction: Vec<f64> },

    #[error("regressor matrix is rank deficient (rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("no convergence after {iterations} iterations: {message}")]
    NonConvergence {
        iterations: usize,
        message: String,
        best: Vec<f64>,
    },

    #[error("filter produced a nonpositive or nonfinite value at day {day}: {what}")]
    Filter { day: usize, what: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

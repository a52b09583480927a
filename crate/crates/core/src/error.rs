use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {t} lies outside the domain [{lower}, {upper}]")]
    Domain { t: f64, lower: f64, upper: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure: {message} (error estimate {estimate:e})")]
    Numeric { message: String, estimate: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("infeasible coefficients: intensity {value:e} at t = {t}")]
    Infeasible { t: f64, value: f64 },

    #[error("rate bound {bound} exceeded: intensity {value} at t = {t}")]
    BoundViolation { t: f64, value: f64, bound: f64 },

    #[error("no strictly feasible starting point: {0}")]
    Initialization(String),

    #[error("design matrix is rank deficient (smallest singular value {0:e})")]
    RankDeficient(f64),

    #[error("study aborted: {0}")]
    Study(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// True for errors caused by the numbers rather than by malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric { .. }
                | Error::Infeasible { .. }
                | Error::BoundViolation { .. }
                | Error::Initialization(_)
                | Error::RankDeficient(_)
                | Error::Study(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

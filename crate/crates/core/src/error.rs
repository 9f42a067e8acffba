use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node id {0}")]
    UnknownNode(u32),

    #[error("no path between nodes {0} and {1}")]
    Disconnected(u32, u32),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("station {station}: {arrivals} arrivals exceed capacity {capacity} (free piles plus departures)")]
    PileOverflow {
        station: usize,
        arrivals: usize,
        capacity: usize,
    },

    #[error("request {request} cannot reach station {station}")]
    Unreachable { request: usize, station: usize },

    /// A schedule or dispatch violates one of the model constraints. `constraint`
    /// names it by role, e.g. "single-assignment" or "hydrogen-capacity".
    #[error("constraint `{constraint}` violated: {detail}")]
    ConstraintViolation { constraint: &'static str, detail: String },

    #[error("linear program is {0}")]
    LpStatus(&'static str),

    #[error("enumeration budget exceeded: {cases} cases > {budget}")]
    BudgetExceeded { cases: u128, budget: u128 },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn violation(constraint: &'static str, detail: impl Into<String>) -> Self {
        Error::ConstraintViolation {
            constraint,
            detail: detail.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

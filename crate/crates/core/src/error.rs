use thiserror::Error;

use crate::midgen::MidResult;
use crate::mro::MasterSolution;
use crate::robust::RobustResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid instance: {0}")]
    Invariant(String),

    #[error("uncertainty box for scenario {scenario} is empty: target sum {target} outside [{min}, {max}]")]
    EmptyBox {
        scenario: usize,
        target: f64,
        min: f64,
        max: f64,
    },

    #[error("problem too large: {0}")]
    Scale(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("LP solver numerical failure: {0}")]
    Numerical(String),

    #[error("LP unexpectedly {0}")]
    LpStatus(&'static str),

    #[error("robust solve hit the time limit")]
    RobustTimeLimit(Box<RobustResult>),

    #[error("master solve hit the time limit")]
    MasterTimeLimit(Box<MasterSolution>),

    #[error("midpoint generator hit the time limit")]
    MidTimeLimit(Box<MidResult>),

    /// Time limit reached before any feasible point was found.
    #[error("time limit reached without an incumbent")]
    TimeLimitNoIncumbent,

    #[error("column generation exceeded {0} columns")]
    ColumnCap(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

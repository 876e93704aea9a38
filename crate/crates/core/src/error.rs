use thiserror::Error;

use crate::kkt::MilpSolution;
use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lp(#[from] LpError),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("network is disconnected or singular: {0}")]
    SingularTopology(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unknown bus {0}")]
    UnknownBus(String),

    #[error("unknown agent {0:?}")]
    UnknownAgent(String),

    #[error("unknown branch {0:?}")]
    UnknownBranch(String),

    #[error("invalid market instance: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no interior agent in the clearing; price level undefined")]
    NoInteriorAgent,

    #[error("curtailment sums to {total} MW but the target is {target} MW")]
    UnbalancedTarget { total: f64, target: f64 },

    #[error("cannot exclude the only agent")]
    LastAgent,

    #[error("curtailment {value} MW of agent {agent} lies outside [0, {load}]")]
    BoundViolation { agent: usize, value: f64, load: f64 },

    #[error("efficiency ratio undefined for planner welfare {0}")]
    DegenerateDenominator(f64),

    #[error("every agent pair is co-located on every line; no dual bound can be inferred")]
    DegeneratePtdf,

    #[error("time budget of {budget_secs} s exceeded after {nodes} nodes")]
    TimeBudgetExceeded {
        budget_secs: f64,
        nodes: usize,
        incumbent: Option<Box<MilpSolution>>,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

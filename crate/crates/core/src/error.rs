use thiserror::Error;

use crate::graph::VertexIndex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid code spec: {0}")]
    InvalidSpec(String),
    #[error("invalid probability {0}: must satisfy 0 < p <= 0.5")]
    InvalidProbability(f64),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("vertex {0} is out of range")]
    VertexOutOfRange(VertexIndex),
    #[error("vertices {0} and {1} are not connected")]
    Unreachable(VertexIndex, VertexIndex),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyndromeError {
    #[error("defect {0} listed more than once")]
    DuplicateDefect(VertexIndex),
    #[error("defect {0} is a virtual vertex")]
    VirtualDefect(VertexIndex),
    #[error("defect {0} is out of range")]
    OutOfRange(VertexIndex),
}

/// Failures of the primal/dual solve loop. Every variant other than
/// [`SolverError::Syndrome`] and [`SolverError::NoPerfectMatching`] means a module
/// broke its contract; the message carries a state dump.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Syndrome(#[from] SyndromeError),
    #[error("no perfect matching exists: growth is unbounded and no boundary is reachable")]
    NoPerfectMatching,
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("primal/dual contract violated: {0}")]
    Contract(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{count} defects exceed the exact oracle cap of {cap}; shrink the instance (smaller d, fewer rounds or lower p)")]
    TooManyDefects { count: usize, cap: usize },
    #[error("defects {0} and {1} are not connected and at least one cannot reach the boundary")]
    Disconnected(VertexIndex, VertexIndex),
    #[error("no perfect matching exists for this syndrome")]
    Infeasible,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid plan: {0}")]
    Invalid(String),
    #[error("the graph has no round layout; fusion needs a time-sliced graph")]
    NoLayout,
    #[error("worker pool size must be at least 1")]
    NoWorkers,
    #[error("scheduling fault: {0}")]
    Scheduling(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Everything the handle API in [`crate::api`] can fail with.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecoderError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Syndrome(#[from] SyndromeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid decoder configuration: {0}")]
    Config(String),
    #[error("decoder handle is closed")]
    Closed,
}

//! Error type shared by the solver library.

use std::fmt;

/// Errors produced by mesh construction, operators, steppers and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    /// Mesh construction data is unusable (non-positive extent, too few
    /// nodes, non-monotone node list, ...).
    InvalidMesh(String),
    /// An axis, node or time-level index is out of range.
    IndexOutOfRange(String),
    /// Scheme or problem configuration is inconsistent (non-positive speed,
    /// margin out of range, missing callback, ...).
    InvalidConfig(String),
    /// The Numerov tridiagonal system on some line lost diagonal dominance.
    MeshQuality {
        axis: usize,
        node: usize,
        margin: f64,
    },
    /// Two fields that must share a grid do not.
    GridMismatch,
    /// A diagnostic was requested under hypotheses it does not support
    /// (non-homogeneous boundary data, missing exact solution, ...).
    DiagnosticUnavailable(String),
    /// A run was rejected up front because a stability condition fails.
    StabilityRejected { condition: String, slack: f64 },
    /// A non-finite value appeared while time stepping.
    Diverged { step: usize },
    /// Internal bookkeeping went out of sync; always a bug.
    Internal(String),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::InvalidMesh(msg) => write!(f, "invalid mesh: {msg}"),
            SolverError::IndexOutOfRange(msg) => write!(f, "index out of range: {msg}"),
            SolverError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            SolverError::MeshQuality { axis, node, margin } => write!(
                f,
                "tridiagonal dominance lost on axis {axis} at node {node} (margin {margin:e})"
            ),
            SolverError::GridMismatch => write!(f, "fields are defined on different grids"),
            SolverError::DiagnosticUnavailable(msg) => {
                write!(f, "diagnostic unavailable: {msg}")
            }
            SolverError::StabilityRejected { condition, slack } => write!(
                f,
                "run rejected: stability condition {condition} violated (slack {slack:e})"
            ),
            SolverError::Diverged { step } => {
                write!(f, "non-finite value detected at time step {step}")
            }
            SolverError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for SolverError {}

pub type Result<T> = std::result::Result<T, SolverError>;

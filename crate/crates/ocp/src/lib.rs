//! Stage-structured quadratic programs for receding-horizon control.
//!
//! An [`OcpQp`] has a fixed initial state, `N` stages with quadratic costs,
//! affine dynamics and soft two-sided constraints, and a terminal stage.
//! [`OcpSolver`] solves it exactly with a Riccati-based active-set Newton
//! method and keeps warm-start information between consecutive solves.

mod condense;
mod dump;
mod kkt;
mod problem;
mod riccati;
mod solver;

pub use condense::{condense, expand, CondensedMap};
pub use dump::{to_text, write_text};
pub use kkt::kkt_residual;
pub use problem::{OcpQp, OcpSolution, OcpStage, SoftBounds, SolveStatus, TerminalStage};
pub use solver::{solve, OcpSolver, SolverSettings};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid problem data: {0}")]
    InvalidData(String),
}

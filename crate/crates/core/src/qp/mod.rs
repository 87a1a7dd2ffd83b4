//! Convex QP solver based on operator splitting (ADMM) with over-relaxation
//! and periodic step-size balancing.

mod admm;
mod linalg;
mod problem;

pub use admm::{solve, QpSettings, QpSolution, QpSolver, QpStatus};
pub use problem::QpProblem;

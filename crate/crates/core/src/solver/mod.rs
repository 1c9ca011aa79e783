//! Backtracking line search, inner Newton loop and the outer
//! augmented-Lagrangian loop.

mod augmented_lagrangian;
mod line_search;
mod newton;
mod options;
mod report;

pub use augmented_lagrangian::{dual_ascent, initial_rollout, penalty_update, solve, solve_with_multipliers};
pub use line_search::{backtrack, line_search, LineSearchFailure};
pub use newton::{inner_newton, InnerReport, InnerStatus};
pub use options::SolverOptions;
pub use report::{MultiplierSnapshot, SolveReport, SolveStatus, StepRecord};

//! Joint dynamics, per-player costs and the shared constraint set of a game.

mod constraints;
mod cost;
mod dynamics;
mod problem;

pub use constraints::{
    max_violation, AffineConstraint, ConstraintKind, ConstraintSet, ConstraintTerm, StageConstraint,
};
pub use cost::PlayerCost;
pub use dynamics::{ContinuousDynamics, DynamicsModel, Integrator, JointDynamics};
pub use problem::GameProblem;

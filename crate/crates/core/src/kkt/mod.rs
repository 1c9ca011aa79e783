//! KKT residual of the stacked per-player optimality conditions, its
//! Jacobian, and the Newton-step linear solves.

mod augmented;
mod primal_dual;
mod solve;
mod system;

pub use augmented::{al_objective, merit, penalty_weights, player_gradient, residual, residual_len, ALState};
pub(crate) use augmented::{residual_from as residual_from_linearization, Linearization};
pub use primal_dual::PrimalDual;
pub use solve::{dense_regularized_solve, newton_step, structured_solve, DEFAULT_EPS_REG};
pub(crate) use system::{assemble, JacobianTerms};
pub use system::{residual_jacobian, KktLayout, KktSystem};

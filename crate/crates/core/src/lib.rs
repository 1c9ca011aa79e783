//! Augmented-Lagrangian solver for generalized Nash equilibria of
//! constrained multi-player dynamic games.
//!
//! Every player's augmented-Lagrangian gradient is stacked with the dynamics
//! defect into one residual `G(y)`, which is driven to zero by a quasi-Newton
//! root finder with backtracking line search. An outer loop updates the shared
//! constraint multipliers and penalties.

pub mod error;
pub mod eval;
pub mod io;
pub mod kkt;
pub mod model;
pub mod mpc;
pub mod scenarios;
pub mod solver;
pub mod testkit;

pub use error::{Error, Result};

use std::time::Duration;

use nalgebra::DVector;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
    SingularSystem,
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        self == SolveStatus::Converged
    }
}

/// One accepted Newton step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub outer: usize,
    pub alpha: f64,
    pub merit_before: f64,
    pub merit_after: f64,
    pub eps_reg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSnapshot {
    pub lambda: DVector<f64>,
    pub rho: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub newton_iters: usize,
    pub outer_iters: usize,
    /// ‖G‖₁ at the initial guess and after every accepted Newton step.
    pub residual_history: Vec<f64>,
    /// Maximum constraint violation at the end of each outer iteration.
    pub violation_history: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// λ and ρ at the start and after every outer update (when requested).
    pub multipliers: Vec<MultiplierSnapshot>,
    pub final_residual: f64,
    pub final_violation: f64,
    pub wall_time: Duration,
    pub beta: f64,
}

impl SolveReport {
    pub fn wall_time_secs(&self) -> f64 {
        self.wall_time.as_secs_f64()
    }

    /// True when every accepted step satisfies `‖G(y+αδy)‖₁ < (1−αβ)‖G(y)‖₁`.
    pub fn steps_satisfy_decrease(&self) -> bool {
        self.steps
            .iter()
            .all(|s| s.merit_after < (1.0 - s.alpha * self.beta) * s.merit_before)
    }
}

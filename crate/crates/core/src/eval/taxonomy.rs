//! Labels for failed solves.

use serde::Serialize;

use super::monte_carlo::{MonteCarloRun, SampleOutcome};
use crate::error::Result;
use crate::kkt::PrimalDual;
use crate::model::GameProblem;
use crate::solver::SolveStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FailureKind {
    /// Two players still overlap at the final iterate.
    EntangledTrajectories,
    /// The residual stopped improving or the iteration budget ran out.
    Stalled,
    LineSearchFailure,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledFailure {
    pub index: usize,
    pub kind: FailureKind,
    pub status: SolveStatus,
    /// Largest pairwise collision value at the final iterate.
    pub max_collision: f64,
}

/// Multiple of `tol_feas` a collision value must exceed to count as overlap.
pub const ENTANGLED_FACTOR: f64 = 10.0;
const PLATEAU_WINDOW: usize = 5;
const PLATEAU_RATIO: f64 = 0.9;

/// Largest value among constraints built as pairwise collision terms.
pub fn max_collision_value(prob: &GameProblem, y: &PrimalDual) -> Result<f64> {
    let c = prob.constraint_values(&y.x, &y.u)?;
    Ok(prob
        .constraints()
        .labels()
        .iter()
        .zip(c.iter())
        .filter(|(l, _)| l.starts_with("collision_"))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// True when the last few residuals shrank by less than 10 % overall.
pub fn residual_plateau(history: &[f64]) -> bool {
    if history.len() < PLATEAU_WINDOW {
        return false;
    }
    let tail = &history[history.len() - PLATEAU_WINDOW..];
    tail[PLATEAU_WINDOW - 1] > PLATEAU_RATIO * tail[0]
}

pub fn classify(
    prob: &GameProblem,
    y: &PrimalDual,
    status: SolveStatus,
    residual_history: &[f64],
    tol_feas: f64,
) -> Result<FailureKind> {
    let overlap = max_collision_value(prob, y)?;
    Ok(if overlap > ENTANGLED_FACTOR * tol_feas {
        FailureKind::EntangledTrajectories
    } else if status == SolveStatus::LineSearchFailure {
        FailureKind::LineSearchFailure
    } else if status == SolveStatus::MaxIterations || residual_plateau(residual_history) {
        FailureKind::Stalled
    } else {
        FailureKind::Other
    })
}

fn label(s: &SampleOutcome, tol_feas: f64) -> Result<LabeledFailure> {
    Ok(LabeledFailure {
        index: s.index,
        kind: classify(&s.problem, &s.solution, s.status, &s.residual_history, tol_feas)?,
        status: s.status,
        max_collision: max_collision_value(&s.problem, &s.solution)?,
    })
}

/// Labels every non-converged sample of a batch, in sample order.
pub fn failure_taxonomy(run: &MonteCarloRun, tol_feas: f64) -> Result<Vec<LabeledFailure>> {
    run.samples
        .iter()
        .filter(|s| !s.converged())
        .map(|s| label(s, tol_feas))
        .collect()
}

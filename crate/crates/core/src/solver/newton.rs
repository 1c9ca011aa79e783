//! Inner quasi-Newton loop on `G(y) = 0` with `λ`, `ρ` held fixed.

use std::sync::Arc;

use nalgebra::DVector;

use super::line_search::search;
use super::{SolverOptions, StepRecord};
use crate::error::{Error, Result};
use crate::kkt::{assemble, newton_step, structured_solve, ALState, KktLayout, KktSystem, Linearization, PrimalDual};
use crate::model::GameProblem;

const STALL_WINDOW: usize = 3;
const STALL_REL_DECREASE: f64 = 1e-4;
const RETRY_REG_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    Converged,
    Stalled,
    MaxIterations,
    LineSearchFailure,
    SingularSystem,
}

#[derive(Debug, Clone)]
pub struct InnerReport {
    pub status: InnerStatus,
    pub iterations: usize,
    /// Merit at the start followed by the merit after each accepted step.
    pub residual_history: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

fn stalled(history: &[f64]) -> bool {
    let len = history.len();
    len > STALL_WINDOW && {
        let old = history[len - 1 - STALL_WINDOW];
        old - history[len - 1] <= STALL_REL_DECREASE * old
    }
}

fn direction(sys: &KktSystem, eps: f64, opts: &SolverOptions) -> Result<DVector<f64>> {
    if opts.use_structured_solve {
        structured_solve(sys, eps)
    } else {
        newton_step(sys, eps)
    }
}

/// Runs Newton iterations from `y0` until `‖G‖₁ < tol_opt`, a stall, or
/// `max_newton`. The penalty activation pattern is re-evaluated with every
/// residual evaluation. Failures return the last accepted iterate.
pub fn inner_newton(
    prob: &GameProblem,
    al: &ALState,
    y0: PrimalDual,
    opts: &SolverOptions,
) -> Result<(PrimalDual, InnerReport)> {
    inner_newton_tagged(prob, al, y0, opts, 0)
}

pub(crate) fn inner_newton_tagged(
    prob: &GameProblem,
    al: &ALState,
    y0: PrimalDual,
    opts: &SolverOptions,
    outer: usize,
) -> Result<(PrimalDual, InnerReport)> {
    let layout = Arc::new(KktLayout::for_problem(prob));
    let mut y = y0;
    let mut lin = Linearization::new(prob, &y, al)?;
    let mut sys = assemble(prob, &y, al, &lin, layout.clone(), opts.jacobian_terms());
    let mut merit = sys.residual().lp_norm(1);
    let mut history = vec![merit];
    let mut steps = Vec::new();
    let mut status = InnerStatus::MaxIterations;

    for _ in 0..opts.max_newton {
        if merit < opts.tol_opt {
            status = InnerStatus::Converged;
            break;
        }
        if stalled(&history) {
            status = InnerStatus::Stalled;
            break;
        }
        let mut accepted = None;
        let mut eps = opts.eps_reg;
        for attempt in 0..2 {
            if attempt == 1 {
                eps = (opts.eps_reg * RETRY_REG_FACTOR).max(1e-8);
            }
            let dy = match direction(&sys, eps, opts) {
                Ok(dy) => dy,
                Err(Error::SingularSystem { .. }) => {
                    status = InnerStatus::SingularSystem;
                    break;
                }
                Err(e) => return Err(e),
            };
            if let Ok(a) = search(prob, al, &y, merit, &dy, opts)? {
                accepted = Some(a);
                break;
            }
        }
        let Some(a) = accepted else {
            if status != InnerStatus::SingularSystem {
                status = InnerStatus::LineSearchFailure;
            }
            break;
        };
        steps.push(StepRecord {
            outer,
            alpha: a.alpha,
            merit_before: merit,
            merit_after: a.merit,
            eps_reg: eps,
        });
        y = a.y;
        lin = a.lin;
        merit = a.merit;
        history.push(merit);
        sys = assemble(prob, &y, al, &lin, layout.clone(), opts.jacobian_terms());
        debug_assert_eq!(sys.residual(), &a.residual);
    }
    if status == InnerStatus::MaxIterations && merit < opts.tol_opt {
        status = InnerStatus::Converged;
    }
    let iterations = steps.len();
    Ok((
        y,
        InnerReport {
            status,
            iterations,
            residual_history: history,
            steps,
        },
    ))
}

//! Backtracking on the ℓ1 norm of the KKT residual.

use nalgebra::DVector;

use super::SolverOptions;
use crate::error::Result;
use crate::kkt::{residual, ALState, Linearization, PrimalDual};
use crate::model::GameProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchFailure {
    pub last_alpha: f64,
}

/// Largest `α ∈ {1, τ, τ², …}` (not below `alpha_min`) with
/// `merit(α) < (1 − αβ)·merit0`. Returns `α` and the accepted merit.
pub fn backtrack(
    merit0: f64,
    opts: &SolverOptions,
    mut merit: impl FnMut(f64) -> f64,
) -> std::result::Result<(f64, f64), LineSearchFailure> {
    let mut alpha = 1.0;
    while alpha >= opts.alpha_min {
        let m = merit(alpha);
        if m < (1.0 - alpha * opts.beta) * merit0 {
            return Ok((alpha, m));
        }
        alpha *= opts.tau;
    }
    Err(LineSearchFailure { last_alpha: alpha / opts.tau })
}

pub(crate) struct Accepted {
    pub alpha: f64,
    pub y: PrimalDual,
    pub lin: Linearization,
    pub residual: DVector<f64>,
    pub merit: f64,
}

pub(crate) fn search(
    prob: &GameProblem,
    al: &ALState,
    y: &PrimalDual,
    merit0: f64,
    dy: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<std::result::Result<Accepted, LineSearchFailure>> {
    let mut best: Option<Accepted> = None;
    let mut err = None;
    let outcome = backtrack(merit0, opts, |alpha| {
        let cand = y.step(dy, alpha);
        if !cand.is_finite() {
            return f64::INFINITY;
        }
        match Linearization::new(prob, &cand, al) {
            Ok(lin) => {
                let g = crate::kkt::residual_from_linearization(prob, &cand, al, &lin);
                let m = g.lp_norm(1);
                best = Some(Accepted {
                    alpha,
                    y: cand,
                    lin,
                    residual: g,
                    merit: m,
                });
                if m.is_finite() {
                    m
                } else {
                    f64::INFINITY
                }
            }
            Err(e) => {
                err = Some(e);
                f64::INFINITY
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(outcome.map(|_| best.expect("accepted candidate recorded")))
}

/// Line search over the solver's residual at `y + α·dy`.
pub fn line_search(
    prob: &GameProblem,
    al: &ALState,
    y: &PrimalDual,
    dy: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<std::result::Result<f64, LineSearchFailure>> {
    let merit0 = residual(prob, y, al)?.lp_norm(1);
    Ok(search(prob, al, y, merit0, dy, opts)?.map(|a| a.alpha))
}

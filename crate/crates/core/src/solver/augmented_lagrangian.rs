//! Outer loop: Newton solve, dual ascent on `λ`, geometric penalty growth.

use std::time::Instant;

use nalgebra::DVector;

use super::newton::{inner_newton_tagged, InnerStatus};
use super::{MultiplierSnapshot, SolveReport, SolveStatus, SolverOptions};
use crate::error::Result;
use crate::kkt::{merit, ALState, PrimalDual};
use crate::model::GameProblem;

/// `λ_k ← max(0, λ_k + ρ_k C_k)` for inequalities, `λ_k + ρ_k C_k` for equalities.
pub fn dual_ascent(al: &ALState, c: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        c.len(),
        (0..c.len()).map(|k| {
            let v = al.lambda[k] + al.rho[k] * c[k];
            if k < al.num_inequalities() {
                v.max(0.0)
            } else {
                v
            }
        }),
    )
}

/// `ρ_k ← min(γ ρ_k, ρ_max)`.
pub fn penalty_update(al: &ALState) -> DVector<f64> {
    al.rho.map(|r| (r * al.gamma).min(al.rho_max))
}

/// Zero controls, zero multipliers, states from simulating `x0` forward.
pub fn initial_rollout(prob: &GameProblem) -> PrimalDual {
    let mut y = PrimalDual::zeros(prob);
    y.x = prob.rollout(&y.u).expect("zero controls have matching dimensions");
    y
}

/// Solves the game from `y0` (or from [`initial_rollout`]).
///
/// Non-convergence is reported through [`SolveReport::status`] together with
/// the last iterate.
pub fn solve(
    prob: &GameProblem,
    y0: Option<PrimalDual>,
    opts: &SolverOptions,
) -> Result<(PrimalDual, ALState, SolveReport)> {
    let al = ALState::for_problem(prob, opts.rho0, opts.gamma, opts.rho_max)?;
    solve_with_multipliers(prob, y0, al, opts)
}

/// Like [`solve`] but starting from the given multipliers and penalties.
pub fn solve_with_multipliers(
    prob: &GameProblem,
    y0: Option<PrimalDual>,
    mut al: ALState,
    opts: &SolverOptions,
) -> Result<(PrimalDual, ALState, SolveReport)> {
    opts.validate()?;
    let start = Instant::now();
    let mut y = match y0 {
        Some(y) => {
            y.check(prob)?;
            y
        }
        None => initial_rollout(prob),
    };
    let mut report = SolveReport {
        status: SolveStatus::MaxIterations,
        newton_iters: 0,
        outer_iters: 0,
        residual_history: Vec::new(),
        violation_history: Vec::new(),
        steps: Vec::new(),
        multipliers: Vec::new(),
        final_residual: f64::NAN,
        final_violation: f64::NAN,
        wall_time: Default::default(),
        beta: opts.beta,
    };
    if opts.record_multipliers {
        report.multipliers.push(MultiplierSnapshot {
            lambda: al.lambda.clone(),
            rho: al.rho.clone(),
        });
    }

    for outer in 0..opts.max_outer {
        let (next, inner) = inner_newton_tagged(prob, &al, y, opts, outer)?;
        y = next;
        report.outer_iters = outer + 1;
        report.newton_iters += inner.iterations;
        if report.residual_history.is_empty() {
            report.residual_history.push(inner.residual_history[0]);
        }
        report.residual_history.extend_from_slice(&inner.residual_history[1..]);
        report.steps.extend(inner.steps);

        match inner.status {
            InnerStatus::LineSearchFailure => report.status = SolveStatus::LineSearchFailure,
            InnerStatus::SingularSystem => report.status = SolveStatus::SingularSystem,
            _ => {}
        }
        let aborted = report.status != SolveStatus::MaxIterations;
        if !aborted {
            let c = prob.constraint_values(&y.x, &y.u)?;
            al.lambda = dual_ascent(&al, &c);
            al.rho = penalty_update(&al);
            if opts.record_multipliers {
                report.multipliers.push(MultiplierSnapshot {
                    lambda: al.lambda.clone(),
                    rho: al.rho.clone(),
                });
            }
        }
        let (g, viol) = merit(prob, &y, &al)?;
        report.violation_history.push(viol);
        report.final_residual = g;
        report.final_violation = viol;
        if aborted {
            break;
        }
        if g < opts.tol_opt && viol <= opts.tol_feas {
            report.status = SolveStatus::Converged;
            break;
        }
    }
    report.wall_time = start.elapsed();
    Ok((y, al, report))
}

//! Sampling check that no player gains from a unilateral deviation.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::{player_gradient, ALState, PrimalDual};
use crate::model::GameProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NashCheckOptions {
    /// Random directions per player.
    pub n_directions: usize,
    /// Each unit direction is tried at every one of these lengths.
    pub step_sizes: Vec<f64>,
    /// Cost decrease tolerated independently of the step length.
    pub epsilon: f64,
    /// Extra cost decrease tolerated per unit step length, for solutions
    /// stopped at a loose residual. Zero by default.
    pub gradient_tolerance: f64,
    pub rng_seed: u64,
}

impl Default for NashCheckOptions {
    fn default() -> Self {
        Self {
            n_directions: 100,
            step_sizes: vec![1e-3, 1e-2],
            epsilon: 1e-6,
            gradient_tolerance: 0.0,
            rng_seed: 0,
        }
    }
}

impl NashCheckOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_directions > 0
            && !self.step_sizes.is_empty()
            && self.step_sizes.iter().all(|s| s.is_finite() && *s > 0.0)
            && self.epsilon.is_finite()
            && self.epsilon >= 0.0
            && self.gradient_tolerance.is_finite()
            && self.gradient_tolerance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "nash check needs directions, positive step sizes and nonnegative tolerances".into(),
            ))
        }
    }

    /// Applies a `key=value` override; unknown keys are rejected.
    /// `step_sizes` takes comma-separated numbers.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let invalid = |what: &str| Error::InvalidArgument(format!("`{key}` expects {what}, got `{value}`"));
        let num = || value.parse::<f64>().map_err(|_| invalid("a number"));
        match key {
            "n_directions" => self.n_directions = value.parse().map_err(|_| invalid("an integer"))?,
            "step_sizes" => {
                self.step_sizes = value
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| invalid("comma-separated numbers"))?
            }
            "epsilon" => self.epsilon = num()?,
            "gradient_tolerance" => self.gradient_tolerance = num()?,
            "rng_seed" => self.rng_seed = value.parse().map_err(|_| invalid("an integer"))?,
            _ => return Err(Error::InvalidArgument(format!("unknown nash check option `{key}`"))),
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &["n_directions", "step_sizes", "epsilon", "gradient_tolerance", "rng_seed"];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerNashReport {
    pub player: usize,
    /// Cost of the re-simulated solution.
    pub cost: f64,
    /// `‖G^ν‖₁` at the solution.
    pub kkt_residual_l1: f64,
    pub evaluated: usize,
    /// Deviations that made some constraint more violated than at the solution.
    pub discarded: usize,
    pub improving: usize,
    /// Largest cost decrease among admissible deviations (negative if none decreased).
    pub best_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashReport {
    pub players: Vec<PlayerNashReport>,
}

impl NashReport {
    pub fn improving_deviations(&self) -> usize {
        self.players.iter().map(|p| p.improving).sum()
    }

    pub fn is_equilibrium(&self) -> bool {
        self.improving_deviations() == 0
    }
}

/// For every player `ν`, perturbs `U^ν` along random unit directions scaled
/// by each step size, re-simulates the states with the other players'
/// controls fixed and compares `J^ν` with its value at the solution.
///
/// Deviations are admissible when no constraint ends up more violated than at
/// the solution, i.e. `C_k ≤ max(C_k(solution), 0)` for all `k`. An admissible
/// deviation of length `s` is improving when it lowers `J^ν` by more than
/// `epsilon + gradient_tolerance · s`. The baseline is the rollout of the
/// solution's controls, so a small dynamics defect does not bias the result.
pub fn nash_check(prob: &GameProblem, solution: &PrimalDual, al: &ALState, opts: &NashCheckOptions) -> Result<NashReport> {
    opts.validate()?;
    solution.check(prob)?;
    let base_x = prob.rollout(&solution.u)?;
    let base_c = prob.constraint_values(&base_x, &solution.u)?;
    let limit: DVector<f64> = base_c.map(|c| c.max(0.0));
    let mut players = Vec::with_capacity(prob.num_players());
    for nu in 0..prob.num_players() {
        let cost = prob.player_cost(nu, &base_x, &solution.u[nu])?;
        let g = player_gradient(prob, solution, al, nu)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
        rng.set_stream(nu as u64);
        let dim = solution.u[nu].len();
        let mut report = PlayerNashReport {
            player: nu,
            cost,
            kkt_residual_l1: g.lp_norm(1),
            evaluated: 0,
            discarded: 0,
            improving: 0,
            best_decrease: f64::NEG_INFINITY,
        };
        let mut us = solution.u.clone();
        for _ in 0..opts.n_directions {
            let mut d = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let norm = d.norm();
            if norm == 0.0 {
                continue;
            }
            d /= norm;
            for &s in &opts.step_sizes {
                us[nu] = &solution.u[nu] + &d * s;
                let xs = prob.rollout(&us)?;
                report.evaluated += 1;
                let c = prob.constraint_values(&xs, &us)?;
                if c.iter().zip(limit.iter()).any(|(v, l)| v > l) {
                    report.discarded += 1;
                    continue;
                }
                let decrease = cost - prob.player_cost(nu, &xs, &us[nu])?;
                report.best_decrease = report.best_decrease.max(decrease);
                if decrease > opts.epsilon + opts.gradient_tolerance * s {
                    report.improving += 1;
                }
            }
        }
        players.push(report);
    }
    Ok(NashReport { players })
}

//! Receding-horizon simulation: re-solve, apply the first control, propagate
//! noisy dynamics, warm-start the next solve.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::{ALState, PrimalDual};
use crate::model::GameProblem;
use crate::scenarios::{build_scenario, presets, ScenarioSpec};
use crate::solver::{initial_rollout, solve_with_multipliers, SolveStatus, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Simulated time (s).
    pub sim_duration: f64,
    /// Planning steps `N` per solve.
    pub time_steps: usize,
    /// Planning horizon `T` (s).
    pub horizon: f64,
    /// Standard deviation of the additive state noise per unicycle component
    /// `(px, py, θ, v)`.
    pub noise_scale: [f64; 4],
    pub warm_start: bool,
    /// Carry shifted constraint multipliers between updates instead of
    /// restarting them at zero.
    pub carry_lambda: bool,
    pub rng_seed: u64,
    /// Positions must stay within this distance of the origin on both axes.
    pub bounding_box: f64,
    pub record_plans: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            sim_duration: 3.0,
            time_steps: presets::MPC_STEPS,
            horizon: presets::MPC_HORIZON,
            noise_scale: [0.01, 0.01, 0.005, 0.01],
            warm_start: true,
            carry_lambda: false,
            rng_seed: 0,
            bounding_box: 1000.0,
            record_plans: false,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.sim_duration.is_finite() && self.sim_duration > 0.0) {
            return bad("sim_duration must be finite and positive");
        }
        if self.time_steps < 2 {
            return bad("time_steps must be at least 2");
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("horizon must be finite and positive");
        }
        if !self.noise_scale.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return bad("noise_scale entries must be finite and nonnegative");
        }
        if !(self.bounding_box > 0.0) {
            return bad("bounding_box must be positive");
        }
        Ok(())
    }

    /// Applies a `key=value` override; unknown keys are rejected.
    /// `noise_scale` takes four comma-separated numbers.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let invalid = |what: &str| Error::InvalidArgument(format!("`{key}` expects {what}, got `{value}`"));
        let num = || value.parse::<f64>().map_err(|_| invalid("a number"));
        match key {
            "sim_duration" => self.sim_duration = num()?,
            "time_steps" => self.time_steps = value.parse().map_err(|_| invalid("an integer"))?,
            "horizon" => self.horizon = num()?,
            "noise_scale" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| invalid("four comma-separated numbers"))?;
                self.noise_scale = parts.try_into().map_err(|_| invalid("four comma-separated numbers"))?;
            }
            "warm_start" => self.warm_start = value.parse().map_err(|_| invalid("true or false"))?,
            "carry_lambda" => self.carry_lambda = value.parse().map_err(|_| invalid("true or false"))?,
            "rng_seed" => self.rng_seed = value.parse().map_err(|_| invalid("an integer"))?,
            "bounding_box" => self.bounding_box = num()?,
            "record_plans" => self.record_plans = value.parse().map_err(|_| invalid("true or false"))?,
            _ => return Err(Error::InvalidArgument(format!("unknown MPC option `{key}`"))),
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "sim_duration",
        "time_steps",
        "horizon",
        "noise_scale",
        "warm_start",
        "carry_lambda",
        "rng_seed",
        "bounding_box",
        "record_plans",
    ];
}

/// An update whose solve did not converge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdateFailure {
    pub update: usize,
    /// Solver status, absent when the solve returned an error.
    pub status: Option<SolveStatus>,
    pub message: String,
    /// Whether the previous plan, shifted, was executed instead.
    pub used_fallback: bool,
}

/// Closed-loop record of one simulation.
#[derive(Debug, Clone)]
pub struct MpcTrace {
    pub dt: f64,
    pub num_players: usize,
    /// Executed joint states, starting with the initial one.
    pub states: Vec<DVector<f64>>,
    /// Joint control applied after each update.
    pub controls: Vec<DVector<f64>>,
    /// Solver wall time per update (s).
    pub update_durations: Vec<f64>,
    pub newton_iters: Vec<usize>,
    pub statuses: Vec<Option<SolveStatus>>,
    pub failures: Vec<UpdateFailure>,
    /// Planned stacked states per update, when recorded.
    pub plans: Vec<DVector<f64>>,
    /// Update after which the state left the bounding box or became non-finite.
    pub diverged_at: Option<usize>,
}

impl MpcTrace {
    pub fn updates(&self) -> usize {
        self.controls.len()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Updates per simulated second.
    pub fn simulated_rate(&self) -> f64 {
        self.updates() as f64 / (self.updates() as f64 * self.dt)
    }

    /// Updates per second of solver wall time.
    pub fn wall_clock_frequency(&self) -> f64 {
        let total: f64 = self.update_durations.iter().sum();
        if total > 0.0 {
            self.updates() as f64 / total
        } else {
            f64::INFINITY
        }
    }

    /// Component `c` of player `nu`'s state over the executed trajectory.
    pub fn series(&self, nu: usize, c: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[4 * nu + c]).collect()
    }

    pub fn min_speed(&self, nu: usize) -> f64 {
        self.series(nu, 3).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Largest `r² − ‖p_i − p_j‖²` over every executed state and pair.
    pub fn max_collision_value(&self, radius: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for x in &self.states {
            for i in 0..self.num_players {
                for j in i + 1..self.num_players {
                    let dx = x[4 * i] - x[4 * j];
                    let dy = x[4 * i + 1] - x[4 * j + 1];
                    worst = worst.max(radius * radius - dx * dx - dy * dy);
                }
            }
        }
        worst
    }

    pub fn max_collision_value_with(&self, nu: usize, radius: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for x in &self.states {
            for j in (0..self.num_players).filter(|&j| j != nu) {
                let dx = x[4 * nu] - x[4 * j];
                let dy = x[4 * nu + 1] - x[4 * j + 1];
                worst = worst.max(radius * radius - dx * dx - dy * dy);
            }
        }
        worst
    }
}

/// Shifts a plan one step forward for the problem starting at the next
/// measured state: controls and dynamics multipliers move up one stage with
/// the last stage duplicated, states are re-simulated from `prob_next.x0`.
pub fn warm_start_shift(prev: &PrimalDual, prob_next: &GameProblem) -> PrimalDual {
    let steps = prob_next.num_steps();
    let u: Vec<DVector<f64>> = prev
        .u
        .iter()
        .enumerate()
        .map(|(nu, u)| shift_stages(u, prob_next.player_control_dim(nu), steps))
        .collect();
    let n = prob_next.state_dim();
    let mu = prev.mu.iter().map(|mu| shift_stages(mu, n, steps)).collect();
    let x = prob_next.rollout(&u).expect("shifted plan keeps its dimensions");
    PrimalDual { x, u, mu }
}

fn shift_stages(v: &DVector<f64>, width: usize, steps: usize) -> DVector<f64> {
    let mut out = DVector::zeros(width * steps);
    if steps > 1 {
        out.rows_mut(0, width * (steps - 1)).copy_from(&v.rows(width, width * (steps - 1)));
    }
    out.rows_mut(width * (steps - 1), width).copy_from(&v.rows(width * (steps - 1), width));
    out
}

/// Moves each constraint multiplier to the same constraint one step earlier;
/// the last step keeps its values. Falls back to zeros when steps do not all
/// hold the same number of constraints.
fn shift_multipliers(prob: &GameProblem, lambda: &DVector<f64>) -> DVector<f64> {
    let steps = prob.num_steps();
    let mut by_step: Vec<Vec<usize>> = vec![Vec::new(); steps];
    for (k, t) in prob.constraints().terms().enumerate() {
        by_step[t.step].push(k);
    }
    let mut out = DVector::zeros(lambda.len());
    if by_step.windows(2).any(|w| w[0].len() != w[1].len()) {
        return out;
    }
    for s in 0..steps {
        let from = &by_step[(s + 1).min(steps - 1)];
        for (&to, &src) in by_step[s].iter().zip(from) {
            out[to] = lambda[src];
        }
    }
    out
}

/// A player driven open loop at constant heading and speed.
#[derive(Debug, Clone, Copy)]
struct Scripted {
    player: usize,
    heading: f64,
    speed: f64,
}

/// Closed-loop simulation with every player following its own equilibrium
/// strategy.
pub fn mpc_run(spec: &ScenarioSpec, cfg: &MpcConfig, opts: &SolverOptions) -> Result<MpcTrace> {
    run(spec, cfg, opts, None)
}

/// Closed loop in which the pedestrian ignores the game and walks straight
/// at its actual speed while the planners keep assuming its desired speed.
pub fn mis_specification_run(spec: &ScenarioSpec, cfg: &MpcConfig, opts: &SolverOptions) -> Result<MpcTrace> {
    let (Some(speeds), Some(player)) = (spec.pedestrian, spec.pedestrian_player()) else {
        return Err(Error::InvalidArgument("scenario has no pedestrian block".into()));
    };
    let script = Scripted {
        player,
        heading: spec.players[player].start.theta,
        speed: speeds.actual,
    };
    run(spec, cfg, opts, Some(script))
}

fn run(spec: &ScenarioSpec, cfg: &MpcConfig, opts: &SolverOptions, script: Option<Scripted>) -> Result<MpcTrace> {
    cfg.validate()?;
    opts.validate()?;
    let planning = spec.with_horizon(cfg.time_steps, cfg.horizon);
    let base = build_scenario(&planning)?;
    let dt = planning.dt();
    let players = spec.num_players();
    let updates = ((cfg.sim_duration / dt).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let noise: Vec<Normal<f64>> = cfg
        .noise_scale
        .iter()
        .map(|&s| Normal::new(0.0, s).expect("validated noise scale"))
        .collect();

    let mut x = spec.initial_state();
    if let Some(s) = script {
        x[4 * s.player + 3] = s.speed;
    }
    let script_start = x.clone();

    let mut trace = MpcTrace {
        dt,
        num_players: players,
        states: vec![x.clone()],
        controls: Vec::with_capacity(updates),
        update_durations: Vec::with_capacity(updates),
        newton_iters: Vec::with_capacity(updates),
        statuses: Vec::with_capacity(updates),
        failures: Vec::new(),
        plans: Vec::new(),
        diverged_at: None,
    };
    // last plan that was executed, and the multipliers that produced it
    let mut executed: Option<PrimalDual> = None;
    let mut lambda: Option<DVector<f64>> = None;

    for i in 0..updates {
        let prob = base.with_initial_state(x.clone())?;
        let shifted = executed.as_ref().map(|p| warm_start_shift(p, &prob));
        let mut al = ALState::for_problem(&prob, opts.rho0, opts.gamma, opts.rho_max)?;
        if cfg.carry_lambda {
            if let Some(l) = &lambda {
                al.lambda = shift_multipliers(&prob, l);
            }
        }
        let guess = if cfg.warm_start { shifted.clone() } else { None };

        let start = Instant::now();
        let outcome = solve_with_multipliers(&prob, guess, al, opts);
        trace.update_durations.push(start.elapsed().as_secs_f64());

        let plan = match outcome {
            Ok((y, al, report)) => {
                trace.newton_iters.push(report.newton_iters);
                trace.statuses.push(Some(report.status));
                if report.status.is_converged() {
                    lambda = Some(al.lambda);
                    y
                } else {
                    let fallback = shifted.is_some();
                    trace.failures.push(UpdateFailure {
                        update: i,
                        status: Some(report.status),
                        message: format!(
                            "solve ended with ‖G‖₁ = {:.3e}, violation {:.3e}",
                            report.final_residual, report.final_violation
                        ),
                        used_fallback: fallback,
                    });
                    shifted.unwrap_or(y)
                }
            }
            Err(e) => {
                trace.newton_iters.push(0);
                trace.statuses.push(None);
                trace.failures.push(UpdateFailure {
                    update: i,
                    status: None,
                    message: e.to_string(),
                    used_fallback: true,
                });
                shifted.unwrap_or_else(|| initial_rollout(&prob))
            }
        };
        if cfg.record_plans {
            trace.plans.push(plan.x.clone());
        }

        let u = prob.joint_control(&plan.u, 0);
        let mut next = prob.dynamics().step(&x, &u)?;
        for p in 0..players {
            for c in 0..4 {
                next[4 * p + c] += noise[c].sample(&mut rng);
            }
        }
        if let Some(s) = script {
            let t = (i + 1) as f64 * dt;
            let o = 4 * s.player;
            next[o] = script_start[o] + s.speed * s.heading.cos() * t;
            next[o + 1] = script_start[o + 1] + s.speed * s.heading.sin() * t;
            next[o + 2] = s.heading;
            next[o + 3] = s.speed;
        }
        trace.controls.push(u);
        trace.states.push(next.clone());
        executed = Some(plan);
        x = next;

        let inside = (0..players).all(|p| x[4 * p].abs() <= cfg.bounding_box && x[4 * p + 1].abs() <= cfg.bounding_box);
        if !(inside && x.iter().all(|v| v.is_finite())) {
            log::warn!("closed loop left the bounding box after update {i}");
            trace.diverged_at = Some(i);
            break;
        }
    }
    Ok(trace)
}

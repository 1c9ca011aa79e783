use std::error::Error;

use dyngame::eval::{
    failure_taxonomy, monte_carlo, nash_check, timing_benchmark, NashCheckOptions, PerturbationSpec,
};
use dyngame::io::{
    failures_csv, histogram_svg, mpc_trace_csv, overhead_svg, samples_csv, timing_csv, trajectory_csv,
};
use dyngame::kkt::PrimalDual;
use dyngame::model::GameProblem;
use dyngame::mpc::{mis_specification_run, mpc_run, MpcConfig};
use dyngame::scenarios::{build_scenario, ScenarioSpec};
use dyngame::solver::{solve as solve_game, SolverOptions};
use serde_json::json;

use crate::output::OutDir;
use crate::{Common, Outcome};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

/// Options a workflow accepts besides the solver's own.
struct Extra<'a> {
    keys: &'static [&'static str],
    set: &'a mut dyn FnMut(&str, &str) -> dyngame::Result<()>,
}

/// Routes every `KEY=VALUE` to the solver options or to the workflow's own
/// options. Keys known to neither are an error.
fn apply_overrides(c: &Common, command: &str, opts: &mut SolverOptions, mut extra: Option<Extra>) -> Result<()> {
    for item in &c.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| format!("override `{item}` is not of the form KEY=VALUE"))?;
        let (key, value) = (key.trim(), value.trim());
        if SolverOptions::KEYS.contains(&key) {
            opts.set(key, value)?;
        } else if let Some(e) = extra.as_mut().filter(|e| e.keys.contains(&key)) {
            (e.set)(key, value)?;
        } else {
            let mut valid: Vec<&str> = SolverOptions::KEYS.to_vec();
            if let Some(e) = &extra {
                valid.extend(e.keys);
            }
            return Err(format!("unknown option `{key}` for `{command}`; valid keys: {}", valid.join(", ")).into());
        }
    }
    Ok(())
}

fn load(path: &std::path::Path) -> Result<ScenarioSpec> {
    ScenarioSpec::load(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn single_scenario(c: &Common, command: &str) -> Result<ScenarioSpec> {
    match c.scenario.as_slice() {
        [path] => load(path),
        _ => Err(format!("`{command}` takes exactly one --scenario").into()),
    }
}

fn json_text(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json serializes") + "\n"
}

fn solution_paths(prob: &GameProblem, y: &PrimalDual) -> Vec<Vec<[f64; 2]>> {
    (0..prob.num_players())
        .map(|nu| {
            (0..prob.num_time_steps())
                .map(|t| {
                    let x = prob.state(&y.x, t);
                    [x[4 * nu], x[4 * nu + 1]]
                })
                .collect()
        })
        .collect()
}

pub fn solve(c: &Common) -> Result<Outcome> {
    let spec = single_scenario(c, "solve")?;
    let mut opts = SolverOptions::default();
    apply_overrides(c, "solve", &mut opts, None)?;
    let prob = build_scenario(&spec)?;
    let (y, _, rep) = solve_game(&prob, None, &opts)?;
    let out = OutDir::create(&c.out)?;
    out.write("trajectory.csv", &trajectory_csv(&prob, &y)?)?;
    let time_ms = rep.wall_time_secs() * 1e3;
    out.write(
        "solve.json",
        &json_text(&json!({
            "scenario": spec.name,
            "status": format!("{:?}", rep.status),
            "newton_iters": rep.newton_iters,
            "outer_iters": rep.outer_iters,
            "final_residual": rep.final_residual,
            "final_violation": rep.final_violation,
            "time_ms": time_ms,
        })),
    )?;
    if c.plot {
        out.write("overhead.svg", &overhead_svg(&spec, &solution_paths(&prob, &y)))?;
    }
    println!(
        "solve {}: {:?} in {time_ms:.1} ms, {} Newton steps, violation {:.2e}, residual {:.2e}",
        spec.name, rep.status, rep.newton_iters, rep.final_violation, rep.final_residual
    );
    Ok(if rep.status.is_converged() {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

pub fn mpc(c: &Common) -> Result<Outcome> {
    let spec = single_scenario(c, "mpc")?;
    let mut opts = SolverOptions::default();
    let mut cfg = MpcConfig {
        rng_seed: c.seed,
        ..Default::default()
    };
    apply_overrides(
        c,
        "mpc",
        &mut opts,
        Some(Extra {
            keys: MpcConfig::KEYS,
            set: &mut |k, v| cfg.set(k, v),
        }),
    )?;
    let trace = if spec.pedestrian.is_some() {
        mis_specification_run(&spec, &cfg, &opts)?
    } else {
        mpc_run(&spec, &cfg, &opts)?
    };
    let out = OutDir::create(&c.out)?;
    out.write("trace.csv", &mpc_trace_csv(&trace))?;
    let hz = trace.wall_clock_frequency();
    let ego_min_speed = trace.min_speed(spec.ego);
    let max_collision = trace.max_collision_value(spec.radius);
    out.write(
        "mpc.json",
        &json_text(&json!({
            "scenario": spec.name,
            "updates": trace.updates(),
            "failed_updates": trace.failures,
            "diverged_at": trace.diverged_at,
            "ego_min_speed": ego_min_speed,
            "max_collision_value": max_collision,
            "wall_clock_hz": hz,
        })),
    )?;
    if c.plot {
        let paths: Vec<Vec<[f64; 2]>> = (0..trace.num_players)
            .map(|nu| trace.states.iter().map(|x| [x[4 * nu], x[4 * nu + 1]]).collect())
            .collect();
        out.write("overhead.svg", &overhead_svg(&spec, &paths))?;
    }
    println!(
        "mpc {}: {} updates, {} failed, ego min speed {ego_min_speed:.3} m/s, max collision value {max_collision:.2e}, {hz:.1} Hz",
        spec.name,
        trace.updates(),
        trace.failures.len()
    );
    Ok(if trace.failures.is_empty() && trace.diverged_at.is_none() {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

pub fn montecarlo(c: &Common) -> Result<Outcome> {
    let spec = single_scenario(c, "montecarlo")?;
    let mut opts = SolverOptions::default();
    let mut pert = PerturbationSpec {
        rng_seed: c.seed,
        ..Default::default()
    };
    apply_overrides(
        c,
        "montecarlo",
        &mut opts,
        Some(Extra {
            keys: PerturbationSpec::KEYS,
            set: &mut |k, v| pert.set(k, v),
        }),
    )?;
    let n = c.n.unwrap_or(100);
    let run = monte_carlo(&spec, &pert, n, &opts)?;
    let failures = failure_taxonomy(&run, opts.tol_feas)?;
    let out = OutDir::create(&c.out)?;
    out.write("summary.json", &(run.stats.summary_json() + "\n"))?;
    out.write("samples.csv", &samples_csv(&run))?;
    out.write("failures.csv", &failures_csv(&failures))?;
    if c.plot {
        out.write("newton_iters.svg", &histogram_svg("Newton steps", &run.stats.newton_iter_histogram))?;
        out.write("violation.svg", &histogram_svg("Final max violation", &run.stats.violation_histogram))?;
    }
    println!(
        "montecarlo {}: {}/{} converged, {:.0}% within 16 Newton steps, median {:.1} ms",
        spec.name,
        run.stats.converged,
        run.stats.n_samples,
        100.0 * run.converged_within_iters(16),
        run.stats.solve_time_ms.p50
    );
    Ok(Outcome::Success)
}

pub fn bench(c: &Common) -> Result<Outcome> {
    let specs = c.scenario.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let mut opts = SolverOptions::default();
    apply_overrides(c, "bench", &mut opts, None)?;
    let rows = timing_benchmark(&specs, c.n.unwrap_or(10), &opts)?;
    let out = OutDir::create(&c.out)?;
    out.write("timing.csv", &timing_csv(&rows))?;
    let cells: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.1} ± {:.1} ms ({} failed)", r.scenario, r.mean_ms, r.std_ms, r.failures))
        .collect();
    println!("bench: {}", cells.join("; "));
    Ok(Outcome::Success)
}

pub fn nashcheck(c: &Common) -> Result<Outcome> {
    let spec = single_scenario(c, "nashcheck")?;
    let mut opts = SolverOptions::default();
    let mut nash = NashCheckOptions {
        rng_seed: c.seed,
        ..Default::default()
    };
    if let Some(n) = c.n {
        nash.n_directions = n;
    }
    apply_overrides(
        c,
        "nashcheck",
        &mut opts,
        Some(Extra {
            keys: NashCheckOptions::KEYS,
            set: &mut |k, v| nash.set(k, v),
        }),
    )?;
    let prob = build_scenario(&spec)?;
    let (y, al, rep) = solve_game(&prob, None, &opts)?;
    let report = nash_check(&prob, &y, &al, &nash)?;
    let out = OutDir::create(&c.out)?;
    out.write(
        "nash.json",
        &json_text(&json!({
            "scenario": spec.name,
            "status": format!("{:?}", rep.status),
            "players": report.players,
        })),
    )?;
    println!(
        "nashcheck {}: solve {:?}, {} improving deviations over {} players",
        spec.name,
        rep.status,
        report.improving_deviations(),
        report.players.len()
    );
    Ok(if rep.status.is_converged() && report.is_equilibrium() {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

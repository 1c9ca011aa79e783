use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::eval::{LabeledFailure, MonteCarloRun, TimingRow};
use crate::kkt::PrimalDual;
use crate::model::GameProblem;
use crate::mpc::MpcTrace;
use crate::solver::SolveStatus;

const STATE_NAMES: [&str; 4] = ["px", "py", "theta", "v"];
const CONTROL_NAMES: [&str; 2] = ["u1", "u2"];

fn writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

fn row(w: &mut csv::Writer<Vec<u8>>, fields: &[String]) {
    w.write_record(fields).expect("in-memory writer");
}

fn player_header(players: usize) -> Vec<String> {
    (0..players)
        .flat_map(|nu| {
            STATE_NAMES
                .iter()
                .chain(CONTROL_NAMES.iter())
                .map(move |name| format!("p{nu}_{name}"))
        })
        .collect()
}

/// Appends every player's state and, when given, joint control columns.
fn push_players(fields: &mut Vec<String>, x: &DVector<f64>, u: Option<&DVector<f64>>, players: usize) {
    for nu in 0..players {
        fields.extend((0..4).map(|i| x[4 * nu + i].to_string()));
        match u {
            Some(u) => fields.extend((0..2).map(|i| u[2 * nu + i].to_string())),
            None => fields.extend([String::new(), String::new()]),
        }
    }
}

fn status_name(s: SolveStatus) -> String {
    format!("{s:?}")
}

fn check_unicycle_layout(prob: &GameProblem) -> Result<()> {
    let m = prob.num_players();
    let ok = prob.state_dim() == 4 * m && (0..m).all(|nu| prob.player_control_dim(nu) == 2);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "trajectory CSV expects 4 states and 2 controls per player".into(),
        ))
    }
}

/// One row per time step: `t`, then `px, py, theta, v, u1, u2` per player.
/// The last state has no control, so its control cells are empty.
pub fn trajectory_csv(prob: &GameProblem, y: &PrimalDual) -> Result<String> {
    check_unicycle_layout(prob)?;
    y.check(prob)?;
    let m = prob.num_players();
    let dt = prob.dynamics().dt();
    let mut w = writer();
    let mut header = vec!["t".to_string()];
    header.extend(player_header(m));
    row(&mut w, &header);
    for t in 0..prob.num_time_steps() {
        let x = prob.state(&y.x, t).into_owned();
        let u = (t < prob.num_steps()).then(|| prob.joint_control(&y.u, t));
        let mut fields = vec![(t as f64 * dt).to_string()];
        push_players(&mut fields, &x, u.as_ref(), m);
        row(&mut w, &fields);
    }
    Ok(finish(w))
}

/// One row per executed state with the applied control and the cost of the
/// update that produced it. The final state has empty update columns.
pub fn mpc_trace_csv(trace: &MpcTrace) -> String {
    let m = trace.num_players;
    let mut w = writer();
    let mut header = vec!["t".to_string()];
    header.extend(player_header(m));
    header.extend(["solve_ms", "newton_iters", "status"].map(String::from));
    row(&mut w, &header);
    for (i, x) in trace.states.iter().enumerate() {
        let mut fields = vec![trace.time(i).to_string()];
        push_players(&mut fields, x, trace.controls.get(i), m);
        if i < trace.updates() {
            fields.push((trace.update_durations[i] * 1e3).to_string());
            fields.push(trace.newton_iters[i].to_string());
            fields.push(trace.statuses[i].map_or("Error".to_string(), status_name));
        } else {
            fields.extend([String::new(), String::new(), String::new()]);
        }
        row(&mut w, &fields);
    }
    finish(w)
}

pub fn samples_csv(run: &MonteCarloRun) -> String {
    let mut w = writer();
    row(
        &mut w,
        &[
            "index",
            "status",
            "time_ms",
            "newton_iters",
            "outer_iters",
            "final_residual",
            "max_violation",
            "resamples",
        ]
        .map(String::from),
    );
    for s in &run.samples {
        row(
            &mut w,
            &[
                s.index.to_string(),
                status_name(s.status),
                s.time_ms.to_string(),
                s.newton_iters.to_string(),
                s.outer_iters.to_string(),
                s.final_residual.to_string(),
                s.final_violation.to_string(),
                s.resamples.to_string(),
            ],
        );
    }
    finish(w)
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut w = writer();
    row(
        &mut w,
        &["scenario", "players", "mean_ms", "std_ms", "median_ms", "failures"].map(String::from),
    );
    for r in rows {
        row(
            &mut w,
            &[
                r.scenario.clone(),
                r.players.to_string(),
                r.mean_ms.to_string(),
                r.std_ms.to_string(),
                r.median_ms.to_string(),
                r.failures.to_string(),
            ],
        );
    }
    finish(w)
}

pub fn failures_csv(failures: &[LabeledFailure]) -> String {
    let mut w = writer();
    row(&mut w, &["index", "kind", "status", "max_collision"].map(String::from));
    for f in failures {
        row(
            &mut w,
            &[
                f.index.to_string(),
                format!("{:?}", f.kind),
                status_name(f.status),
                f.max_collision.to_string(),
            ],
        );
    }
    finish(w)
}

//! Cold-start solve-time benchmark.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenarios::{build_scenario, ScenarioSpec};
use crate::solver::{solve, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub scenario: String,
    pub players: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: f64,
    pub failures: usize,
    /// Newton iterations of every repetition, converged or not.
    pub newton_iters: Vec<usize>,
}

/// Times `repetitions` cold-start solves of every scenario after one untimed
/// warm-up solve. Problem construction is excluded. Statistics cover only
/// converged repetitions; the rest are counted in `failures`.
pub fn timing_benchmark(specs: &[ScenarioSpec], repetitions: usize, opts: &SolverOptions) -> Result<Vec<TimingRow>> {
    if repetitions < 2 {
        return Err(Error::InvalidArgument("repetitions must be at least 2".into()));
    }
    opts.validate()?;
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let prob = build_scenario(spec)?;
        solve(&prob, None, opts)?;
        let mut times = Vec::with_capacity(repetitions);
        let mut iters = Vec::with_capacity(repetitions);
        let mut failures = 0;
        for _ in 0..repetitions {
            let start = Instant::now();
            let (_, _, rep) = solve(&prob, None, opts)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            iters.push(rep.newton_iters);
            if rep.status.is_converged() {
                times.push(ms);
            } else {
                failures += 1;
            }
        }
        let (mean_ms, std_ms) = mean_std(&times);
        rows.push(TimingRow {
            scenario: spec.name.clone(),
            players: spec.num_players(),
            mean_ms,
            std_ms,
            median_ms: median(&times),
            failures,
            newton_iters: iters,
        });
    }
    Ok(rows)
}

/// Sample mean and unbiased standard deviation; NaN where undefined.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub(crate) fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let h = s.len() / 2;
    if s.len() % 2 == 1 {
        s[h]
    } else {
        0.5 * (s[h - 1] + s[h])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::presets;

    #[test]
    fn statistics() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn rows_and_repeatable_iterations() {
        let rows = timing_benchmark(&[presets::ramp_merge(2)], 2, &SolverOptions::default()).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!((r.scenario.as_str(), r.players, r.failures), ("ramp_merge_2", 2, 0));
        assert_eq!(r.newton_iters[0], r.newton_iters[1]);
        assert!(r.mean_ms > 0.0 && r.std_ms >= 0.0);
    }

    #[test]
    fn one_repetition_rejected() {
        assert!(timing_benchmark(&[presets::ramp_merge(2)], 1, &SolverOptions::default()).is_err());
    }
}

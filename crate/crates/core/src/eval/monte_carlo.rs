//! Batch solves from perturbed initial states.

use rayon::prelude::*;
use serde::Serialize;

use super::perturbation::PerturbationSpec;
use crate::error::{Error, Result};
use crate::kkt::PrimalDual;
use crate::model::GameProblem;
use crate::scenarios::{build_scenario, ScenarioSpec};
use crate::solver::{solve, SolveReport, SolveStatus, SolverOptions};

#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub index: usize,
    pub status: SolveStatus,
    pub time_ms: f64,
    pub newton_iters: usize,
    pub outer_iters: usize,
    pub final_residual: f64,
    pub final_violation: f64,
    /// Overlapping starts drawn and rejected before this sample.
    pub resamples: usize,
    pub problem: GameProblem,
    pub solution: PrimalDual,
    pub residual_history: Vec<f64>,
}

impl SampleOutcome {
    fn new(index: usize, resamples: usize, problem: GameProblem, solution: PrimalDual, rep: SolveReport) -> Self {
        Self {
            index,
            status: rep.status,
            time_ms: rep.wall_time_secs() * 1e3,
            newton_iters: rep.newton_iters,
            outer_iters: rep.outer_iters,
            final_residual: rep.final_residual,
            final_violation: rep.final_violation,
            resamples,
            problem,
            solution,
            residual_history: rep.residual_history,
        }
    }

    pub fn converged(&self) -> bool {
        self.status.is_converged()
    }
}

/// Counts over `[edges[i], edges[i+1])` plus a final bin for `≥ last edge`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn from_values(edges: Vec<f64>, values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0; edges.len()];
        for v in values {
            let bin = edges.iter().rposition(|&e| v >= e).unwrap_or(0);
            counts[bin] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub max: f64,
    pub mean: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles; NaN for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                min: f64::NAN,
                p50: f64::NAN,
                p90: f64::NAN,
                p95: f64::NAN,
                max: f64::NAN,
                mean: f64::NAN,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            min: v[0],
            p50: rank(0.5),
            p90: rank(0.9),
            p95: rank(0.95),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

/// Aggregate outcome of a batch. Everything except `solve_time_ms` is a
/// deterministic function of the inputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchStats {
    pub n_samples: usize,
    pub converged: usize,
    pub convergence_rate: f64,
    pub newton_iter_histogram: Histogram,
    /// Final maximum violation, bins in decades.
    pub violation_histogram: Histogram,
    pub failures: Vec<usize>,
    pub resampled_starts: usize,
    #[serde(skip)]
    pub solve_time_ms: Quantiles,
}

pub const NEWTON_BIN_WIDTH: usize = 4;
pub const NEWTON_BINS: usize = 16;

impl BatchStats {
    pub fn from_samples(samples: &[SampleOutcome]) -> Self {
        let n = samples.len();
        let converged = samples.iter().filter(|s| s.converged()).count();
        let newton_edges = (0..NEWTON_BINS).map(|i| (i * NEWTON_BIN_WIDTH) as f64).collect();
        let violation_edges = std::iter::once(0.0).chain((-8..=0).map(|e| 10f64.powi(e))).collect();
        let times: Vec<f64> = samples.iter().map(|s| s.time_ms).collect();
        Self {
            n_samples: n,
            converged,
            convergence_rate: if n == 0 { 0.0 } else { converged as f64 / n as f64 },
            newton_iter_histogram: Histogram::from_values(newton_edges, samples.iter().map(|s| s.newton_iters as f64)),
            violation_histogram: Histogram::from_values(
                violation_edges,
                samples.iter().map(|s| if s.final_violation.is_nan() { f64::INFINITY } else { s.final_violation }),
            ),
            failures: samples.iter().filter(|s| !s.converged()).map(|s| s.index).collect(),
            resampled_starts: samples.iter().map(|s| s.resamples).sum(),
            solve_time_ms: Quantiles::of(&times),
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub stats: BatchStats,
    pub samples: Vec<SampleOutcome>,
}

impl MonteCarloRun {
    /// Share of converged samples that needed at most `iters` Newton steps.
    pub fn converged_within_iters(&self, iters: usize) -> f64 {
        self.share_of_converged(|s| s.newton_iters <= iters)
    }

    /// Share of converged samples solved in under `ms` milliseconds.
    pub fn converged_within_ms(&self, ms: f64) -> f64 {
        self.share_of_converged(|s| s.time_ms < ms)
    }

    fn share_of_converged(&self, pred: impl Fn(&SampleOutcome) -> bool) -> f64 {
        let conv: Vec<_> = self.samples.iter().filter(|s| s.converged()).collect();
        if conv.is_empty() {
            return 0.0;
        }
        conv.iter().filter(|s| pred(s)).count() as f64 / conv.len() as f64
    }
}

/// Solves `n_samples` perturbed copies of the scenario in parallel. Sample `i`
/// always draws from the stream `(pert.rng_seed, i)`.
pub fn monte_carlo(
    spec: &ScenarioSpec,
    pert: &PerturbationSpec,
    n_samples: usize,
    opts: &SolverOptions,
) -> Result<MonteCarloRun> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    pert.validate()?;
    opts.validate()?;
    let base = build_scenario(spec)?;
    let samples = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let (x0, resamples) = pert.sample(spec, i as u64)?;
            let prob = base.with_initial_state(x0)?;
            let (y, _, rep) = solve(&prob, None, opts)?;
            Ok(SampleOutcome::new(i, resamples, prob, y, rep))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloRun {
        stats: BatchStats::from_samples(&samples),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins() {
        let h = Histogram::from_values(vec![0.0, 4.0, 8.0], [0.0, 3.9, 4.0, 7.0, 100.0]);
        assert_eq!(h.counts, vec![2, 2, 1]);
        assert_eq!(h.total(), 5);
    }

    #[test]
    fn quantiles_nearest_rank() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let q = Quantiles::of(&v);
        assert_eq!((q.min, q.p50, q.p90, q.p95, q.max), (1.0, 5.0, 9.0, 10.0, 10.0));
        assert_eq!(q.mean, 5.5);
        assert!(Quantiles::of(&[]).p50.is_nan());
    }
}

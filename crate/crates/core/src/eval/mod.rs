//! Evaluation protocols: Monte Carlo robustness, timing, equilibrium checks
//! and failure classification.

mod monte_carlo;
mod nash;
mod perturbation;
mod taxonomy;
mod timing;

pub use monte_carlo::{monte_carlo, BatchStats, Histogram, MonteCarloRun, Quantiles, SampleOutcome};
pub use perturbation::PerturbationSpec;
pub use nash::{nash_check, NashCheckOptions, NashReport, PlayerNashReport};
pub use taxonomy::{classify, failure_taxonomy, max_collision_value, residual_plateau, FailureKind, LabeledFailure, ENTANGLED_FACTOR};
pub use timing::{timing_benchmark, TimingRow};

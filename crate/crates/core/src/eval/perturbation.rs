//! Random initial-state perturbations.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenarios::{check_starts, ScenarioSpec};

const MAX_RESAMPLES: usize = 1000;

/// Half-widths of the uniform perturbation applied to every player's start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    /// Applied independently to `px` and `py` (m).
    pub position_delta: f64,
    /// Relative change of the initial speed.
    pub velocity_frac: f64,
    /// Heading change (rad).
    pub heading_delta: f64,
    pub rng_seed: u64,
}

impl Default for PerturbationSpec {
    /// ±1 m, ±3 % speed, ±2.5°.
    fn default() -> Self {
        Self {
            position_delta: 1.0,
            velocity_frac: 0.03,
            heading_delta: 2.5_f64.to_radians(),
            rng_seed: 0,
        }
    }
}

impl PerturbationSpec {
    pub fn zero(rng_seed: u64) -> Self {
        Self {
            position_delta: 0.0,
            velocity_frac: 0.0,
            heading_delta: 0.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.position_delta) && ok(self.velocity_frac) && ok(self.heading_delta) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("perturbation magnitudes must be finite and nonnegative".into()))
        }
    }

    /// Applies a `key=value` override; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("`{key}` expects a number, got `{v}`")))
        };
        match key {
            "position_delta" => self.position_delta = num(value)?,
            "velocity_frac" => self.velocity_frac = num(value)?,
            "heading_delta" => self.heading_delta = num(value)?,
            "rng_seed" => {
                self.rng_seed = value
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("`{key}` expects an integer, got `{value}`")))?
            }
            _ => return Err(Error::InvalidArgument(format!("unknown perturbation option `{key}`"))),
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &["position_delta", "velocity_frac", "heading_delta", "rng_seed"];

    /// Random stream for one sample, independent of how samples are scheduled.
    pub fn sample_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(index);
        rng
    }

    fn draw(&self, rng: &mut impl Rng, nominal: &DVector<f64>) -> DVector<f64> {
        let mut sym = |h: f64| if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 };
        let mut x = nominal.clone();
        for p in 0..x.len() / 4 {
            x[4 * p] += sym(self.position_delta);
            x[4 * p + 1] += sym(self.position_delta);
            x[4 * p + 2] += sym(self.heading_delta);
            x[4 * p + 3] *= 1.0 + sym(self.velocity_frac);
        }
        x
    }

    /// Perturbed joint start for sample `index`, redrawn until no two players
    /// overlap. Returns the state and the number of rejected draws.
    pub fn sample(&self, spec: &ScenarioSpec, index: u64) -> Result<(DVector<f64>, usize)> {
        let nominal = spec.initial_state();
        let mut rng = self.sample_rng(index);
        for rejected in 0..MAX_RESAMPLES {
            let x = self.draw(&mut rng, &nominal);
            if check_starts(spec, &x).is_ok() {
                if rejected > 0 {
                    log::info!("sample {index}: resampled {rejected} overlapping starts");
                }
                return Ok((x, rejected));
            }
        }
        Err(Error::Scenario(format!(
            "sample {index}: no collision-free start after {MAX_RESAMPLES} draws"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::presets;

    #[test]
    fn samples_stay_within_bounds() {
        let spec = presets::ramp_merge(3);
        let pert = PerturbationSpec::default();
        let nominal = spec.initial_state();
        for i in 0..50 {
            let (x, _) = pert.sample(&spec, i).unwrap();
            for p in 0..3 {
                assert!((x[4 * p] - nominal[4 * p]).abs() <= 1.0);
                assert!((x[4 * p + 1] - nominal[4 * p + 1]).abs() <= 1.0);
                assert!((x[4 * p + 2] - nominal[4 * p + 2]).abs() <= pert.heading_delta);
                assert!((x[4 * p + 3] / nominal[4 * p + 3] - 1.0).abs() <= 0.03 + 1e-12);
            }
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let spec = presets::ramp_merge(3);
        let pert = PerturbationSpec::default();
        assert_eq!(pert.sample(&spec, 4).unwrap(), pert.sample(&spec, 4).unwrap());
        assert_ne!(pert.sample(&spec, 4).unwrap().0, pert.sample(&spec, 5).unwrap().0);
        let other = PerturbationSpec { rng_seed: 1, ..pert };
        assert_ne!(pert.sample(&spec, 4).unwrap().0, other.sample(&spec, 4).unwrap().0);
    }

    #[test]
    fn zero_perturbation_is_nominal() {
        let spec = presets::intersection(2, true);
        let (x, rejected) = PerturbationSpec::zero(3).sample(&spec, 9).unwrap();
        assert_eq!(x, spec.initial_state());
        assert_eq!(rejected, 0);
    }

    #[test]
    fn overlapping_draws_are_rejected() {
        let mut spec = presets::ramp_merge(2);
        spec.players[1].start.px = spec.players[0].start.px + 1.5;
        spec.players[1].start.py = spec.players[0].start.py;
        let pert = PerturbationSpec::default();
        let total: usize = (0..40).map(|i| pert.sample(&spec, i).unwrap().1).sum();
        assert!(total > 0);
        for i in 0..40 {
            let (x, _) = pert.sample(&spec, i).unwrap();
            check_starts(&spec, &x).unwrap();
        }
    }
}

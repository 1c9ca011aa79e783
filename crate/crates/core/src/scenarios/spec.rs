//! Versioned JSON description of a driving scenario.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::geometry::{Point, Polyline};
use super::unicycle::{UnicycleState, STATE_DIM};
use crate::error::{Error, Result};
use crate::model::Integrator;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    RampMerge,
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    #[default]
    Vehicle,
    /// Exempt from road-boundary constraints.
    Pedestrian,
}

/// One player: start state, goal state and diagonal quadratic weights
/// ordered `(px, py, θ, v)` for states and `(ω, a)` for controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSpec {
    #[serde(default)]
    pub kind: AgentKind,
    pub start: UnicycleState,
    pub goal: UnicycleState,
    pub q: [f64; 4],
    pub r: [f64; 2],
    pub qf: [f64; 4],
}

/// Speeds for the mis-specified pedestrian experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianSpeeds {
    /// Speed the other players assume the pedestrian wants (`v_d`).
    pub desired: f64,
    /// Speed the simulated pedestrian actually walks at (`v_0`).
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub kind: ScenarioKind,
    /// Shared collision and boundary clearance radius (m).
    pub radius: f64,
    /// Planning horizon `T` (s).
    pub horizon: f64,
    /// Number of time steps `N`, including the pinned initial state.
    pub time_steps: usize,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    /// Road boundaries as polylines of `[x, y]` points.
    #[serde(default)]
    pub boundaries: Vec<Vec<[f64; 2]>>,
    pub players: Vec<PlayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pedestrian: Option<PedestrianSpeeds>,
    /// Player whose behavior is reported in MPC experiments.
    #[serde(default)]
    pub ego: usize,
}

fn default_integrator() -> Integrator {
    Integrator::Rk4
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn check_weights(path: String, w: &[f64], strictly_positive: bool) -> Result<()> {
    for (i, &v) in w.iter().enumerate() {
        let ok = v.is_finite() && if strictly_positive { v > 0.0 } else { v >= 0.0 };
        if !ok {
            let need = if strictly_positive { "positive" } else { "nonnegative" };
            return Err(schema(format!("{path}[{i}]"), format!("weight must be finite and {need}, got {v}")));
        }
    }
    Ok(())
}

impl ScenarioSpec {
    /// Parses and validates a scenario document. Errors carry the JSON path
    /// of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema(path, e.into_inner().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(schema("radius", "must be finite and positive"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(schema("horizon", "must be finite and positive"));
        }
        if self.time_steps < 2 {
            return Err(schema("time_steps", "must be at least 2"));
        }
        if self.players.is_empty() {
            return Err(schema("players", "at least one player is required"));
        }
        for (i, b) in self.boundaries.iter().enumerate() {
            if Polyline::new(b.iter().map(|p| Point::new(p[0], p[1])).collect()).is_none() {
                return Err(schema(format!("boundaries[{i}]"), "needs at least 2 finite points"));
            }
        }
        for (i, p) in self.players.iter().enumerate() {
            if !p.start.is_finite() {
                return Err(schema(format!("players[{i}].start"), "state must be finite"));
            }
            if !p.goal.is_finite() {
                return Err(schema(format!("players[{i}].goal"), "state must be finite"));
            }
            check_weights(format!("players[{i}].q"), &p.q, false)?;
            check_weights(format!("players[{i}].r"), &p.r, true)?;
            check_weights(format!("players[{i}].qf"), &p.qf, false)?;
        }
        let pedestrians = self.pedestrian_indices();
        if let Some(speeds) = self.pedestrian {
            if pedestrians.len() != 1 {
                return Err(schema("pedestrian", "requires exactly one player of kind `pedestrian`"));
            }
            if !(speeds.desired.is_finite() && speeds.desired > 0.0) {
                return Err(schema("pedestrian.desired", "must be finite and positive"));
            }
            if !(speeds.actual.is_finite() && speeds.actual >= 0.0) {
                return Err(schema("pedestrian.actual", "must be finite and nonnegative"));
            }
        }
        if self.ego >= self.players.len() {
            return Err(schema("ego", format!("player index {} out of range", self.ego)));
        }
        Ok(())
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    /// `T / N`, so the last planned state lies at `T − dt`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.time_steps as f64
    }

    pub fn pedestrian_indices(&self) -> Vec<usize> {
        (0..self.players.len()).filter(|&i| self.players[i].kind == AgentKind::Pedestrian).collect()
    }

    /// The single pedestrian player when the mis-specification block is set.
    pub fn pedestrian_player(&self) -> Option<usize> {
        self.pedestrian.and_then(|_| self.pedestrian_indices().first().copied())
    }

    pub fn polylines(&self) -> Vec<Polyline> {
        self.boundaries
            .iter()
            .map(|b| Polyline::new(b.iter().map(|p| Point::new(p[0], p[1])).collect()).expect("validated"))
            .collect()
    }

    /// Joint initial state stacked player by player.
    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_iterator(
            STATE_DIM * self.players.len(),
            self.players.iter().flat_map(|p| p.start.to_array()),
        )
    }

    /// Same scenario planned over `time_steps` steps spanning `horizon` seconds.
    pub fn with_horizon(&self, time_steps: usize, horizon: f64) -> Self {
        Self {
            time_steps,
            horizon,
            ..self.clone()
        }
    }
}

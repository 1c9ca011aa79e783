//! Driving games: unicycle players, collision circles and road boundaries.

mod build;
pub mod geometry;
pub mod presets;
mod spec;
pub mod unicycle;

pub use build::{build_scenario, check_starts, penalty_objective};
pub use geometry::{boundary_constraint, collision_constraint, Point, Polyline};
pub use spec::{AgentKind, PedestrianSpeeds, PlayerSpec, ScenarioKind, ScenarioSpec, SCHEMA_VERSION};
pub use unicycle::{unicycle_rhs, UnicycleState};

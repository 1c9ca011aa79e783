//! Default ramp-merge and intersection scenarios.
//!
//! Lanes are 3 m wide and the clearance radius is 1 m. Every road keeps a
//! 1 m shoulder beyond its outer lane edges, so a car centered in its lane has
//! 1.5 m of lateral slack before a boundary constraint becomes active.

use std::f64::consts::FRAC_PI_2;
use std::f64::consts::PI;

use super::spec::{AgentKind, PedestrianSpeeds, PlayerSpec, ScenarioKind, ScenarioSpec, SCHEMA_VERSION};
use super::unicycle::UnicycleState;
use crate::model::Integrator;

pub const LANE_WIDTH: f64 = 3.0;
pub const SHOULDER: f64 = 1.0;
pub const RADIUS: f64 = 1.0;
pub const TIMING_HORIZON: f64 = 5.0;
pub const TIMING_STEPS: usize = 40;
pub const MPC_HORIZON: f64 = 3.0;
pub const MPC_STEPS: usize = 40;

const CONTROL_WEIGHTS: [f64; 2] = [1.0, 1.0];

fn car(start: UnicycleState, goal: UnicycleState, q: [f64; 4], qf: [f64; 4]) -> PlayerSpec {
    PlayerSpec {
        kind: AgentKind::Vehicle,
        start,
        goal,
        q,
        r: CONTROL_WEIGHTS,
        qf,
    }
}

/// Tracks a lane parallel to the x axis: lateral offset, heading and speed.
fn along_x(px: f64, py: f64, heading: f64, v: f64, lane_y: f64) -> PlayerSpec {
    car(
        UnicycleState::new(px, py, heading, v),
        UnicycleState::new(0.0, lane_y, heading, v),
        [0.0, 1.0, 1.0, 0.3],
        [0.0, 10.0, 10.0, 3.0],
    )
}

/// Tracks a lane parallel to the y axis.
fn along_y(px: f64, py: f64, heading: f64, v: f64, lane_x: f64) -> PlayerSpec {
    car(
        UnicycleState::new(px, py, heading, v),
        UnicycleState::new(lane_x, 0.0, heading, v),
        [1.0, 0.0, 1.0, 0.3],
        [10.0, 0.0, 10.0, 3.0],
    )
}

/// Ramp lane center, below the main lane.
pub const RAMP_Y: f64 = -4.0;

/// Single-lane main road along the x axis with a parallel ramp lane below it
/// whose outer edge tapers into the main road between x = 35 and x = 75, past
/// the point the ramp car reaches when coasting over the horizon.
///
/// Players in order: the ramp car, the main-road car approaching from behind,
/// a main-road car ahead, and a trailing main-road car.
pub fn ramp_merge(players: usize) -> ScenarioSpec {
    assert!((1..=4).contains(&players), "ramp merge supports 1 to 4 players");
    let edge = LANE_WIDTH / 2.0 + SHOULDER;
    let all = [
        along_x(-13.5, RAMP_Y, 0.0, 9.0, 0.0),
        along_x(-20.0, 0.0, 0.0, 10.0, 0.0),
        along_x(-7.0, 0.0, 0.0, 8.5, 0.0),
        along_x(-26.0, 0.0, 0.0, 10.0, 0.0),
    ];
    ScenarioSpec {
        schema_version: SCHEMA_VERSION,
        name: format!("ramp_merge_{players}"),
        kind: ScenarioKind::RampMerge,
        radius: RADIUS,
        horizon: TIMING_HORIZON,
        time_steps: TIMING_STEPS,
        integrator: Integrator::Rk4,
        boundaries: vec![
            vec![[-100.0, edge], [200.0, edge]],
            vec![[-100.0, RAMP_Y - edge], [35.0, RAMP_Y - edge], [75.0, -edge], [200.0, -edge]],
        ],
        players: all[..players].to_vec(),
        pedestrian: None,
        ego: 0,
    }
}

/// Crosswalk position west of the junction.
pub const CROSSWALK_X: f64 = -5.0;
/// Walking speed the cars assume for the pedestrian.
pub const PEDESTRIAN_SPEED: f64 = 1.5;
/// Speed the simulated pedestrian actually walks at in the preset.
pub const SLOW_PEDESTRIAN_SPEED: f64 = 0.75;
/// A walker is modeled as keeping a steady pace: changing speed is costly.
const PEDESTRIAN_CONTROL_WEIGHTS: [f64; 2] = [1.0, 100.0];

/// Two-lane east-west road crossing a two-lane north-south road.
///
/// Cars in order: eastbound (the ego), westbound, northbound. The ego reaches
/// the crosswalk just after a pedestrian walking at [`PEDESTRIAN_SPEED`]
/// clears its lane, and the northbound car reaches the junction together
/// with the ego. With `pedestrian` a walker crossing the east-west road from
/// south to north is appended as the last player.
pub fn intersection(cars: usize, pedestrian: bool) -> ScenarioSpec {
    assert!((1..=3).contains(&cars), "intersection supports 1 to 3 cars");
    let lane = LANE_WIDTH / 2.0;
    let half = LANE_WIDTH + SHOULDER;
    let far = 60.0;
    let all = [
        along_x(-18.2, -lane, 0.0, 6.0, -lane),
        along_x(8.0, lane, PI, 6.0, lane),
        along_y(lane, -21.0, FRAC_PI_2, 6.0, lane),
    ];
    let mut players = all[..cars].to_vec();
    if pedestrian {
        players.push(PlayerSpec {
            kind: AgentKind::Pedestrian,
            start: UnicycleState::new(CROSSWALK_X, -LANE_WIDTH, FRAC_PI_2, PEDESTRIAN_SPEED),
            goal: UnicycleState::new(CROSSWALK_X, 0.0, FRAC_PI_2, PEDESTRIAN_SPEED),
            q: [1.0, 0.0, 1.0, 1.0],
            r: PEDESTRIAN_CONTROL_WEIGHTS,
            qf: [10.0, 0.0, 10.0, 10.0],
        });
    }
    let corner = |sx: f64, sy: f64| vec![[sx * far, sy * half], [sx * half, sy * half], [sx * half, sy * far]];
    ScenarioSpec {
        schema_version: SCHEMA_VERSION,
        name: format!("intersection_{cars}{}", if pedestrian { "_pedestrian" } else { "" }),
        kind: ScenarioKind::Intersection,
        radius: RADIUS,
        horizon: TIMING_HORIZON,
        time_steps: TIMING_STEPS,
        integrator: Integrator::Rk4,
        boundaries: vec![corner(-1.0, -1.0), corner(1.0, -1.0), corner(-1.0, 1.0), corner(1.0, 1.0)],
        players,
        pedestrian: pedestrian.then_some(PedestrianSpeeds {
            desired: PEDESTRIAN_SPEED,
            actual: SLOW_PEDESTRIAN_SPEED,
        }),
        ego: 0,
    }
}

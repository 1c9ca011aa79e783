//! Assembles a [`GameProblem`] from a [`ScenarioSpec`].

use std::sync::Arc;

use nalgebra::DVector;

use super::geometry::{BoundaryConstraint, CollisionConstraint, Point};
use super::spec::{AgentKind, ScenarioSpec};
use super::unicycle::{UnicycleFleet, CONTROL_DIM};
use crate::error::{check_dim, Error, Result};
use crate::model::{ConstraintKind, ConstraintSet, GameProblem, JointDynamics, PlayerCost};

/// Builds the unicycle game: joint dynamics, one quadratic cost per player,
/// collision constraints for every pair and boundary constraints for every
/// vehicle at every step after the initial one.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<GameProblem> {
    spec.validate()?;
    check_starts(spec, &spec.initial_state())?;
    let m = spec.num_players();
    let dims = vec![CONTROL_DIM; m];
    let dynamics = JointDynamics::continuous(Arc::new(UnicycleFleet::new(m)), dims, spec.dt(), spec.integrator)?;
    let costs = (0..m).map(|nu| player_cost(spec, nu)).collect::<Result<Vec<_>>>()?;
    let boundaries: Vec<_> = spec.polylines().into_iter().map(Arc::new).collect();
    let r = spec.radius;

    let mut set = ConstraintSet::new();
    for k in 0..spec.time_steps - 1 {
        for i in 0..m {
            for j in i + 1..m {
                let c = CollisionConstraint {
                    first: i,
                    second: j,
                    radius: r,
                };
                set.add_inequality(k, Arc::new(c), format!("collision_{i}_{j}_k{}", k + 1));
            }
        }
        for i in (0..m).filter(|&i| spec.players[i].kind == AgentKind::Vehicle) {
            for (b, boundary) in boundaries.iter().enumerate() {
                let c = BoundaryConstraint {
                    player: i,
                    boundary: boundary.clone(),
                    radius: r,
                };
                set.add_inequality(k, Arc::new(c), format!("boundary_{i}_b{b}_k{}", k + 1));
            }
        }
    }
    GameProblem::new(spec.time_steps, dynamics, costs, set, spec.initial_state())
}

/// Stacks player `nu`'s diagonal weights into the joint state space.
fn player_cost(spec: &ScenarioSpec, nu: usize) -> Result<PlayerCost> {
    let m = spec.num_players();
    let p = &spec.players[nu];
    let mut q = vec![0.0; 4 * m];
    let mut qf = vec![0.0; 4 * m];
    q[4 * nu..4 * nu + 4].copy_from_slice(&p.q);
    qf[4 * nu..4 * nu + 4].copy_from_slice(&p.qf);
    let mut goal = DVector::zeros(4 * m);
    goal.rows_mut(4 * nu, 4).copy_from_slice(&p.goal.to_array());
    if let (Some(speeds), Some(ped)) = (spec.pedestrian, spec.pedestrian_player()) {
        if ped == nu {
            goal[4 * nu + 3] = speeds.desired;
        }
    }
    PlayerCost::diagonal(&q, &p.r, &qf, goal)
}

/// Rejects joint states where two players are within the clearance radius.
pub fn check_starts(spec: &ScenarioSpec, x0: &DVector<f64>) -> Result<()> {
    check_dim("joint initial state", 4 * spec.num_players(), x0.len())?;
    let pos = |i: usize| Point::new(x0[4 * i], x0[4 * i + 1]);
    for i in 0..spec.num_players() {
        for j in i + 1..spec.num_players() {
            let d = (pos(i) - pos(j)).norm();
            if d <= spec.radius {
                return Err(Error::Scenario(format!(
                    "players {i} and {j} start {d:.3} m apart, within radius {}",
                    spec.radius
                )));
            }
        }
    }
    Ok(())
}

/// Penalty-method objective `J^ν + ½ Σ_k ρ_k C_k²` over active constraints,
/// where an inequality is active iff `C_k ≥ 0` and equalities always are.
pub fn penalty_objective(
    prob: &GameProblem,
    xs: &DVector<f64>,
    us: &[DVector<f64>],
    rho: &DVector<f64>,
    nu: usize,
) -> Result<f64> {
    let c = prob.constraint_values(xs, us)?;
    check_dim("penalty vector", c.len(), rho.len())?;
    let cost = prob.player_cost(nu, xs, &us[nu])?;
    let penalty: f64 = (0..c.len())
        .filter(|&k| prob.constraints().kind(k) == ConstraintKind::Equality || c[k] >= 0.0)
        .map(|k| 0.5 * rho[k] * c[k] * c[k])
        .sum();
    Ok(cost + penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AffineConstraint;
    use crate::scenarios::presets;
    use crate::solver::initial_rollout;

    #[test]
    fn ramp_merge_dimensions() {
        let spec = presets::ramp_merge(3);
        let prob = build_scenario(&spec).unwrap();
        assert_eq!(prob.state_dim(), 12);
        assert_eq!(prob.control_dim(), 6);
        let per_step = 3 + 3 * spec.boundaries.len();
        assert_eq!(prob.constraints().num_inequalities(), per_step * (spec.time_steps - 1));
        assert_eq!(prob.constraints().num_equalities(), 0);
    }

    #[test]
    fn pedestrian_is_a_player_without_boundaries() {
        let spec = presets::intersection(2, true);
        let prob = build_scenario(&spec).unwrap();
        assert_eq!(prob.num_players(), 3);
        let per_step = 3 + 2 * spec.boundaries.len();
        assert_eq!(prob.constraints().num_inequalities(), per_step * (spec.time_steps - 1));
        assert!(prob.constraints().labels().iter().all(|l| !l.starts_with("boundary_2")));
        let goal = prob.costs()[2].x_goal();
        assert_eq!(goal[8], presets::CROSSWALK_X);
    }

    #[test]
    fn rollout_constraints_are_finite() {
        for spec in [presets::ramp_merge(4), presets::intersection(3, true)] {
            let prob = build_scenario(&spec).unwrap();
            let y = initial_rollout(&prob);
            assert!(prob.constraint_values(&y.x, &y.u).unwrap().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn overlapping_starts_rejected() {
        let mut spec = presets::ramp_merge(2);
        spec.players[1].start.px = spec.players[0].start.px + 0.3;
        spec.players[1].start.py = spec.players[0].start.py;
        assert!(matches!(build_scenario(&spec), Err(Error::Scenario(_))));
    }

    #[test]
    fn penalty_objective_examples() {
        let spec = presets::ramp_merge(2);
        let prob = build_scenario(&spec).unwrap();
        let y = initial_rollout(&prob);
        let cost = prob.player_cost(0, &y.x, &y.u[0]).unwrap();

        // one violated inequality and one equality of either sign
        let mut set = ConstraintSet::new();
        let affine = |value: f64| {
            Arc::new(AffineConstraint {
                a: DVector::zeros(8),
                b: DVector::zeros(4),
                c: -value,
            })
        };
        set.add_inequality(0, affine(0.1), "violated");
        set.add_inequality(0, affine(-0.1), "satisfied");
        set.add_equality(1, affine(-0.1), "equality");
        let prob = GameProblem::new(
            spec.time_steps,
            prob.dynamics().clone(),
            prob.costs().to_vec(),
            set,
            prob.x0().clone(),
        )
        .unwrap();
        let rho = DVector::from_element(3, 100.0);
        let value = penalty_objective(&prob, &y.x, &y.u, &rho, 0).unwrap();
        assert!((value - cost - 1.0).abs() < 1e-12);

        let mut set = ConstraintSet::new();
        set.add_inequality(0, affine(-0.1), "satisfied");
        let prob = GameProblem::new(
            spec.time_steps,
            prob.dynamics().clone(),
            prob.costs().to_vec(),
            set,
            prob.x0().clone(),
        )
        .unwrap();
        let rho = DVector::from_element(1, 100.0);
        assert_eq!(penalty_objective(&prob, &y.x, &y.u, &rho, 0).unwrap(), cost);
    }
}

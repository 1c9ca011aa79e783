//! Random game generators shared by tests and benchmarks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::kkt::{ALState, PrimalDual};
use crate::model::{AffineConstraint, ConstraintSet, GameProblem, Integrator, JointDynamics, PlayerCost};
use crate::scenarios::geometry::{BoundaryConstraint, CollisionConstraint, Point, Polyline};
use crate::scenarios::unicycle::UnicycleFleet;

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

fn random_psd(rng: &mut impl Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let l = random_matrix(rng, n, n, 1.0);
    &l * l.transpose() / n as f64 + DMatrix::identity(n, n) * shift
}

fn random_costs(rng: &mut impl Rng, n: usize, control_dims: &[usize]) -> Vec<PlayerCost> {
    control_dims
        .iter()
        .map(|&m| {
            PlayerCost::new(
                random_psd(rng, n, 0.0),
                random_psd(rng, m, 0.5),
                random_psd(rng, n, 0.0),
                random_vector(rng, n, 1.0),
            )
            .expect("valid random cost")
        })
        .collect()
}

/// Unconstrained linear-quadratic game with `players` players of `m_each` controls.
pub fn random_lq_game(rng: &mut impl Rng, players: usize, time_steps: usize, n: usize, m_each: usize) -> GameProblem {
    let dims = vec![m_each; players];
    let a = DMatrix::identity(n, n) + random_matrix(rng, n, n, 0.2);
    let b = random_matrix(rng, n, players * m_each, 0.5);
    let dynamics = JointDynamics::linear(a, b, dims.clone(), 0.1).expect("valid dynamics");
    let costs = random_costs(rng, n, &dims);
    GameProblem::new(time_steps, dynamics, costs, ConstraintSet::new(), random_vector(rng, n, 1.0))
        .expect("valid problem")
}

fn add_affine_constraints(rng: &mut impl Rng, set: &mut ConstraintSet, steps: usize, n: usize, m: usize) {
    for k in 0..steps {
        for e in 0..2 {
            let f = Arc::new(AffineConstraint {
                a: random_vector(rng, n, 1.0),
                b: random_vector(rng, m, 1.0),
                c: rng.random_range(-0.5..0.5),
            });
            if e == 0 {
                set.add_inequality(k, f, format!("affine_ineq_{k}"));
            } else if k % 2 == 0 {
                set.add_equality(k, f, format!("affine_eq_{k}"));
            }
        }
    }
}

/// Linear dynamics, quadratic costs, affine inequality and equality constraints.
pub fn random_linear_constrained_game(
    rng: &mut impl Rng,
    players: usize,
    time_steps: usize,
    n: usize,
    m_each: usize,
) -> GameProblem {
    let base = random_lq_game(rng, players, time_steps, n, m_each);
    let mut set = ConstraintSet::new();
    add_affine_constraints(rng, &mut set, time_steps - 1, n, players * m_each);
    GameProblem::new(time_steps, base.dynamics().clone(), base.costs().to_vec(), set, base.x0().clone())
        .expect("valid problem")
}

/// Unicycle players with collision, boundary and affine constraints.
pub fn random_unicycle_game(rng: &mut impl Rng, players: usize, time_steps: usize, integrator: Integrator) -> GameProblem {
    let n = 4 * players;
    let dims = vec![2; players];
    let dynamics =
        JointDynamics::continuous(Arc::new(UnicycleFleet::new(players)), dims.clone(), 0.1, integrator).expect("valid");
    let costs = random_costs(rng, n, &dims);
    let boundary = Arc::new(
        Polyline::new(vec![Point::new(-20.0, -3.0), Point::new(0.0, -3.5), Point::new(20.0, -3.0)]).expect("polyline"),
    );
    let mut set = ConstraintSet::new();
    let radius = 1.0;
    for k in 0..time_steps - 1 {
        for i in 0..players {
            for j in i + 1..players {
                set.add_inequality(
                    k,
                    Arc::new(CollisionConstraint {
                        first: i,
                        second: j,
                        radius,
                    }),
                    format!("collision_{i}_{j}_{k}"),
                );
            }
            set.add_inequality(
                k,
                Arc::new(BoundaryConstraint {
                    player: i,
                    boundary: boundary.clone(),
                    radius,
                }),
                format!("boundary_{i}_{k}"),
            );
        }
    }
    add_affine_constraints(rng, &mut set, time_steps - 1, n, 2 * players);
    let x0 = DVector::from_fn(n, |i, _| match i % 4 {
        0 => rng.random_range(-2.0..2.0) + 3.0 * (i / 4) as f64,
        1 => rng.random_range(-1.0..1.0),
        2 => rng.random_range(-0.5..0.5),
        _ => rng.random_range(0.5..2.0),
    });
    GameProblem::new(time_steps, dynamics, costs, set, x0).expect("valid problem")
}

/// Random primal-dual point with entries of magnitude up to `scale`.
pub fn random_primal_dual(rng: &mut impl Rng, prob: &GameProblem, scale: f64) -> PrimalDual {
    let mut y = PrimalDual::zeros(prob);
    let xs = random_vector(rng, y.x.len(), scale);
    y.x = prob.rollout(&y.u).expect("rollout") + xs;
    for u in &mut y.u {
        *u = random_vector(rng, u.len(), scale);
    }
    for mu in &mut y.mu {
        *mu = random_vector(rng, mu.len(), scale);
    }
    y
}

/// Multipliers with a mix of zero and positive inequality entries and random penalties.
pub fn random_al_state(rng: &mut impl Rng, prob: &GameProblem) -> ALState {
    let set = prob.constraints();
    let mut al = ALState::for_problem(prob, 1.0, 10.0, 1e8).expect("valid schedule");
    for k in 0..al.len() {
        al.rho[k] = rng.random_range(0.5..20.0);
        al.lambda[k] = if k < set.num_inequalities() {
            if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(0.0..2.0)
            }
        } else {
            rng.random_range(-2.0..2.0)
        };
    }
    al
}

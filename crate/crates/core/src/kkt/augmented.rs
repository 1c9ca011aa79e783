//! Per-player augmented Lagrangians and the stacked KKT residual `G`.

use nalgebra::{DMatrix, DVector};

use super::PrimalDual;
use crate::error::{check_dim, Error, Result};
use crate::model::GameProblem;

/// Shared constraint multipliers `λ` and penalties `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ALState {
    pub lambda: DVector<f64>,
    pub rho: DVector<f64>,
    pub gamma: f64,
    pub rho_max: f64,
    num_inequalities: usize,
}

impl ALState {
    pub fn new(num_inequalities: usize, num_equalities: usize, rho0: f64, gamma: f64, rho_max: f64) -> Result<Self> {
        if !(rho0 > 0.0) || !(gamma > 1.0) || rho_max < rho0 {
            return Err(Error::InvalidArgument(format!(
                "penalty schedule needs rho0 > 0, gamma > 1, rho_max >= rho0 (got {rho0}, {gamma}, {rho_max})"
            )));
        }
        let nc = num_inequalities + num_equalities;
        Ok(Self {
            lambda: DVector::zeros(nc),
            rho: DVector::from_element(nc, rho0),
            gamma,
            rho_max,
            num_inequalities,
        })
    }

    pub fn for_problem(prob: &GameProblem, rho0: f64, gamma: f64, rho_max: f64) -> Result<Self> {
        let c = prob.constraints();
        Self::new(c.num_inequalities(), c.num_equalities(), rho0, gamma, rho_max)
    }

    pub fn num_inequalities(&self) -> usize {
        self.num_inequalities
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}

/// Diagonal of `I_ρ`: an inequality is switched off when it is strictly
/// satisfied and its multiplier is zero; equalities are always on.
pub fn penalty_weights(c: &DVector<f64>, al: &ALState) -> DVector<f64> {
    DVector::from_iterator(
        c.len(),
        c.iter().enumerate().map(|(k, &ck)| {
            if k < al.num_inequalities && ck < 0.0 && al.lambda[k] == 0.0 {
                0.0
            } else {
                al.rho[k]
            }
        }),
    )
}

/// Everything the residual and its Jacobian need at one iterate.
#[derive(Debug, Clone)]
pub(crate) struct Linearization {
    pub defects: DVector<f64>,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub c: DVector<f64>,
    pub grad_x: Vec<DVector<f64>>,
    pub grad_u: Vec<DVector<f64>>,
    pub weights: DVector<f64>,
}

impl Linearization {
    pub fn new(prob: &GameProblem, y: &PrimalDual, al: &ALState) -> Result<Self> {
        y.check(prob)?;
        check_dim("multiplier vector", prob.constraints().len(), al.len())?;
        let n = prob.state_dim();
        let steps = prob.num_steps();
        let dyn_ = prob.dynamics();
        let controls: Vec<_> = (0..steps).map(|k| prob.joint_control(&y.u, k)).collect();
        let mut defects = DVector::zeros(prob.stacked_state_dim());
        let mut a = Vec::with_capacity(steps);
        let mut b = Vec::with_capacity(steps);
        for (k, u) in controls.iter().enumerate() {
            let prev = prob.state(&y.x, k).into_owned();
            let (next, ak, bk) = dyn_.linearize(&prev, u);
            defects.rows_mut(k * n, n).copy_from(&(prob.state(&y.x, k + 1) - next));
            a.push(ak);
            b.push(bk);
        }
        let m = prob.control_dim();
        let nc = prob.constraints().len();
        let mut c = DVector::zeros(nc);
        let mut grad_x = Vec::with_capacity(nc);
        let mut grad_u = Vec::with_capacity(nc);
        for (k, term) in prob.constraints().terms().enumerate() {
            let xv = prob.state(&y.x, term.step + 1);
            let uv = controls[term.step].rows(0, m);
            c[k] = term.func.value(xv, uv);
            let (gx, gu) = term.func.gradient(xv, uv);
            grad_x.push(gx);
            grad_u.push(gu);
        }
        let weights = penalty_weights(&c, al);
        Ok(Self {
            defects,
            a,
            b,
            c,
            grad_x,
            grad_u,
            weights,
        })
    }

    /// Per-step constraint contributions `Σ_k ∇c_k (λ_k + I_ρ,kk C_k)` split into
    /// state and joint-control parts.
    fn constraint_terms(&self, prob: &GameProblem, al: &ALState) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let steps = prob.num_steps();
        let mut tx = vec![DVector::zeros(prob.state_dim()); steps];
        let mut tu = vec![DVector::zeros(prob.control_dim()); steps];
        for (k, term) in prob.constraints().terms().enumerate() {
            let coef = al.lambda[k] + self.weights[k] * self.c[k];
            if coef != 0.0 {
                tx[term.step].axpy(coef, &self.grad_x[k], 1.0);
                tu[term.step].axpy(coef, &self.grad_u[k], 1.0);
            }
        }
        (tx, tu)
    }
}

fn check_player(prob: &GameProblem, nu: usize) -> Result<()> {
    if nu < prob.num_players() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "player index {nu} out of range for {} players",
            prob.num_players()
        )))
    }
}

/// `L^ν = J^ν + μ^νᵀD + λᵀC + ½CᵀI_ρC`.
pub fn al_objective(prob: &GameProblem, y: &PrimalDual, al: &ALState, nu: usize) -> Result<f64> {
    check_player(prob, nu)?;
    let lin = Linearization::new(prob, y, al)?;
    let cost = prob.player_cost(nu, &y.x, &y.u[nu])?;
    let penalty: f64 = lin.c.iter().zip(lin.weights.iter()).map(|(c, w)| 0.5 * w * c * c).sum();
    Ok(cost + y.mu[nu].dot(&lin.defects) + al.lambda.dot(&lin.c) + penalty)
}

/// Length of `G^ν`: `n̄ + m̄^ν`.
pub(crate) fn player_block_len(prob: &GameProblem, nu: usize) -> usize {
    prob.stacked_state_dim() + prob.stacked_player_control_dim(nu)
}

/// Total length of `G`; equal to the number of unknowns.
pub fn residual_len(prob: &GameProblem) -> usize {
    PrimalDual::dim(prob)
}

fn write_player_gradient(
    prob: &GameProblem,
    y: &PrimalDual,
    lin: &Linearization,
    terms: &(Vec<DVector<f64>>, Vec<DVector<f64>>),
    nu: usize,
    out: &mut [f64],
) {
    let n = prob.state_dim();
    let steps = prob.num_steps();
    let mnu = prob.player_control_dim(nu);
    let uoff = prob.dynamics().control_offset(nu);
    let cost = &prob.costs()[nu];
    let mu = &y.mu[nu];
    let (tx, tu) = terms;
    let nbar = prob.stacked_state_dim();
    for s in 0..steps {
        let x = y.x.rows(s * n, n).into_owned();
        let mut g = cost.state_gradient(&x, s + 1 == steps);
        g += mu.rows(s * n, n);
        if s + 1 < steps {
            g -= lin.a[s + 1].transpose() * mu.rows((s + 1) * n, n);
        }
        g += &tx[s];
        out[s * n..(s + 1) * n].copy_from_slice(g.as_slice());

        let u = y.u[nu].rows(s * mnu, mnu);
        let bnu = lin.b[s].columns(uoff, mnu);
        let gu = cost.r() * u - bnu.transpose() * mu.rows(s * n, n) + tu[s].rows(uoff, mnu);
        out[nbar + s * mnu..nbar + (s + 1) * mnu].copy_from_slice(gu.as_slice());
    }
}

/// `G^ν = ∇_{X,U^ν} L^ν`, stacked as `[X-part; U^ν-part]`.
pub fn player_gradient(prob: &GameProblem, y: &PrimalDual, al: &ALState, nu: usize) -> Result<DVector<f64>> {
    check_player(prob, nu)?;
    let lin = Linearization::new(prob, y, al)?;
    let terms = lin.constraint_terms(prob, al);
    let mut out = DVector::zeros(player_block_len(prob, nu));
    write_player_gradient(prob, y, &lin, &terms, nu, out.as_mut_slice());
    Ok(out)
}

pub(crate) fn residual_from(prob: &GameProblem, y: &PrimalDual, al: &ALState, lin: &Linearization) -> DVector<f64> {
    let terms = lin.constraint_terms(prob, al);
    let mut g = DVector::zeros(residual_len(prob));
    let mut off = 0;
    for nu in 0..prob.num_players() {
        let len = player_block_len(prob, nu);
        write_player_gradient(prob, y, lin, &terms, nu, &mut g.as_mut_slice()[off..off + len]);
        off += len;
    }
    g.rows_mut(off, lin.defects.len()).copy_from(&lin.defects);
    g
}

/// `G = [G¹; …; G^M; D]`.
pub fn residual(prob: &GameProblem, y: &PrimalDual, al: &ALState) -> Result<DVector<f64>> {
    let lin = Linearization::new(prob, y, al)?;
    Ok(residual_from(prob, y, al, &lin))
}

/// Residual ℓ1 norm and maximum constraint violation at one iterate.
pub fn merit(prob: &GameProblem, y: &PrimalDual, al: &ALState) -> Result<(f64, f64)> {
    let lin = Linearization::new(prob, y, al)?;
    let g = residual_from(prob, y, al, &lin);
    Ok((g.lp_norm(1), crate::model::max_violation(&lin.c, al.num_inequalities())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstraintSet, Integrator, JointDynamics, PlayerCost};
    use crate::testkit;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_ineq(lambda: f64, rho: f64) -> ALState {
        let mut al = ALState::new(1, 0, 1.0, 10.0, 1e8).unwrap();
        al.lambda[0] = lambda;
        al.rho[0] = rho;
        al
    }

    #[test]
    fn penalty_activation_examples() {
        let c = |v: f64| DVector::from_vec(vec![v]);
        assert_eq!(penalty_weights(&c(-0.5), &single_ineq(0.0, 1.0))[0], 0.0);
        assert_eq!(penalty_weights(&c(0.2), &single_ineq(0.0, 10.0))[0], 10.0);
        assert_eq!(penalty_weights(&c(-0.5), &single_ineq(0.3, 10.0))[0], 10.0);
        let mut eq = ALState::new(0, 1, 1.0, 10.0, 1e8).unwrap();
        eq.rho[0] = 4.0;
        assert_eq!(penalty_weights(&c(-0.5), &eq)[0], 4.0);
    }

    proptest! {
        #[test]
        fn penalty_weights_are_zero_or_rho(
            vals in proptest::collection::vec((-1.0f64..1.0, 0.0f64..1.0, 0.1f64..100.0, any::<bool>()), 1..30),
            n_ineq_frac in 0.0f64..1.0,
        ) {
            let nc = vals.len();
            let n_ineq = ((nc as f64) * n_ineq_frac) as usize;
            let mut al = ALState::new(n_ineq, nc - n_ineq, 1.0, 10.0, 1e8).unwrap();
            let mut c = DVector::zeros(nc);
            for (k, (ck, lk, rk, zero)) in vals.iter().enumerate() {
                c[k] = *ck;
                al.lambda[k] = if *zero { 0.0 } else { *lk };
                al.rho[k] = *rk;
            }
            let w = penalty_weights(&c, &al);
            for k in 0..nc {
                prop_assert!(w[k] == 0.0 || w[k] == al.rho[k]);
                if k >= n_ineq {
                    prop_assert_eq!(w[k], al.rho[k]);
                }
            }
        }
    }

    #[test]
    fn objective_reduces_to_cost_without_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let prob = testkit::random_lq_game(&mut rng, 2, 6, 3, 1);
        let mut y = PrimalDual::zeros(&prob);
        for u in &mut y.u {
            *u = DVector::from_fn(u.len(), |_, _| rng.random_range(-1.0..1.0));
        }
        y.x = prob.rollout(&y.u).unwrap();
        let al = ALState::for_problem(&prob, 1.0, 10.0, 1e8).unwrap();
        for nu in 0..2 {
            let l = al_objective(&prob, &y, &al, nu).unwrap();
            let j = prob.player_cost(nu, &y.x, &y.u[nu]).unwrap();
            assert_eq!(l, j);
        }
        assert!(al_objective(&prob, &y, &al, 2).is_err());
    }

    #[test]
    fn objective_matches_term_by_term_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let prob = testkit::random_unicycle_game(&mut rng, 3, 6, Integrator::Rk4);
        let y = testkit::random_primal_dual(&mut rng, &prob, 0.5);
        let al = testkit::random_al_state(&mut rng, &prob);
        let d = prob.dynamics_residual(&y.x, &y.u).unwrap();
        let c = prob.constraint_values(&y.x, &y.u).unwrap();
        let ni = prob.constraints().num_inequalities();
        for nu in 0..3 {
            let mut oracle = prob.player_cost(nu, &y.x, &y.u[nu]).unwrap();
            for i in 0..d.len() {
                oracle += y.mu[nu][i] * d[i];
            }
            for k in 0..c.len() {
                oracle += al.lambda[k] * c[k];
                let active = k >= ni || c[k] >= 0.0 || al.lambda[k] != 0.0;
                if active {
                    oracle += 0.5 * al.rho[k] * c[k] * c[k];
                }
            }
            let l = al_objective(&prob, &y, &al, nu).unwrap();
            assert!((l - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()));
        }
    }

    fn fd_player_gradient(prob: &GameProblem, y: &PrimalDual, al: &ALState, nu: usize) -> DVector<f64> {
        let nbar = prob.stacked_state_dim();
        let len = player_block_len(prob, nu);
        DVector::from_fn(len, |i, _| {
            let perturbed = |sign: f64| {
                let mut yp = y.clone();
                let slot = if i < nbar { &mut yp.x[i] } else { &mut yp.u[nu][i - nbar] };
                let h = 1e-6 * (1.0 + slot.abs());
                *slot += sign * h;
                (al_objective(prob, &yp, al, nu).unwrap(), h)
            };
            let (fp, h) = perturbed(1.0);
            let (fm, _) = perturbed(-1.0);
            (fp - fm) / (2.0 * h)
        })
    }

    #[test]
    fn player_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..10 {
            let players = 1 + trial % 3;
            let prob = testkit::random_unicycle_game(&mut rng, players, 5, Integrator::Rk4);
            let y = testkit::random_primal_dual(&mut rng, &prob, 0.3);
            let al = testkit::random_al_state(&mut rng, &prob);
            for nu in 0..players {
                let g = player_gradient(&prob, &y, &al, nu).unwrap();
                let fd = fd_player_gradient(&prob, &y, &al, nu);
                let err = (&g - &fd).amax() / (1.0 + fd.amax());
                assert!(err < 1e-5, "trial {trial} player {nu}: rel err {err}");
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_gradient() {
        let n = 2;
        let dyn_ = JointDynamics::linear(
            DMatrix::identity(n, n),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            vec![1],
            0.1,
        )
        .unwrap();
        let cost = PlayerCost::diagonal(&[0.0, 0.0], &[1.0], &[0.0, 0.0], DVector::zeros(n)).unwrap();
        let prob =
            GameProblem::new(5, dyn_, vec![cost], ConstraintSet::new(), DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let mut y = PrimalDual::zeros(&prob);
        y.x = prob.rollout(&y.u).unwrap();
        let al = ALState::for_problem(&prob, 1.0, 10.0, 1e8).unwrap();
        assert_eq!(player_gradient(&prob, &y, &al, 0).unwrap().amax(), 0.0);
        assert_eq!(residual(&prob, &y, &al).unwrap().amax(), 0.0);
    }

    /// Finite-horizon LQR by backward Riccati recursion: returns the optimal
    /// controls for `x_{k+1} = A x_k + B u_k` and cost with goal `x_f`.
    fn lqr_controls(prob: &GameProblem) -> DVector<f64> {
        let (a, b) = match prob.dynamics().model() {
            crate::model::DynamicsModel::DiscreteLinear { a, b } => (a.clone(), b.clone()),
            _ => unreachable!(),
        };
        let cost = &prob.costs()[0];
        let (q, r, qf, xf) = (cost.q(), cost.r(), cost.qf(), cost.x_goal());
        let steps = prob.num_steps();
        // value function V_k(x) = ½xᵀP x + pᵀx
        let mut p = qf.clone();
        let mut pv = -(qf * xf);
        let mut gains = Vec::new();
        for _ in 0..steps {
            let huu = r + b.transpose() * &p * &b;
            let hux = b.transpose() * &p * &a;
            let hu = b.transpose() * &pv;
            let inv = huu.try_inverse().unwrap();
            let k = -&inv * &hux;
            let kff = -&inv * &hu;
            let newp = q + a.transpose() * &p * &a + hux.transpose() * &k;
            let newpv = -(q * xf) + a.transpose() * &pv + hux.transpose() * &kff;
            p = (&newp + newp.transpose()) * 0.5;
            pv = newpv;
            gains.push((k, kff));
        }
        gains.reverse();
        let m = b.ncols();
        let mut u = DVector::zeros(steps * m);
        let mut x = prob.x0().clone();
        for (k, (gk, kf)) in gains.iter().enumerate() {
            let uk = gk * &x + kf;
            x = &a * &x + &b * &uk;
            u.rows_mut(k * m, m).copy_from(&uk);
        }
        u
    }

    #[test]
    fn lqr_optimum_with_adjoint_multipliers_is_a_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let prob = testkit::random_lq_game(&mut rng, 1, 8, 3, 2);
        let mut y = PrimalDual::zeros(&prob);
        y.u[0] = lqr_controls(&prob);
        y.x = prob.rollout(&y.u).unwrap();
        // adjoint: μ_{K-1} = −Qf(x_N − x_f); μ_{k−1} = Aᵀμ_k − Q(x_k − x_f)
        let a = match prob.dynamics().model() {
            crate::model::DynamicsModel::DiscreteLinear { a, .. } => a.clone(),
            _ => unreachable!(),
        };
        let cost = &prob.costs()[0];
        let n = 3;
        let steps = prob.num_steps();
        let mut mu = DVector::zeros(n * steps);
        let e_last = y.x.rows((steps - 1) * n, n) - cost.x_goal();
        mu.rows_mut((steps - 1) * n, n).copy_from(&(-(cost.qf() * e_last)));
        for s in (0..steps - 1).rev() {
            let e = y.x.rows(s * n, n) - cost.x_goal();
            let next = mu.rows((s + 1) * n, n).into_owned();
            mu.rows_mut(s * n, n).copy_from(&(a.transpose() * next - cost.q() * e));
        }
        y.mu[0] = mu;
        let al = ALState::for_problem(&prob, 1.0, 10.0, 1e8).unwrap();
        let g = player_gradient(&prob, &y, &al, 0).unwrap();
        assert!(g.amax() < 1e-10, "gradient {}", g.amax());
        assert!(residual(&prob, &y, &al).unwrap().lp_norm(1) < 1e-8);
    }

    #[test]
    fn residual_is_affine_in_dynamics_multipliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let prob = testkit::random_unicycle_game(&mut rng, 2, 6, Integrator::Rk4);
        let al = testkit::random_al_state(&mut rng, &prob);
        let base = testkit::random_primal_dual(&mut rng, &prob, 0.5);
        let with_mu = |mu: Vec<DVector<f64>>| {
            let mut y = base.clone();
            y.mu = mu;
            residual(&prob, &y, &al).unwrap()
        };
        let a = testkit::random_primal_dual(&mut rng, &prob, 1.0).mu;
        let b = testkit::random_primal_dual(&mut rng, &prob, 1.0).mu;
        let sum: Vec<_> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let zero: Vec<_> = a.iter().map(|x| DVector::zeros(x.len())).collect();
        let lhs = with_mu(a) + with_mu(b) - with_mu(zero);
        let rhs = with_mu(sum);
        assert!((lhs - &rhs).amax() <= 1e-12 * (1.0 + rhs.amax()));
    }

    #[test]
    fn residual_length_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let prob = testkit::random_unicycle_game(&mut rng, 3, 5, Integrator::ExplicitEuler);
        let y = testkit::random_primal_dual(&mut rng, &prob, 0.5);
        let al = testkit::random_al_state(&mut rng, &prob);
        let g = residual(&prob, &y, &al).unwrap();
        let nbar = prob.stacked_state_dim();
        assert_eq!(g.len(), 3 * (nbar + prob.stacked_player_control_dim(0)) + nbar);
        let g1 = player_gradient(&prob, &y, &al, 1).unwrap();
        let off = nbar + prob.stacked_player_control_dim(0);
        assert_eq!(g.rows(off, g1.len()), g1.rows(0, g1.len()));
        let d = prob.dynamics_residual(&y.x, &y.u).unwrap();
        assert_eq!(g.rows(g.len() - nbar, nbar), d.rows(0, nbar));
    }
}

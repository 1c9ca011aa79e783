//! Newton step `(H + ε·S) δy = −G`, where `S` is `+I` on primal unknowns and
//! `−I` on dynamics multipliers.
//!
//! Both paths factor the regularized matrix and then run a few rounds of
//! iterative refinement against the unregularized `H`, so the regularization
//! only changes the answer along (near-)singular directions.

use nalgebra::{DMatrix, DVector, LU};

use super::KktSystem;
use crate::error::{Error, Result};

pub const DEFAULT_EPS_REG: f64 = 1e-6;
const MAX_ESCALATIONS: usize = 5;
const REFINEMENT_STEPS: usize = 3;

fn escalate(eps: f64) -> f64 {
    if eps > 0.0 {
        eps * 10.0
    } else {
        1e-10
    }
}

/// Iterative refinement: keeps correcting `z` while the true residual shrinks.
fn refine<V>(
    mut z: V,
    rhs_norm: f64,
    residual: impl Fn(&V) -> (V, f64),
    solve: impl Fn(&V) -> Option<V>,
    add: impl Fn(&V, &V) -> V,
) -> V {
    let (mut r, mut rn) = residual(&z);
    for _ in 0..REFINEMENT_STEPS {
        if rn <= 1e-15 * rhs_norm.max(1e-300) {
            break;
        }
        let Some(dz) = solve(&r) else { break };
        let cand = add(&z, &dz);
        let (rc, rcn) = residual(&cand);
        if !(rcn < rn) {
            break;
        }
        z = cand;
        r = rc;
        rn = rcn;
    }
    z
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Dense LU on the full matrix.
pub fn newton_step(sys: &KktSystem, eps_reg: f64) -> Result<DVector<f64>> {
    let h = sys.to_dense();
    let layout = sys.layout();
    let rhs = -layout.paired_residual(sys.residual());
    let sign = layout.paired_sign();
    dense_regularized_solve(&h, &rhs, &sign, eps_reg)
}

/// Solves `(H + ε·diag(sign)) x = rhs` with escalation and refinement.
pub fn dense_regularized_solve(
    h: &DMatrix<f64>,
    rhs: &DVector<f64>,
    sign: &DVector<f64>,
    eps_reg: f64,
) -> Result<DVector<f64>> {
    if !eps_reg.is_finite() || eps_reg < 0.0 {
        return Err(Error::InvalidArgument(format!("regularization must be finite and >= 0, got {eps_reg}")));
    }
    let rhs_norm = rhs.amax();
    let mut eps = eps_reg;
    for _ in 0..=MAX_ESCALATIONS {
        let mut reg = h.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += eps * sign[i];
        }
        let lu = reg.lu();
        if let Some(z) = lu.solve(rhs).filter(finite) {
            let z = refine(
                z,
                rhs_norm,
                |z| {
                    let r = rhs - h * z;
                    let n = r.amax();
                    (r, n)
                },
                |r| lu.solve(r).filter(finite),
                |a, b| a + b,
            );
            return Ok(z);
        }
        eps = escalate(eps);
    }
    Err(Error::SingularSystem {
        escalations: MAX_ESCALATIONS,
    })
}

struct BlockFactorization {
    pivots: Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

fn nonzero_columns(m: &DMatrix<f64>) -> Vec<usize> {
    (0..m.ncols()).filter(|&j| m.column(j).iter().any(|&v| v != 0.0)).collect()
}

impl BlockFactorization {
    /// Backward block elimination, last step first:
    /// `S_{K−1} = D_{K−1}`, `S_k = D_k − U_k S_{k+1}⁻¹ L_{k+1}`.
    fn new(sys: &KktSystem, eps: f64) -> Option<Self> {
        let k = sys.layout().num_steps();
        let sd = sys.layout().stage_dim();
        let sign = sys.layout().sign();
        let mut pivots: Vec<Option<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>> = (0..k).map(|_| None).collect();
        for s in (0..k).rev() {
            let mut schur = sys.diag_blocks()[s].clone();
            for i in 0..sd {
                schur[(i, i)] += eps * sign[s * sd + i];
            }
            if s + 1 < k {
                let next = pivots[s + 1].as_ref().expect("factored");
                let lo = &sys.lower_blocks()[s + 1];
                let up = &sys.upper_blocks()[s];
                let cols = nonzero_columns(lo);
                if !cols.is_empty() {
                    let sub = lo.select_columns(&cols);
                    let w = next.solve(&sub)?;
                    let delta = up * w;
                    for (c, &j) in cols.iter().enumerate() {
                        let mut col = schur.column_mut(j);
                        col -= delta.column(c);
                    }
                }
            }
            let lu = schur.lu();
            if !lu.is_invertible() {
                return None;
            }
            pivots[s] = Some(lu);
        }
        Some(Self {
            pivots: pivots.into_iter().map(|p| p.expect("factored")).collect(),
        })
    }

    fn solve(&self, sys: &KktSystem, rhs: &[DVector<f64>]) -> Option<Vec<DVector<f64>>> {
        let k = rhs.len();
        let mut reduced = rhs.to_vec();
        for s in (0..k.saturating_sub(1)).rev() {
            let t = self.pivots[s + 1].solve(&reduced[s + 1])?;
            reduced[s] -= &sys.upper_blocks()[s] * t;
        }
        let mut z: Vec<DVector<f64>> = Vec::with_capacity(k);
        for s in 0..k {
            let mut r = reduced[s].clone();
            if s > 0 {
                r -= &sys.lower_blocks()[s] * &z[s - 1];
            }
            let zs = self.pivots[s].solve(&r).filter(finite)?;
            z.push(zs);
        }
        Some(z)
    }
}

/// Step-wise block elimination with cost linear in the horizon length.
///
/// Falls back to [`newton_step`] with a warning when a pivot block is singular.
pub fn structured_solve(sys: &KktSystem, eps_reg: f64) -> Result<DVector<f64>> {
    if !eps_reg.is_finite() || eps_reg < 0.0 {
        return Err(Error::InvalidArgument(format!("regularization must be finite and >= 0, got {eps_reg}")));
    }
    let layout = sys.layout();
    let rhs = layout.stage_rhs(sys.residual());
    let rhs_norm = rhs.iter().map(|r| r.amax()).fold(0.0, f64::max);
    let Some(fact) = BlockFactorization::new(sys, eps_reg) else {
        log::warn!("singular pivot block in structured solve; falling back to dense factorization");
        return newton_step(sys, eps_reg);
    };
    let Some(z) = fact.solve(sys, &rhs) else {
        log::warn!("non-finite structured solve; falling back to dense factorization");
        return newton_step(sys, eps_reg);
    };
    let z = refine(
        z,
        rhs_norm,
        |z| {
            let hz = sys.stage_matvec(z);
            let r: Vec<_> = rhs.iter().zip(hz).map(|(b, h)| b - h).collect();
            let n = r.iter().map(|v| v.amax()).fold(0.0, f64::max);
            (r, n)
        },
        |r| fact.solve(sys, r),
        |a, b| a.iter().zip(b).map(|(x, y)| x + y).collect(),
    );
    Ok(layout.unstage(&z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::{residual, residual_jacobian, ALState, KktLayout, PrimalDual};
    use crate::model::Integrator;
    use crate::testkit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn single_stage(h: DMatrix<f64>, g: DVector<f64>) -> KktSystem {
        let dim = h.nrows();
        let layout = Arc::new(KktLayout::identity(1, dim, &vec![false; dim]).unwrap());
        KktSystem::from_blocks(layout, g, vec![h], vec![DMatrix::zeros(dim, dim)], vec![DMatrix::zeros(dim, dim)])
            .unwrap()
    }

    #[test]
    fn identity_system() {
        let g = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        let sys = single_stage(DMatrix::identity(3, 3), g.clone());
        assert_eq!(newton_step(&sys, 0.0).unwrap(), -&g);
        assert!((newton_step(&sys, 1e-6).unwrap() + &g).amax() < 1e-14);
        assert!((structured_solve(&sys, 1e-6).unwrap() + &g).amax() < 1e-14);
    }

    #[test]
    fn duplicate_row_is_regularized() {
        let h = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        let sys = single_stage(h, DVector::from_vec(vec![1.0, 1.0, 0.5]));
        let dy = newton_step(&sys, 1e-6).unwrap();
        assert!(dy.iter().all(|v| v.is_finite()));
        let dz = structured_solve(&sys, 1e-6).unwrap();
        assert!(dz.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_matrix_escalates_then_solves() {
        let sys = single_stage(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 1.0]));
        let dy = newton_step(&sys, 0.0).unwrap();
        assert!(dy.iter().all(|v| v.is_finite()));
        assert!(newton_step(&sys, f64::NAN).is_err());
    }

    #[test]
    fn lq_newton_step_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for players in [2, 3] {
            let prob = testkit::random_lq_game(&mut rng, players, 10, 4, 2);
            let al = ALState::for_problem(&prob, 1.0, 10.0, 1e8).unwrap();
            let y = testkit::random_primal_dual(&mut rng, &prob, 2.0);
            let sys = residual_jacobian(&prob, &y, &al).unwrap();
            for dy in [newton_step(&sys, DEFAULT_EPS_REG).unwrap(), structured_solve(&sys, DEFAULT_EPS_REG).unwrap()] {
                let next = y.step(&dy, 1.0);
                let g = residual(&prob, &next, &al).unwrap();
                assert!(g.lp_norm(1) <= 1e-8, "‖G‖₁ = {}", g.lp_norm(1));
            }
        }
    }

    #[test]
    fn structured_matches_dense_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..40 {
            let players = rng.random_range(1..=4);
            let steps = rng.random_range(2..=12);
            let prob = if trial % 2 == 0 {
                testkit::random_unicycle_game(&mut rng, players, steps, Integrator::Rk4)
            } else {
                testkit::random_linear_constrained_game(&mut rng, players, steps, 3, 2)
            };
            let y = testkit::random_primal_dual(&mut rng, &prob, 0.5);
            let al = testkit::random_al_state(&mut rng, &prob);
            let sys = residual_jacobian(&prob, &y, &al).unwrap();
            let dense = newton_step(&sys, DEFAULT_EPS_REG).unwrap();
            let fast = structured_solve(&sys, DEFAULT_EPS_REG).unwrap();
            let err = (&fast - &dense).amax() / (1.0 + dense.amax());
            assert!(err <= 1e-8, "trial {trial}: {err}");
        }
    }

    #[test]
    fn two_time_steps_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let prob = testkit::random_unicycle_game(&mut rng, 2, 2, Integrator::Rk4);
        let y = testkit::random_primal_dual(&mut rng, &prob, 0.5);
        let al = testkit::random_al_state(&mut rng, &prob);
        let sys = residual_jacobian(&prob, &y, &al).unwrap();
        assert_eq!(sys.layout().num_steps(), 1);
        let dense = newton_step(&sys, DEFAULT_EPS_REG).unwrap();
        let fast = structured_solve(&sys, DEFAULT_EPS_REG).unwrap();
        assert!((&fast - &dense).amax() <= 1e-10 * (1.0 + dense.amax()));
        assert_eq!(PrimalDual::from_vector(&prob, &fast).unwrap().to_vector(), fast);
    }
}

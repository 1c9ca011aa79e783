//! Quasi-Newton Jacobian `H = ∇_y G` stored as a block-tridiagonal matrix.
//!
//! Unknowns are regrouped by step `k`: `z_k = [u_k; μ¹_k; …; μ^M_k; x_{k+1}]`.
//! Residual rows are grouped the same way and paired one-to-one with those
//! unknowns: `G^ν_U(u^ν_k) ↔ u^ν_k`, `G^ν_X(x_{k+1}) ↔ μ^ν_k`, `D_k ↔ x_{k+1}`.
//! Dynamics couple only neighbouring steps, so every nonzero lives in a
//! diagonal, sub-diagonal or super-diagonal block.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::augmented::{player_block_len, residual_from, ALState, Linearization};
use super::PrimalDual;
use crate::error::{check_dim, Error, Result};
use crate::model::GameProblem;

/// Index bookkeeping between the step-grouped blocks and the flattened vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct KktLayout {
    num_steps: usize,
    stage_dim: usize,
    /// Step-grouped position → index into the flattened `y`.
    col_to_y: Vec<usize>,
    /// Step-grouped row → index into `G`.
    row_to_g: Vec<usize>,
    /// +1 for primal unknowns, −1 for dynamics multipliers (step-grouped order).
    sign: Vec<f64>,
}

impl KktLayout {
    pub fn for_problem(prob: &GameProblem) -> Self {
        let n = prob.state_dim();
        let m = prob.control_dim();
        let players = prob.num_players();
        let steps = prob.num_steps();
        let nbar = prob.stacked_state_dim();
        let mbar = prob.stacked_control_dim();
        let stage_dim = m + players * n + n;

        let mut u_off = Vec::with_capacity(players);
        let mut g_off = Vec::with_capacity(players);
        let (mut uo, mut go) = (nbar, 0);
        for nu in 0..players {
            u_off.push(uo);
            g_off.push(go);
            uo += prob.stacked_player_control_dim(nu);
            go += player_block_len(prob, nu);
        }
        let d_off = go;

        let total = stage_dim * steps;
        let mut col_to_y = Vec::with_capacity(total);
        let mut row_to_g = Vec::with_capacity(total);
        let mut sign = Vec::with_capacity(total);
        for s in 0..steps {
            for nu in 0..players {
                let mnu = prob.player_control_dim(nu);
                for i in 0..mnu {
                    col_to_y.push(u_off[nu] + s * mnu + i);
                    row_to_g.push(g_off[nu] + nbar + s * mnu + i);
                    sign.push(1.0);
                }
            }
            for nu in 0..players {
                for i in 0..n {
                    col_to_y.push(nbar + mbar + nu * nbar + s * n + i);
                    row_to_g.push(g_off[nu] + s * n + i);
                    sign.push(-1.0);
                }
            }
            for i in 0..n {
                col_to_y.push(s * n + i);
                row_to_g.push(d_off + s * n + i);
                sign.push(1.0);
            }
        }
        Self {
            num_steps: steps,
            stage_dim,
            col_to_y,
            row_to_g,
            sign,
        }
    }

    /// Layout where step-grouped order and flattened order coincide.
    pub fn identity(num_steps: usize, stage_dim: usize, dual_mask: &[bool]) -> Result<Self> {
        let total = num_steps * stage_dim;
        check_dim("dual mask", total, dual_mask.len())?;
        Ok(Self {
            num_steps,
            stage_dim,
            col_to_y: (0..total).collect(),
            row_to_g: (0..total).collect(),
            sign: dual_mask.iter().map(|&d| if d { -1.0 } else { 1.0 }).collect(),
        })
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn stage_dim(&self) -> usize {
        self.stage_dim
    }

    pub fn dim(&self) -> usize {
        self.col_to_y.len()
    }

    /// Step that owns flattened unknown `i`.
    pub fn stage_of_unknown(&self, i: usize) -> usize {
        self.col_to_y.iter().position(|&j| j == i).expect("index in range") / self.stage_dim
    }

    pub(crate) fn col_to_y(&self) -> &[usize] {
        &self.col_to_y
    }

    #[cfg(test)]
    pub(crate) fn row_to_g(&self) -> &[usize] {
        &self.row_to_g
    }

    pub(crate) fn sign(&self) -> &[f64] {
        &self.sign
    }

    /// `G` reordered so entry `i` is the residual paired with unknown `y_i`.
    pub fn paired_residual(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(g.len());
        for (&col, &row) in self.col_to_y.iter().zip(&self.row_to_g) {
            out[col] = g[row];
        }
        out
    }

    /// Regularization signature in flattened order (+1 primal, −1 dual).
    pub fn paired_sign(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (&col, &s) in self.col_to_y.iter().zip(&self.sign) {
            out[col] = s;
        }
        out
    }

    pub(crate) fn stage_rhs(&self, g: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.num_steps)
            .map(|s| {
                DVector::from_iterator(
                    self.stage_dim,
                    (0..self.stage_dim).map(|i| -g[self.row_to_g[s * self.stage_dim + i]]),
                )
            })
            .collect()
    }

    pub(crate) fn unstage(&self, z: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (s, zs) in z.iter().enumerate() {
            for (i, v) in zs.iter().enumerate() {
                out[self.col_to_y[s * self.stage_dim + i]] = *v;
            }
        }
        out
    }
}

/// Residual `G` together with its block-tridiagonal Jacobian.
#[derive(Debug, Clone)]
pub struct KktSystem {
    layout: Arc<KktLayout>,
    residual: DVector<f64>,
    diag: Vec<DMatrix<f64>>,
    /// `lower[k]` couples rows of step `k` with unknowns of step `k−1` (`lower[0]` is zero).
    lower: Vec<DMatrix<f64>>,
    /// `upper[k]` couples rows of step `k` with unknowns of step `k+1` (last is zero).
    upper: Vec<DMatrix<f64>>,
}

impl KktSystem {
    pub fn from_blocks(
        layout: Arc<KktLayout>,
        residual: DVector<f64>,
        diag: Vec<DMatrix<f64>>,
        lower: Vec<DMatrix<f64>>,
        upper: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let k = layout.num_steps();
        let sd = layout.stage_dim();
        check_dim("residual length", layout.dim(), residual.len())?;
        for blocks in [&diag, &lower, &upper] {
            check_dim("number of blocks", k, blocks.len())?;
            if blocks.iter().any(|b| b.nrows() != sd || b.ncols() != sd) {
                return Err(Error::InvalidArgument(format!("every block must be {sd}x{sd}")));
            }
        }
        if lower[0].amax() != 0.0 || upper[k - 1].amax() != 0.0 {
            return Err(Error::InvalidArgument(
                "first sub-diagonal and last super-diagonal blocks must be zero".into(),
            ));
        }
        Ok(Self {
            layout,
            residual,
            diag,
            lower,
            upper,
        })
    }

    pub fn layout(&self) -> &KktLayout {
        &self.layout
    }

    /// `G` in `[G¹; …; G^M; D]` order.
    pub fn residual(&self) -> &DVector<f64> {
        &self.residual
    }

    pub fn diag_blocks(&self) -> &[DMatrix<f64>] {
        &self.diag
    }

    pub fn lower_blocks(&self) -> &[DMatrix<f64>] {
        &self.lower
    }

    pub fn upper_blocks(&self) -> &[DMatrix<f64>] {
        &self.upper
    }

    /// Step pairs `(row step, column step)` that may hold nonzeros.
    pub fn block_index(&self) -> Vec<(usize, usize)> {
        let k = self.layout.num_steps();
        let mut idx = Vec::with_capacity(3 * k);
        for s in 0..k {
            if s > 0 {
                idx.push((s, s - 1));
            }
            idx.push((s, s));
            if s + 1 < k {
                idx.push((s, s + 1));
            }
        }
        idx
    }

    /// Dense `H` with columns in flattened `y` order and row `i` holding the
    /// residual paired with `y_i`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.layout.dim();
        let sd = self.layout.stage_dim();
        let cols = self.layout.col_to_y();
        let mut h = DMatrix::zeros(dim, dim);
        for (rs, cs) in self.block_index() {
            let blk = self.block(rs, cs);
            for i in 0..sd {
                let r = cols[rs * sd + i];
                for j in 0..sd {
                    let v = blk[(i, j)];
                    if v != 0.0 {
                        h[(r, cols[cs * sd + j])] = v;
                    }
                }
            }
        }
        h
    }

    fn block(&self, rs: usize, cs: usize) -> &DMatrix<f64> {
        if cs == rs {
            &self.diag[rs]
        } else if cs + 1 == rs {
            &self.lower[rs]
        } else {
            &self.upper[rs]
        }
    }

    /// Product with step-grouped vectors.
    pub(crate) fn stage_matvec(&self, z: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let k = self.layout.num_steps();
        (0..k)
            .map(|s| {
                let mut r = &self.diag[s] * &z[s];
                if s > 0 {
                    r += &self.lower[s] * &z[s - 1];
                }
                if s + 1 < k {
                    r += &self.upper[s] * &z[s + 1];
                }
                r
            })
            .collect()
    }
}

/// Assembles `G` and the quasi-Newton `H`.
///
/// Cost Hessians are exact. Second derivatives of the dynamics and of the
/// constraint functions are dropped; the penalty contributes the Gauss-Newton
/// term `∇Cᵀ I_ρ ∇C`.
pub fn residual_jacobian(prob: &GameProblem, y: &PrimalDual, al: &ALState) -> Result<KktSystem> {
    let lin = Linearization::new(prob, y, al)?;
    Ok(assemble(prob, y, al, &lin, Arc::new(KktLayout::for_problem(prob)), JacobianTerms::default()))
}

/// Optional changes to which terms enter `H`. `G` is never affected.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct JacobianTerms {
    /// Add `Σ_k (λ_k + I_ρ,k C_k) ∇²C_k`.
    pub curvature: bool,
    /// Inequalities with `C_k > −near_active` get the Gauss-Newton term even
    /// while switched off in `I_ρ`.
    pub near_active: f64,
}

pub(crate) fn assemble(
    prob: &GameProblem,
    y: &PrimalDual,
    al: &ALState,
    lin: &Linearization,
    layout: Arc<KktLayout>,
    terms: JacobianTerms,
) -> KktSystem {
    let n = prob.state_dim();
    let m = prob.control_dim();
    let players = prob.num_players();
    let steps = prob.num_steps();
    let sd = layout.stage_dim();
    let mu_col = |nu: usize| m + nu * n;
    let x_col = m + players * n;
    let d_row = x_col;

    // Gauss-Newton penalty blocks per step over (u_k, x_{k+1}).
    let mut gn = vec![DMatrix::<f64>::zeros(m + n, m + n); steps];
    for (k, term) in prob.constraints().terms().enumerate() {
        let w = if lin.weights[k] == 0.0 && lin.c[k] > -terms.near_active {
            al.rho[k]
        } else {
            lin.weights[k]
        };
        if w == 0.0 {
            continue;
        }
        let mut g = DVector::zeros(m + n);
        g.rows_mut(0, m).copy_from(&lin.grad_u[k]);
        g.rows_mut(m, n).copy_from(&lin.grad_x[k]);
        gn[term.step].ger(w, &g, &g, 1.0);
    }
    if terms.curvature {
        for (k, term) in prob.constraints().terms().enumerate() {
            let coeff = al.lambda[k] + lin.weights[k] * lin.c[k];
            if coeff != 0.0 {
                let u = prob.joint_control(&y.u, term.step);
                let x = prob.state(&y.x, term.step + 1);
                term.func.add_hessian(x, u.rows(0, m), coeff, &mut gn[term.step]);
            }
        }
    }

    let mut diag = Vec::with_capacity(steps);
    let mut lower = Vec::with_capacity(steps);
    let mut upper = Vec::with_capacity(steps);
    for s in 0..steps {
        let terminal = s + 1 == steps;
        let mut blk = DMatrix::zeros(sd, sd);
        let gn_uu = gn[s].view((0, 0), (m, m));
        let gn_ux = gn[s].view((0, m), (m, n));
        let gn_xu = gn[s].view((m, 0), (n, m));
        let gn_xx = gn[s].view((m, m), (n, n));

        // rows G^ν_U(u^ν_k)
        blk.view_mut((0, 0), (m, m)).copy_from(&gn_uu);
        blk.view_mut((0, x_col), (m, n)).copy_from(&gn_ux);
        for nu in 0..players {
            let mnu = prob.player_control_dim(nu);
            let off = prob.dynamics().control_offset(nu);
            let mut r = blk.view_mut((off, off), (mnu, mnu));
            r += prob.costs()[nu].r();
            blk.view_mut((off, mu_col(nu)), (mnu, n))
                .copy_from(&(-lin.b[s].columns(off, mnu).transpose()));
        }

        // rows G^ν_X(x_{k+1})
        for nu in 0..players {
            let r0 = mu_col(nu);
            blk.view_mut((r0, 0), (n, m)).copy_from(&gn_xu);
            blk.view_mut((r0, mu_col(nu)), (n, n)).fill_with_identity();
            let mut xx = blk.view_mut((r0, x_col), (n, n));
            xx.copy_from(&gn_xx);
            xx += prob.costs()[nu].state_hessian(terminal);
        }

        // rows D_k
        blk.view_mut((d_row, 0), (n, m)).copy_from(&(-&lin.b[s]));
        blk.view_mut((d_row, x_col), (n, n)).fill_with_identity();
        diag.push(blk);

        let mut lo = DMatrix::zeros(sd, sd);
        if s > 0 {
            lo.view_mut((d_row, x_col), (n, n)).copy_from(&(-&lin.a[s]));
        }
        lower.push(lo);

        let mut up = DMatrix::zeros(sd, sd);
        if !terminal {
            let at = -lin.a[s + 1].transpose();
            for nu in 0..players {
                up.view_mut((mu_col(nu), mu_col(nu)), (n, n)).copy_from(&at);
            }
        }
        upper.push(up);
    }

    KktSystem {
        layout,
        residual: residual_from(prob, y, al, lin),
        diag,
        lower,
        upper,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::residual;
    use crate::testkit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference Jacobian of `G`, rows permuted to the paired order.
    fn fd_jacobian(prob: &GameProblem, y: &PrimalDual, al: &ALState) -> DMatrix<f64> {
        let layout = KktLayout::for_problem(prob);
        let y0 = y.to_vector();
        let dim = y0.len();
        let mut h = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let step = 1e-6 * (1.0 + y0[j].abs());
            let mut yp = y0.clone();
            let mut ym = y0.clone();
            yp[j] += step;
            ym[j] -= step;
            let gp = residual(prob, &PrimalDual::from_vector(prob, &yp).unwrap(), al).unwrap();
            let gm = residual(prob, &PrimalDual::from_vector(prob, &ym).unwrap(), al).unwrap();
            let col = layout.paired_residual(&((gp - gm) / (2.0 * step)));
            h.set_column(j, &col);
        }
        h
    }

    #[test]
    fn jacobian_is_exact_for_linear_quadratic_affine_games() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (players, steps) in [(1, 3), (2, 5), (3, 4)] {
            let prob = testkit::random_linear_constrained_game(&mut rng, players, steps, 3, 2);
            let y = testkit::random_primal_dual(&mut rng, &prob, 1.0);
            let al = testkit::random_al_state(&mut rng, &prob);
            let sys = residual_jacobian(&prob, &y, &al).unwrap();
            let h = sys.to_dense();
            let fd = fd_jacobian(&prob, &y, &al);
            let err = (&h - &fd).amax() / (1.0 + fd.amax());
            assert!(err < 1e-6, "players {players}: rel err {err}");
        }
    }

    #[test]
    fn near_active_margin_changes_only_h() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let prob = testkit::random_linear_constrained_game(&mut rng, 2, 5, 3, 2);
        let y = testkit::random_primal_dual(&mut rng, &prob, 1.0);
        let mut al = testkit::random_al_state(&mut rng, &prob);
        let ni = al.num_inequalities();
        al.lambda.rows_mut(0, ni).fill(0.0);
        let lin = Linearization::new(&prob, &y, &al).unwrap();
        assert!(lin.weights.rows(0, ni).iter().any(|&w| w == 0.0));
        let layout = Arc::new(KktLayout::for_problem(&prob));
        let plain = assemble(&prob, &y, &al, &lin, layout.clone(), JacobianTerms::default());
        let terms = JacobianTerms {
            curvature: false,
            near_active: f64::INFINITY,
        };
        let widened = assemble(&prob, &y, &al, &lin, layout, terms);
        assert_eq!(plain.residual(), widened.residual());
        assert_ne!(plain.to_dense(), widened.to_dense());

        // every inequality switched on through a tiny multiplier gives the same H
        let mut on = al.clone();
        on.lambda.rows_mut(0, ni).fill(f64::MIN_POSITIVE);
        let reference = residual_jacobian(&prob, &y, &on).unwrap();
        assert!((widened.to_dense() - reference.to_dense()).amax() < 1e-12);
    }

    #[test]
    fn unconstrained_lq_jacobian_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let prob = testkit::random_lq_game(&mut rng, 2, 6, 3, 1);
        let al = ALState::for_problem(&prob, 1.0, 10.0, 1e8).unwrap();
        let h1 = residual_jacobian(&prob, &testkit::random_primal_dual(&mut rng, &prob, 1.0), &al)
            .unwrap()
            .to_dense();
        let h2 = residual_jacobian(&prob, &testkit::random_primal_dual(&mut rng, &prob, 5.0), &al)
            .unwrap()
            .to_dense();
        assert_eq!(h1, h2);
        let fd = fd_jacobian(&prob, &testkit::random_primal_dual(&mut rng, &prob, 1.0), &al);
        assert!((&h1 - fd).amax() < 1e-6 * (1.0 + h1.amax()));
    }

    #[test]
    fn couplings_beyond_neighbouring_steps_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let prob = testkit::random_unicycle_game(&mut rng, 3, 7, crate::model::Integrator::Rk4);
        let y = testkit::random_primal_dual(&mut rng, &prob, 0.5);
        let al = testkit::random_al_state(&mut rng, &prob);
        let sys = residual_jacobian(&prob, &y, &al).unwrap();
        let h = sys.to_dense();
        let layout = sys.layout();
        let sd = layout.stage_dim();
        let mut stage = vec![0; layout.dim()];
        for (p, &i) in layout.col_to_y().iter().enumerate() {
            stage[i] = p / sd;
        }
        let mut nonzeros = 0;
        for r in 0..h.nrows() {
            for c in 0..h.ncols() {
                if h[(r, c)] != 0.0 {
                    nonzeros += 1;
                    assert!(stage[r].abs_diff(stage[c]) <= 1, "entry ({r},{c}) couples distant steps");
                }
            }
        }
        assert!(nonzeros > 0);
        let idx = sys.block_index();
        assert_eq!(idx.len(), 3 * 6 - 2);
        assert!(idx.iter().all(|(a, b)| a.abs_diff(*b) <= 1));
    }

    #[test]
    fn paired_order_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let prob = testkit::random_lq_game(&mut rng, 3, 4, 2, 1);
        let layout = KktLayout::for_problem(&prob);
        let mut seen_cols = layout.col_to_y().to_vec();
        let mut seen_rows = layout.row_to_g().to_vec();
        seen_cols.sort_unstable();
        seen_rows.sort_unstable();
        let expect: Vec<_> = (0..layout.dim()).collect();
        assert_eq!(seen_cols, expect);
        assert_eq!(seen_rows, expect);
        let sign = layout.paired_sign();
        let nbar = prob.stacked_state_dim();
        let nprimal = nbar + prob.stacked_control_dim();
        assert!(sign.rows(0, nprimal).iter().all(|&s| s == 1.0));
        assert!(sign.rows(nprimal, 3 * nbar).iter().all(|&s| s == -1.0));
    }
}

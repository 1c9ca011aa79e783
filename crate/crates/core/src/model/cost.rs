//! Quadratic tracking cost of a single player.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

const PSD_TOL: f64 = 1e-10;

/// `J = Σ_k ½(x_k−x_f)ᵀQ(x_k−x_f) + ½uᵀRu + ½(x_N−x_f)ᵀQf(x_N−x_f)`.
#[derive(Debug, Clone)]
pub struct PlayerCost {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    qf: DMatrix<f64>,
    x_goal: DVector<f64>,
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.min()
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    (m - m.transpose()).amax() <= PSD_TOL * (1.0 + m.amax())
}

impl PlayerCost {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, qf: DMatrix<f64>, x_goal: DVector<f64>) -> Result<Self> {
        let n = x_goal.len();
        for (name, mat) in [("Q", &q), ("Qf", &qf)] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be {n}x{n}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if !is_symmetric(mat) || min_eigenvalue(mat) < -PSD_TOL {
                return Err(Error::InvalidArgument(format!("{name} must be symmetric positive semidefinite")));
            }
        }
        if r.nrows() != r.ncols() || r.nrows() == 0 {
            return Err(Error::InvalidArgument("R must be square and nonempty".into()));
        }
        if !is_symmetric(&r) || min_eigenvalue(&r) <= PSD_TOL {
            return Err(Error::InvalidArgument("R must be symmetric positive definite".into()));
        }
        Ok(Self { q, r, qf, x_goal })
    }

    /// Diagonal weights, the common case for driving scenarios.
    pub fn diagonal(q: &[f64], r: &[f64], qf: &[f64], x_goal: DVector<f64>) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            DMatrix::from_diagonal(&DVector::from_column_slice(r)),
            DMatrix::from_diagonal(&DVector::from_column_slice(qf)),
            x_goal,
        )
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn qf(&self) -> &DMatrix<f64> {
        &self.qf
    }

    pub fn x_goal(&self) -> &DVector<f64> {
        &self.x_goal
    }

    pub fn state_dim(&self) -> usize {
        self.x_goal.len()
    }

    pub fn control_dim(&self) -> usize {
        self.r.nrows()
    }

    fn check(&self, x0: &DVector<f64>, xs: &DVector<f64>, us: &DVector<f64>) -> Result<usize> {
        let n = self.state_dim();
        let m = self.control_dim();
        check_dim("cost initial state", n, x0.len())?;
        if xs.len() % n != 0 || xs.is_empty() {
            return Err(Error::Dimension {
                context: "cost state trajectory",
                expected: n,
                actual: xs.len(),
            });
        }
        let steps = xs.len() / n;
        check_dim("cost control trajectory", steps * m, us.len())?;
        Ok(steps)
    }

    /// Evaluates the cost. `xs` stacks `x_2..x_N`, `us` stacks this player's `u_1..u_{N-1}`;
    /// the first stage term uses the pinned initial state `x0`.
    pub fn eval(&self, x0: &DVector<f64>, xs: &DVector<f64>, us: &DVector<f64>) -> Result<f64> {
        let steps = self.check(x0, xs, us)?;
        Ok(self.eval_unchecked(x0, xs, us, steps))
    }

    pub(crate) fn eval_unchecked(&self, x0: &DVector<f64>, xs: &DVector<f64>, us: &DVector<f64>, steps: usize) -> f64 {
        let n = self.state_dim();
        let m = self.control_dim();
        let mut total = 0.0;
        for k in 0..steps {
            let e = if k == 0 {
                x0 - &self.x_goal
            } else {
                xs.rows((k - 1) * n, n) - &self.x_goal
            };
            total += 0.5 * e.dot(&(&self.q * &e));
            let u = us.rows(k * m, m);
            total += 0.5 * u.dot(&(&self.r * u));
        }
        let e = xs.rows((steps - 1) * n, n) - &self.x_goal;
        total + 0.5 * e.dot(&(&self.qf * &e))
    }

    /// Gradient of the state-error term at decision state `x_{k+1}` (0-based step `k`).
    pub(crate) fn state_gradient(&self, x: &DVector<f64>, terminal: bool) -> DVector<f64> {
        let w = if terminal { &self.qf } else { &self.q };
        w * (x - &self.x_goal)
    }

    pub(crate) fn state_hessian(&self, terminal: bool) -> &DMatrix<f64> {
        if terminal {
            &self.qf
        } else {
            &self.q
        }
    }

    /// Gradient and Hessian over `(X, U^ν)` stacked as `[X; U^ν]`.
    pub fn derivatives(
        &self,
        x0: &DVector<f64>,
        xs: &DVector<f64>,
        us: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let steps = self.check(x0, xs, us)?;
        let n = self.state_dim();
        let m = self.control_dim();
        let nx = steps * n;
        let dim = nx + steps * m;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        for k in 0..steps {
            let terminal = k + 1 == steps;
            let x = xs.rows(k * n, n).into_owned();
            grad.rows_mut(k * n, n).copy_from(&self.state_gradient(&x, terminal));
            hess.view_mut((k * n, k * n), (n, n)).copy_from(self.state_hessian(terminal));
            let u = us.rows(k * m, m);
            grad.rows_mut(nx + k * m, m).copy_from(&(&self.r * u));
            hess.view_mut((nx + k * m, nx + k * m), (m, m)).copy_from(&self.r);
        }
        Ok((grad, hess))
    }
}

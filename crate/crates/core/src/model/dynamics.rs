//! Discrete-time joint dynamics `x_{k+1} = f(x_k, u_k)` shared by all players.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Continuous-time vector field `ẋ = g(x, u)` with analytic Jacobians.
pub trait ContinuousDynamics: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// Returns `(∂g/∂x, ∂g/∂u)`.
    fn rhs_jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    ExplicitEuler,
    Rk4,
}

#[derive(Debug, Clone)]
pub enum DynamicsModel {
    Continuous {
        rhs: Arc<dyn ContinuousDynamics>,
        integrator: Integrator,
    },
    /// `x_{k+1} = A x_k + B u_k`; `dt` is informational only.
    DiscreteLinear { a: DMatrix<f64>, b: DMatrix<f64> },
}

#[derive(Debug, Clone)]
pub struct JointDynamics {
    n: usize,
    control_dims: Vec<usize>,
    control_offsets: Vec<usize>,
    dt: f64,
    model: DynamicsModel,
}

impl JointDynamics {
    pub fn continuous(
        rhs: Arc<dyn ContinuousDynamics>,
        control_dims: Vec<usize>,
        dt: f64,
        integrator: Integrator,
    ) -> Result<Self> {
        let n = rhs.state_dim();
        let m: usize = control_dims.iter().sum();
        check_dim("continuous dynamics control dimension", rhs.control_dim(), m)?;
        Self::new(
            n,
            control_dims,
            dt,
            DynamicsModel::Continuous { rhs, integrator },
        )
    }

    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>, control_dims: Vec<usize>, dt: f64) -> Result<Self> {
        let n = a.nrows();
        check_dim("linear dynamics A columns", n, a.ncols())?;
        check_dim("linear dynamics B rows", n, b.nrows())?;
        check_dim("linear dynamics B columns", control_dims.iter().sum(), b.ncols())?;
        Self::new(n, control_dims, dt, DynamicsModel::DiscreteLinear { a, b })
    }

    fn new(n: usize, control_dims: Vec<usize>, dt: f64, model: DynamicsModel) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("state dimension must be at least 1".into()));
        }
        if control_dims.is_empty() || control_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(
                "every player needs at least one control input".into(),
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let control_offsets = control_dims
            .iter()
            .scan(0, |acc, &d| {
                let off = *acc;
                *acc += d;
                Some(off)
            })
            .collect();
        Ok(Self {
            n,
            control_dims,
            control_offsets,
            dt,
            model,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// Total control dimension `m = Σ m^ν`.
    pub fn control_dim(&self) -> usize {
        self.control_dims.iter().sum()
    }

    pub fn control_dims(&self) -> &[usize] {
        &self.control_dims
    }

    /// Offset of player `nu`'s controls inside the joint control vector.
    pub fn control_offset(&self, nu: usize) -> usize {
        self.control_offsets[nu]
    }

    pub fn num_players(&self) -> usize {
        self.control_dims.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn model(&self) -> &DynamicsModel {
        &self.model
    }

    fn check(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        check_dim("dynamics state", self.n, x.len())?;
        check_dim("dynamics control", self.control_dim(), u.len())
    }

    /// One discrete step of the configured integrator.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x, u)?;
        Ok(self.step_unchecked(x, u))
    }

    pub(crate) fn step_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match &self.model {
            DynamicsModel::DiscreteLinear { a, b } => a * x + b * u,
            DynamicsModel::Continuous { rhs, integrator } => {
                let h = self.dt;
                match integrator {
                    Integrator::ExplicitEuler => x + rhs.rhs(x, u) * h,
                    Integrator::Rk4 => {
                        let k1 = rhs.rhs(x, u);
                        let k2 = rhs.rhs(&(x + &k1 * (0.5 * h)), u);
                        let k3 = rhs.rhs(&(x + &k2 * (0.5 * h)), u);
                        let k4 = rhs.rhs(&(x + &k3 * h), u);
                        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
                    }
                }
            }
        }
    }

    /// `(A, B) = (∂x_{k+1}/∂x_k, ∂x_{k+1}/∂u_k)` of the discrete step.
    pub fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check(x, u)?;
        Ok(self.jacobians_unchecked(x, u))
    }

    /// Next state together with its Jacobians, sharing the integrator stages.
    pub(crate) fn linearize(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        match &self.model {
            DynamicsModel::DiscreteLinear { a, b } => (a * x + b * u, a.clone(), b.clone()),
            DynamicsModel::Continuous { rhs, integrator } => {
                let h = self.dt;
                let n = self.n;
                let eye = DMatrix::<f64>::identity(n, n);
                match integrator {
                    Integrator::ExplicitEuler => {
                        let (fx, fu) = rhs.rhs_jacobians(x, u);
                        (x + rhs.rhs(x, u) * h, eye + fx * h, fu * h)
                    }
                    Integrator::Rk4 => {
                        // Chain rule through the four stages: z_i is the stage argument,
                        // dk_i = Fx(z_i) dz_i + Fu(z_i) du.
                        let k1 = rhs.rhs(x, u);
                        let (a1, b1) = rhs.rhs_jacobians(x, u);

                        let z2 = x + &k1 * (0.5 * h);
                        let k2 = rhs.rhs(&z2, u);
                        let (fx2, fu2) = rhs.rhs_jacobians(&z2, u);
                        let a2 = &fx2 * (&eye + &a1 * (0.5 * h));
                        let b2 = &fx2 * &b1 * (0.5 * h) + fu2;

                        let z3 = x + &k2 * (0.5 * h);
                        let k3 = rhs.rhs(&z3, u);
                        let (fx3, fu3) = rhs.rhs_jacobians(&z3, u);
                        let a3 = &fx3 * (&eye + &a2 * (0.5 * h));
                        let b3 = &fx3 * &b2 * (0.5 * h) + fu3;

                        let z4 = x + &k3 * h;
                        let k4 = rhs.rhs(&z4, u);
                        let (fx4, fu4) = rhs.rhs_jacobians(&z4, u);
                        let a4 = &fx4 * (&eye + &a3 * h);
                        let b4 = &fx4 * &b3 * h + fu4;

                        let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                        let a = eye + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
                        let b = (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
                        (next, a, b)
                    }
                }
            }
        }
    }

    pub(crate) fn jacobians_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (_, a, b) = self.linearize(x, u);
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::unicycle::UnicycleFleet;
    use std::f64::consts::FRAC_PI_2;

    fn unicycle(integrator: Integrator, dt: f64) -> JointDynamics {
        JointDynamics::continuous(Arc::new(UnicycleFleet::new(1)), vec![2], dt, integrator).unwrap()
    }

    fn fd_jacobians(dyn_: &JointDynamics, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let h = 1e-6;
        let n = x.len();
        let m = u.len();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, m);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (dyn_.step(&xp, u).unwrap() - dyn_.step(&xm, u).unwrap()) / (2.0 * h);
            a.set_column(j, &col);
        }
        for j in 0..m {
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let col = (dyn_.step(x, &up).unwrap() - dyn_.step(x, &um).unwrap()) / (2.0 * h);
            b.set_column(j, &col);
        }
        (a, b)
    }

    #[test]
    fn straight_line_steps() {
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        let u = DVector::zeros(2);
        for integ in [Integrator::ExplicitEuler, Integrator::Rk4] {
            let next = unicycle(integ, 0.1).step(&x, &u).unwrap();
            assert!((next - DVector::from_vec(vec![0.1, 0.0, 0.0, 1.0])).amax() < 1e-15);
        }
        let x = DVector::from_vec(vec![0.0, 0.0, FRAC_PI_2, 2.0]);
        let next = unicycle(Integrator::ExplicitEuler, 0.05).step(&x, &u).unwrap();
        assert!((next - DVector::from_vec(vec![0.0, 0.1, FRAC_PI_2, 2.0])).amax() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let d = unicycle(Integrator::Rk4, 0.1);
        assert!(matches!(
            d.step(&DVector::zeros(3), &DVector::zeros(2)),
            Err(Error::Dimension { .. })
        ));
        assert!(d.jacobians(&DVector::zeros(4), &DVector::zeros(1)).is_err());
    }

    #[test]
    fn invalid_construction() {
        let rhs = Arc::new(UnicycleFleet::new(1));
        assert!(JointDynamics::continuous(rhs.clone(), vec![2], 0.0, Integrator::Rk4).is_err());
        assert!(JointDynamics::continuous(rhs, vec![1], 0.1, Integrator::Rk4).is_err());
    }

    #[test]
    fn linear_model_returns_its_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.1, -0.2]);
        let d = JointDynamics::linear(a.clone(), b.clone(), vec![1, 1], 0.1).unwrap();
        let (ja, jb) = d.jacobians(&DVector::from_vec(vec![3.0, -1.0]), &DVector::from_vec(vec![0.5, 2.0])).unwrap();
        assert_eq!(ja, a);
        assert_eq!(jb, b);
    }

    #[test]
    fn euler_unicycle_heading_and_speed_partials() {
        let d = unicycle(Integrator::ExplicitEuler, 0.1);
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        let u = DVector::zeros(2);
        let (a, _) = d.jacobians(&x, &u).unwrap();
        let (fa, _) = fd_jacobians(&d, &x, &u);
        // ∂px/∂θ = -v sinθ dt = 0, ∂px/∂v = cosθ dt = dt
        assert!(a[(0, 2)].abs() < 1e-15);
        assert!((a[(0, 3)] - 0.1).abs() < 1e-15);
        assert!((fa[(0, 2)] - a[(0, 2)]).abs() < 1e-8);
        assert!((fa[(0, 3)] - a[(0, 3)]).abs() < 1e-8);
    }

    #[test]
    fn jacobians_match_finite_differences_at_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let fleet = Arc::new(UnicycleFleet::new(2));
        for integ in [Integrator::ExplicitEuler, Integrator::Rk4] {
            let d = JointDynamics::continuous(fleet.clone(), vec![2, 2], 0.1, integ).unwrap();
            for _ in 0..100 {
                let x = DVector::from_fn(8, |_, _| rng.random_range(-2.0..2.0));
                let u = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                let (a, b) = d.jacobians(&x, &u).unwrap();
                let (fa, fb) = fd_jacobians(&d, &x, &u);
                let rel = |m: &DMatrix<f64>, f: &DMatrix<f64>| (m - f).amax() / (1.0 + f.amax());
                assert!(rel(&a, &fa) < 1e-5, "A mismatch {}", rel(&a, &fa));
                assert!(rel(&b, &fb) < 1e-5, "B mismatch {}", rel(&b, &fb));
            }
        }
    }

    #[test]
    fn step_is_deterministic() {
        let d = unicycle(Integrator::Rk4, 0.125);
        let x = DVector::from_vec(vec![0.3, -0.2, 0.7, 1.9]);
        let u = DVector::from_vec(vec![0.4, -0.3]);
        let a = d.step(&x, &u).unwrap();
        let b = d.step(&x, &u).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}

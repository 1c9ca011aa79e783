use nalgebra::{DVector, DVectorView};

use super::constraints::ConstraintSet;
use super::cost::PlayerCost;
use super::dynamics::JointDynamics;
use crate::error::{check_dim, Error, Result};

/// Immutable description of an M-player game over `N` time steps.
///
/// The decision trajectory excludes the pinned initial state: `X` stacks
/// `x_2..x_N` (N−1 states) and each `U^ν` stacks `u^ν_1..u^ν_{N−1}`.
#[derive(Debug, Clone)]
pub struct GameProblem {
    num_time_steps: usize,
    dynamics: JointDynamics,
    costs: Vec<PlayerCost>,
    constraints: ConstraintSet,
    x0: DVector<f64>,
}

impl GameProblem {
    pub fn new(
        num_time_steps: usize,
        dynamics: JointDynamics,
        costs: Vec<PlayerCost>,
        constraints: ConstraintSet,
        x0: DVector<f64>,
    ) -> Result<Self> {
        if num_time_steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 time steps, got {num_time_steps}"
            )));
        }
        let n = dynamics.state_dim();
        check_dim("initial state", n, x0.len())?;
        check_dim("number of player costs", dynamics.num_players(), costs.len())?;
        for (nu, cost) in costs.iter().enumerate() {
            check_dim("cost state dimension", n, cost.state_dim())?;
            check_dim("cost control dimension", dynamics.control_dims()[nu], cost.control_dim())?;
        }
        if let Some(k) = constraints.max_step() {
            if k + 1 >= num_time_steps {
                return Err(Error::InvalidArgument(format!(
                    "constraint attached to step {k} but the horizon has {} steps",
                    num_time_steps - 1
                )));
            }
        }
        Ok(Self {
            num_time_steps,
            dynamics,
            costs,
            constraints,
            x0,
        })
    }

    /// Same game with a different initial state.
    pub fn with_initial_state(&self, x0: DVector<f64>) -> Result<Self> {
        check_dim("initial state", self.state_dim(), x0.len())?;
        Ok(Self { x0, ..self.clone() })
    }

    /// Number of time steps `N` (states `x_1..x_N`).
    pub fn num_time_steps(&self) -> usize {
        self.num_time_steps
    }

    /// Number of control steps `N−1`.
    pub fn num_steps(&self) -> usize {
        self.num_time_steps - 1
    }

    pub fn num_players(&self) -> usize {
        self.costs.len()
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn player_control_dim(&self, nu: usize) -> usize {
        self.dynamics.control_dims()[nu]
    }

    /// `n̄ = n(N−1)`.
    pub fn stacked_state_dim(&self) -> usize {
        self.state_dim() * self.num_steps()
    }

    /// `m̄^ν = m^ν(N−1)`.
    pub fn stacked_player_control_dim(&self, nu: usize) -> usize {
        self.player_control_dim(nu) * self.num_steps()
    }

    /// `m̄ = m(N−1)`.
    pub fn stacked_control_dim(&self) -> usize {
        self.control_dim() * self.num_steps()
    }

    pub fn dynamics(&self) -> &JointDynamics {
        &self.dynamics
    }

    pub fn costs(&self) -> &[PlayerCost] {
        &self.costs
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub(crate) fn check_trajectory(&self, xs: &DVector<f64>, us: &[DVector<f64>]) -> Result<()> {
        check_dim("stacked states", self.stacked_state_dim(), xs.len())?;
        check_dim("number of player control trajectories", self.num_players(), us.len())?;
        for (nu, u) in us.iter().enumerate() {
            check_dim("stacked player controls", self.stacked_player_control_dim(nu), u.len())?;
        }
        Ok(())
    }

    /// State `x_{k+1}` in 0-based step terms: `state(xs, 0)` is `x0`.
    pub fn state<'a>(&'a self, xs: &'a DVector<f64>, t: usize) -> DVectorView<'a, f64> {
        if t == 0 {
            self.x0.rows(0, self.state_dim())
        } else {
            let n = self.state_dim();
            xs.rows((t - 1) * n, n)
        }
    }

    /// Joint control applied at 0-based step `k`.
    pub fn joint_control(&self, us: &[DVector<f64>], k: usize) -> DVector<f64> {
        let mut u = DVector::zeros(self.control_dim());
        for (nu, un) in us.iter().enumerate() {
            let m = self.player_control_dim(nu);
            let off = self.dynamics.control_offset(nu);
            u.rows_mut(off, m).copy_from(&un.rows(k * m, m));
        }
        u
    }

    /// Forward simulation of the given controls from `x0`.
    pub fn rollout(&self, us: &[DVector<f64>]) -> Result<DVector<f64>> {
        check_dim("number of player control trajectories", self.num_players(), us.len())?;
        for (nu, u) in us.iter().enumerate() {
            check_dim("stacked player controls", self.stacked_player_control_dim(nu), u.len())?;
        }
        let n = self.state_dim();
        let mut xs = DVector::zeros(self.stacked_state_dim());
        let mut x = self.x0.clone();
        for k in 0..self.num_steps() {
            x = self.dynamics.step_unchecked(&x, &self.joint_control(us, k));
            xs.rows_mut(k * n, n).copy_from(&x);
        }
        Ok(xs)
    }

    /// Stacked defect `D`, block `k` equal to `x_{k+1} − f(x_k, u_k)`.
    pub fn dynamics_residual(&self, xs: &DVector<f64>, us: &[DVector<f64>]) -> Result<DVector<f64>> {
        self.check_trajectory(xs, us)?;
        let n = self.state_dim();
        let mut d = DVector::zeros(self.stacked_state_dim());
        for k in 0..self.num_steps() {
            let prev = self.state(xs, k).into_owned();
            let pred = self.dynamics.step_unchecked(&prev, &self.joint_control(us, k));
            d.rows_mut(k * n, n).copy_from(&(self.state(xs, k + 1) - pred));
        }
        Ok(d)
    }

    /// Player ν's cost `J^ν(X, U^ν)`.
    pub fn player_cost(&self, nu: usize, xs: &DVector<f64>, u_nu: &DVector<f64>) -> Result<f64> {
        let cost = self
            .costs
            .get(nu)
            .ok_or_else(|| Error::InvalidArgument(format!("player index {nu} out of range")))?;
        cost.eval(&self.x0, xs, u_nu)
    }

    /// Stacked constraint values `C(X, U)`.
    pub fn constraint_values(&self, xs: &DVector<f64>, us: &[DVector<f64>]) -> Result<DVector<f64>> {
        self.check_trajectory(xs, us)?;
        let controls: Vec<_> = (0..self.num_steps()).map(|k| self.joint_control(us, k)).collect();
        Ok(DVector::from_iterator(
            self.constraints.len(),
            self.constraints.terms().map(|t| {
                t.func
                    .value(self.state(xs, t.step + 1), controls[t.step].rows(0, self.control_dim()))
            }),
        ))
    }
}

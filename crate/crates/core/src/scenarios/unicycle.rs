//! Planar unicycle vehicles: state `(px, py, θ, v)`, control `(ω, a)`.

use nalgebra::{DMatrix, DVector};

use crate::model::ContinuousDynamics;

pub const STATE_DIM: usize = 4;
pub const CONTROL_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnicycleState {
    pub px: f64,
    pub py: f64,
    pub theta: f64,
    pub v: f64,
}

impl UnicycleState {
    pub fn new(px: f64, py: f64, theta: f64, v: f64) -> Self {
        Self { px, py, theta, v }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.px, self.py, self.theta, self.v]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// `(ṗx, ṗy, θ̇, v̇) = (v cosθ, v sinθ, ω, a)`.
pub fn unicycle_rhs(state: &UnicycleState, omega: f64, accel: f64) -> [f64; 4] {
    let (s, c) = state.theta.sin_cos();
    [state.v * c, state.v * s, omega, accel]
}

/// Independent unicycles stacked into one joint system.
#[derive(Debug, Clone)]
pub struct UnicycleFleet {
    players: usize,
}

impl UnicycleFleet {
    pub fn new(players: usize) -> Self {
        Self { players }
    }
}

impl ContinuousDynamics for UnicycleFleet {
    fn state_dim(&self) -> usize {
        STATE_DIM * self.players
    }

    fn control_dim(&self) -> usize {
        CONTROL_DIM * self.players
    }

    fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for p in 0..self.players {
            let st = UnicycleState::from_slice(&x.as_slice()[4 * p..4 * p + 4]);
            let d = unicycle_rhs(&st, u[2 * p], u[2 * p + 1]);
            out.rows_mut(4 * p, 4).copy_from_slice(&d);
        }
        out
    }

    fn rhs_jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = x.len();
        let mut fx = DMatrix::zeros(n, n);
        let mut fu = DMatrix::zeros(n, 2 * self.players);
        for p in 0..self.players {
            let i = 4 * p;
            let (s, c) = x[i + 2].sin_cos();
            let v = x[i + 3];
            fx[(i, i + 2)] = -v * s;
            fx[(i, i + 3)] = c;
            fx[(i + 1, i + 2)] = v * c;
            fx[(i + 1, i + 3)] = s;
            fu[(i + 2, 2 * p)] = 1.0;
            fu[(i + 3, 2 * p + 1)] = 1.0;
        }
        (fx, fu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rhs_examples() {
        assert_eq!(unicycle_rhs(&UnicycleState::new(0.0, 0.0, 0.0, 1.0), 0.0, 0.0), [1.0, 0.0, 0.0, 0.0]);
        let d = unicycle_rhs(&UnicycleState::new(0.0, 0.0, FRAC_PI_2, 2.0), 0.0, 0.0);
        assert!(d[0].abs() < 1e-15 && (d[1] - 2.0).abs() < 1e-15 && d[2] == 0.0 && d[3] == 0.0);
        assert_eq!(unicycle_rhs(&UnicycleState::new(0.0, 0.0, 0.0, 0.0), 1.0, 1.0), [0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn fleet_stacks_players() {
        let f = UnicycleFleet::new(2);
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 5.0, 5.0, FRAC_PI_2, 2.0]);
        let u = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let d = f.rhs(&x, &u);
        assert_eq!(d.rows(0, 4).as_slice(), &[1.0, 0.0, 0.1, 0.2]);
        assert!((d[5] - 2.0).abs() < 1e-15);
        assert_eq!(d[6], 0.3);
    }
}

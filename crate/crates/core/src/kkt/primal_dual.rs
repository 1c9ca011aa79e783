use nalgebra::DVector;

use crate::error::{check_dim, Result};
use crate::model::GameProblem;

/// Stacked unknown `y = [X; U¹; …; U^M; μ¹; …; μ^M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDual {
    pub x: DVector<f64>,
    pub u: Vec<DVector<f64>>,
    pub mu: Vec<DVector<f64>>,
}

impl PrimalDual {
    pub fn zeros(prob: &GameProblem) -> Self {
        let players = prob.num_players();
        Self {
            x: DVector::zeros(prob.stacked_state_dim()),
            u: (0..players)
                .map(|nu| DVector::zeros(prob.stacked_player_control_dim(nu)))
                .collect(),
            mu: (0..players).map(|_| DVector::zeros(prob.stacked_state_dim())).collect(),
        }
    }

    /// `n̄ + m̄ + M·n̄`.
    pub fn dim(prob: &GameProblem) -> usize {
        let nbar = prob.stacked_state_dim();
        nbar + prob.stacked_control_dim() + prob.num_players() * nbar
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.u.iter().map(|u| u.len()).sum::<usize>() + self.mu.iter().map(|m| m.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self, prob: &GameProblem) -> Result<()> {
        prob.check_trajectory(&self.x, &self.u)?;
        check_dim("number of dynamics multipliers", prob.num_players(), self.mu.len())?;
        for mu in &self.mu {
            check_dim("dynamics multiplier length", prob.stacked_state_dim(), mu.len())?;
        }
        Ok(())
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let parts = std::iter::once(&self.x).chain(self.u.iter()).chain(self.mu.iter());
        DVector::from_iterator(self.len(), parts.flat_map(|v| v.iter().copied()))
    }

    pub fn from_vector(prob: &GameProblem, y: &DVector<f64>) -> Result<Self> {
        check_dim("primal-dual vector", Self::dim(prob), y.len())?;
        let nbar = prob.stacked_state_dim();
        let mut off = 0;
        let mut take = |len: usize| {
            let v = y.rows(off, len).into_owned();
            off += len;
            v
        };
        let x = take(nbar);
        let u = (0..prob.num_players())
            .map(|nu| take(prob.stacked_player_control_dim(nu)))
            .collect();
        let mu = (0..prob.num_players()).map(|_| take(nbar)).collect();
        Ok(Self { x, u, mu })
    }

    /// `self + alpha * dy` with `dy` in flattened order.
    pub fn step(&self, dy: &DVector<f64>, alpha: f64) -> Self {
        let mut off = 0;
        let mut shift = |v: &DVector<f64>| {
            let out = v + dy.rows(off, v.len()) * alpha;
            off += v.len();
            out
        };
        let x = shift(&self.x);
        let u = self.u.iter().map(&mut shift).collect();
        let mu = self.mu.iter().map(&mut shift).collect();
        Self { x, u, mu }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.u.iter().flatten()).chain(self.mu.iter().flatten()).all(|v| v.is_finite())
    }
}

//! Shared constraint vector `C = [C_i; C_e]`.
//!
//! Each scalar constraint is attached to one step `k` of the horizon and reads
//! the joint control applied at that step together with the state it produces,
//! i.e. the pair `(x_{k+1}, u_k)`. All inequalities come first in the stacked
//! order, then all equalities.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView};

/// A scalar constraint function over `(x_{k+1}, u_k)`.
pub trait StageConstraint: Send + Sync + fmt::Debug {
    fn value(&self, x: DVectorView<'_, f64>, u: DVectorView<'_, f64>) -> f64;

    /// Gradient with respect to the state and the joint control.
    fn gradient(&self, x: DVectorView<'_, f64>, u: DVectorView<'_, f64>) -> (DVector<f64>, DVector<f64>);

    /// True when the constraint never reads controls (lets callers skip work).
    fn state_only(&self) -> bool {
        false
    }

    /// Adds `scale · ∇²c` to `out`, a square matrix over `[u; x]`.
    /// The default is for constraints without curvature.
    fn add_hessian(&self, _x: DVectorView<'_, f64>, _u: DVectorView<'_, f64>, _scale: f64, _out: &mut DMatrix<f64>) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Inequality,
    Equality,
}

#[derive(Debug, Clone)]
pub struct ConstraintTerm {
    /// 0-based step index `k` in `0..N-1`.
    pub step: usize,
    pub func: Arc<dyn StageConstraint>,
    pub label: String,
}

#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    inequalities: Vec<ConstraintTerm>,
    equalities: Vec<ConstraintTerm>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_inequality(&mut self, step: usize, func: Arc<dyn StageConstraint>, label: impl Into<String>) {
        self.inequalities.push(ConstraintTerm {
            step,
            func,
            label: label.into(),
        });
    }

    pub fn add_equality(&mut self, step: usize, func: Arc<dyn StageConstraint>, label: impl Into<String>) {
        self.equalities.push(ConstraintTerm {
            step,
            func,
            label: label.into(),
        });
    }

    pub fn num_inequalities(&self) -> usize {
        self.inequalities.len()
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn len(&self) -> usize {
        self.inequalities.len() + self.equalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Terms in stacked order: inequalities, then equalities.
    pub fn terms(&self) -> impl Iterator<Item = &ConstraintTerm> {
        self.inequalities.iter().chain(self.equalities.iter())
    }

    pub fn term(&self, k: usize) -> &ConstraintTerm {
        if k < self.inequalities.len() {
            &self.inequalities[k]
        } else {
            &self.equalities[k - self.inequalities.len()]
        }
    }

    pub fn kind(&self, k: usize) -> ConstraintKind {
        if k < self.inequalities.len() {
            ConstraintKind::Inequality
        } else {
            ConstraintKind::Equality
        }
    }

    pub fn labels(&self) -> Vec<&str> {
        self.terms().map(|t| t.label.as_str()).collect()
    }

    pub fn max_step(&self) -> Option<usize> {
        self.terms().map(|t| t.step).max()
    }
}

/// Maximum violation: `max(0, C_i)` over inequalities and `|C_e|` over equalities.
pub fn max_violation(values: &DVector<f64>, num_inequalities: usize) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(k, &c)| if k < num_inequalities { c.max(0.0) } else { c.abs() })
        .fold(0.0, f64::max)
}

/// `aᵀx + bᵀu − c`; mostly used to build test problems.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl StageConstraint for AffineConstraint {
    fn value(&self, x: DVectorView<'_, f64>, u: DVectorView<'_, f64>) -> f64 {
        self.a.dot(&x) + self.b.dot(&u) - self.c
    }

    fn gradient(&self, _x: DVectorView<'_, f64>, _u: DVectorView<'_, f64>) -> (DVector<f64>, DVector<f64>) {
        (self.a.clone(), self.b.clone())
    }
}

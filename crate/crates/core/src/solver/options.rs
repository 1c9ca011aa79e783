use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::JacobianTerms;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Sufficient-decrease parameter of the line search, in (0, ½).
    pub beta: f64,
    /// Backtracking factor, in (0, 1).
    pub tau: f64,
    pub alpha_min: f64,
    /// Threshold on ‖G‖₁.
    pub tol_opt: f64,
    /// Threshold on the maximum constraint violation.
    pub tol_feas: f64,
    pub rho0: f64,
    pub gamma: f64,
    pub rho_max: f64,
    /// Newton iterations per outer pass.
    pub max_newton: usize,
    pub max_outer: usize,
    pub eps_reg: f64,
    pub use_structured_solve: bool,
    /// Keep the constraint curvature `Σ_k (λ_k + I_ρ,k C_k) ∇²C_k` in the
    /// Newton matrix instead of dropping it.
    pub constraint_curvature: bool,
    /// Inequalities within this margin of activity contribute their
    /// Gauss-Newton term to the Newton matrix. Zero gives the plain `I_ρ`.
    pub near_active: f64,
    /// Keep a copy of λ and ρ after every outer update in the report.
    pub record_multipliers: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            beta: 0.01,
            tau: 0.5,
            alpha_min: 1e-8,
            tol_opt: 1e-2,
            tol_feas: 1e-3,
            rho0: 1.0,
            gamma: 10.0,
            rho_max: 1e8,
            max_newton: 50,
            max_outer: 20,
            eps_reg: 1e-6,
            use_structured_solve: true,
            constraint_curvature: false,
            near_active: 0.0,
            record_multipliers: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return bad("beta must lie in (0, 0.5)");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.alpha_min > 0.0 && self.alpha_min <= 1.0) {
            return bad("alpha_min must lie in (0, 1]");
        }
        if !(self.tol_opt > 0.0 && self.tol_feas > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.rho0 > 0.0 && self.gamma > 1.0 && self.rho_max >= self.rho0) {
            return bad("penalty schedule needs rho0 > 0, gamma > 1 and rho_max >= rho0");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1");
        }
        if !(self.eps_reg >= 0.0 && self.eps_reg.is_finite()) {
            return bad("eps_reg must be finite and nonnegative");
        }
        if !(self.near_active >= 0.0 && self.near_active.is_finite()) {
            return bad("near_active must be finite and nonnegative");
        }
        Ok(())
    }

    pub(crate) fn jacobian_terms(&self) -> JacobianTerms {
        JacobianTerms {
            curvature: self.constraint_curvature,
            near_active: self.near_active,
        }
    }

    /// Applies a `key=value` override; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("`{key}` expects a number, got `{v}`")))
        };
        let count = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("`{key}` expects a nonnegative integer, got `{v}`")))
        };
        let flag = |v: &str| {
            v.parse::<bool>()
                .map_err(|_| Error::InvalidArgument(format!("`{key}` expects true or false, got `{v}`")))
        };
        match key {
            "beta" => self.beta = num(value)?,
            "tau" => self.tau = num(value)?,
            "alpha_min" => self.alpha_min = num(value)?,
            "tol_opt" => self.tol_opt = num(value)?,
            "tol_feas" => self.tol_feas = num(value)?,
            "rho0" => self.rho0 = num(value)?,
            "gamma" => self.gamma = num(value)?,
            "rho_max" => self.rho_max = num(value)?,
            "max_newton" => self.max_newton = count(value)?,
            "max_outer" => self.max_outer = count(value)?,
            "eps_reg" => self.eps_reg = num(value)?,
            "use_structured_solve" => self.use_structured_solve = flag(value)?,
            "constraint_curvature" => self.constraint_curvature = flag(value)?,
            "near_active" => self.near_active = num(value)?,
            "record_multipliers" => self.record_multipliers = flag(value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown solver option `{key}`"))),
        }
        Ok(())
    }

    pub const KEYS: &'static [&'static str] = &[
        "beta",
        "tau",
        "alpha_min",
        "tol_opt",
        "tol_feas",
        "rho0",
        "gamma",
        "rho_max",
        "max_newton",
        "max_outer",
        "eps_reg",
        "use_structured_solve",
        "constraint_curvature",
        "near_active",
        "record_multipliers",
    ];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let o = SolverOptions::default();
        o.validate().unwrap();
        assert_eq!((o.rho0, o.gamma), (1.0, 10.0));
        assert_eq!((o.tol_opt, o.tol_feas), (1e-2, 1e-3));
    }

    #[test]
    fn ranges_are_enforced() {
        for (k, v) in [("beta", "0.5"), ("tau", "1.0"), ("gamma", "1.0"), ("tol_opt", "0")] {
            let mut o = SolverOptions::default();
            o.set(k, v).unwrap();
            assert!(o.validate().is_err(), "{k}={v} accepted");
        }
    }

    #[test]
    fn overrides() {
        let mut o = SolverOptions::default();
        o.set("max_outer", "7").unwrap();
        o.set("use_structured_solve", "false").unwrap();
        assert_eq!(o.max_outer, 7);
        assert!(!o.use_structured_solve);
        assert!(o.set("nonsense", "1").is_err());
        assert!(o.set("beta", "abc").is_err());
    }
}

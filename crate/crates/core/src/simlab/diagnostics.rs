//! Run-time checks of the deterministic consequences of feasibility of the truth.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::Solution;
use crate::solver::{feasibility_residual, SelectorProgram};
use crate::thresholds::ThresholdSet;

/// Whether `(θ*, |θ*|₂, |θ*|∞)` satisfies every constraint of `prog` within `tol`.
pub fn truth_is_feasible(prog: &SelectorProgram, theta_star: &DVector<f64>, tol: f64) -> bool {
    feasibility_residual(prog, theta_star, theta_star.norm(), theta_star.amax()) <= tol
}

/// `|θ*|₁ + λ|θ*|₂ + ν|θ*|∞`.
pub fn truth_objective(theta_star: &DVector<f64>, lambda: f64, nu: f64) -> f64 {
    theta_star.lp_norm(1) + lambda * theta_star.norm() + nu * theta_star.amax()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeDiagnostic {
    /// `|Δ_{J^c}|₁`.
    pub off_support: f64,
    /// `(1 + λ + ν)|Δ_J|₁`.
    pub cone_bound: f64,
    pub cone_holds: bool,
    /// `t̂ − |θ*|₂` against `((1 + ν)/λ)|Δ|₁`.
    pub t_excess: f64,
    pub t_bound: f64,
    pub t_holds: bool,
    /// `û − |θ*|∞` against `((1 + λ)/ν)|Δ|₁`.
    pub u_excess: f64,
    pub u_bound: f64,
    pub u_holds: bool,
}

impl ConeDiagnostic {
    pub fn all_hold(&self) -> bool {
        self.cone_holds && self.t_holds && self.u_holds
    }
}

/// Cone membership of `Δ = θ̂ − θ*` over the support `J` of `θ*`, and the bounds on the auxiliaries.
pub fn cone_diagnostic(
    sol: &Solution,
    theta_star: &DVector<f64>,
    lambda: f64,
    nu: f64,
    slack: f64,
) -> ConeDiagnostic {
    let delta = &sol.theta_hat - theta_star;
    let (mut on, mut off) = (0.0, 0.0);
    for j in 0..delta.len() {
        if theta_star[j] != 0.0 {
            on += delta[j].abs();
        } else {
            off += delta[j].abs();
        }
    }
    let l1 = on + off;
    let cone_bound = (1.0 + lambda + nu) * on;
    let t_excess = sol.t_hat - theta_star.norm();
    let t_bound = (1.0 + nu) / lambda * l1;
    let u_excess = sol.u_hat - theta_star.amax();
    let u_bound = (1.0 + lambda) / nu * l1;
    ConeDiagnostic {
        off_support: off,
        cone_bound,
        cone_holds: off <= cone_bound + slack,
        t_excess,
        t_bound,
        t_holds: t_excess <= t_bound + slack,
        u_excess,
        u_bound,
        u_holds: u_excess <= u_bound + slack,
    }
}

/// Coefficients of the bound
/// `|XᵀXΔ/n|∞ ≤ μ₀ + μ₁|Δ|₁ + μ₂|θ*|₂ + μ∞|θ*|∞` for the compensated `{ℓ1, ℓ2, ℓ∞}` selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramBound {
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu_inf: f64,
}

impl GramBound {
    pub fn new(ts: &ThresholdSet, b_eps: f64, mu: f64, tau: f64, beta: f64, lambda: f64, nu: f64) -> Self {
        Self {
            mu0: tau + ts.delta2 + ts.delta3,
            mu1: 2.0 * ts.delta1
                + ts.delta4
                + ts.delta5
                + b_eps
                + (1.0 + nu) / lambda * mu
                + (1.0 + lambda) / nu * beta,
            mu2: mu + ts.delta1_prime,
            mu_inf: beta + b_eps + ts.delta4_prime + ts.delta5,
        }
    }

    /// `(lhs, rhs)` of the bound for one fit.
    pub fn evaluate(&self, x: &DMatrix<f64>, theta_hat: &DVector<f64>, theta_star: &DVector<f64>) -> (f64, f64) {
        let delta = theta_hat - theta_star;
        let n = x.nrows() as f64;
        let lhs = (x.tr_mul(&(x * &delta)) / n).amax();
        let rhs = self.mu0
            + self.mu1 * delta.lp_norm(1)
            + self.mu2 * theta_star.norm()
            + self.mu_inf * theta_star.amax();
        (lhs, rhs)
    }
}

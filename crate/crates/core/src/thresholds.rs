//! Stochastic-error thresholds and the tuning parameters derived from them.
//!
//! The `δ` thresholds bound the noise cross-products `XᵀW/n`, `Xᵀξ/n`, `Wᵀξ/n`,
//! the off-diagonal and diagonal parts of `WᵀW/n`, and their actions on `θ*`.
//! Tuning parameters are sums of these:
//!
//! * `μ = δ′₁ + δ′₄` (slack per unit of `|θ|₂`),
//! * `τ = δ₂ + δ₃` (constant slack),
//! * `β = b(ε) + δ₅` (slack per unit of `|θ|∞`, compensated variants only).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EivError, Result};

/// Sub-gaussian and Bernstein-type constants describing the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConstants {
    /// Sub-gaussian parameter of the regression noise `ξ`.
    pub sigma: f64,
    /// Sub-gaussian parameter of the rows of `W`.
    pub sigma_star: f64,
    pub gamma0: f64,
    pub t0: f64,
    pub gamma2: f64,
    pub t2: f64,
    /// Almost-sure bound on `|W|∞`.
    pub delta_bar: f64,
    /// Accuracy of the variance estimates in `D̂`.
    pub b_eps: f64,
}

impl NoiseConstants {
    /// Constants with the default Bernstein split: `γ₀ = σσ*`, `t₀ = 1/(σσ*)`, `γ₂ = σ*²`, `t₂ = 1/σ*²`.
    pub fn with_defaults(sigma: f64, sigma_star: f64) -> Self {
        let tiny = f64::MIN_POSITIVE;
        let g0 = sigma * sigma_star;
        let g2 = sigma_star * sigma_star;
        Self {
            sigma,
            sigma_star,
            gamma0: g0.max(tiny),
            t0: 1.0 / g0.max(tiny),
            gamma2: g2.max(tiny),
            t2: 1.0 / g2.max(tiny),
            delta_bar: 0.0,
            b_eps: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma", self.sigma),
            ("sigma_star", self.sigma_star),
            ("gamma0", self.gamma0),
            ("t0", self.t0),
            ("gamma2", self.gamma2),
            ("t2", self.t2),
            ("delta_bar", self.delta_bar),
            ("b_eps", self.b_eps),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(EivError::Domain(format!("noise constant `{name}` = {v} is not finite")));
            }
            if v < 0.0 {
                return Err(EivError::Domain(format!("noise constant `{name}` = {v} is negative")));
            }
        }
        for (name, v) in [("gamma0", self.gamma0), ("t0", self.t0), ("gamma2", self.gamma2), ("t2", self.t2)] {
            if v <= 0.0 {
                return Err(EivError::Domain(format!("noise constant `{name}` must be positive")));
            }
        }
        Ok(())
    }
}

/// `δ₁ … δ₅`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Thresholds {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
    pub delta5: f64,
}

/// `δ′₁` and `δ′₄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Thresholds {
    pub delta1_prime: f64,
    pub delta4_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub mu: f64,
    pub tau: f64,
    pub beta: f64,
}

/// Every threshold together with the tuning parameters built from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub m2: f64,
    pub eps: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta4: f64,
    pub delta5: f64,
    pub delta1_prime: f64,
    pub delta4_prime: f64,
    pub mu: f64,
    pub tau: f64,
    pub beta: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(EivError::Domain(format!("eps = {eps} is outside (0, 1)")))
    }
}

fn check_sizes(n: usize, p: usize, m2: f64) -> Result<()> {
    if n == 0 || p == 0 {
        return Err(EivError::Domain(format!("n = {n}, p = {p}: both must be at least 1")));
    }
    if !m2.is_finite() || m2 < 0.0 {
        return Err(EivError::Domain(format!("m2 = {m2} must be finite and nonnegative")));
    }
    Ok(())
}

/// Largest mean squared entry over the columns of `X`.
pub fn compute_m2(x: &DMatrix<f64>) -> Result<f64> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(EivError::Empty("design matrix for m2"));
    }
    Ok(x
        .column_iter()
        .map(|c| c.norm_squared() / n as f64)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `max(γ√(2L/n), 2L/(t n))` with `L = log(N/ε)`.
///
/// For `N = 0` there is nothing to bound and the threshold is zero.
pub fn bernstein_tail(gamma: f64, t: f64, n: usize, count: f64, eps: f64) -> f64 {
    if count <= 0.0 {
        return 0.0;
    }
    let log_term = (count / eps).ln().max(0.0);
    let n = n as f64;
    (gamma * (2.0 * log_term / n).sqrt()).max(2.0 * log_term / (t * n))
}

pub fn lemma1_thresholds(
    nc: &NoiseConstants,
    m2: f64,
    n: usize,
    p: usize,
    eps: f64,
) -> Result<Lemma1Thresholds> {
    check_eps(eps)?;
    check_sizes(n, p, m2)?;
    nc.validate()?;
    let (nf, pf) = (n as f64, p as f64);
    let delta1 = nc.sigma_star * (2.0 * m2 * (2.0 * pf * pf / eps).ln() / nf).sqrt();
    let delta2 = nc.sigma * (2.0 * m2 * (2.0 * pf / eps).ln() / nf).sqrt();
    let delta3 = bernstein_tail(nc.gamma0, nc.t0, n, 2.0 * pf, eps);
    let delta4 = bernstein_tail(nc.gamma0, nc.t0, n, pf * (pf - 1.0), eps);
    Ok(Lemma1Thresholds {
        delta1,
        delta2,
        delta3,
        delta4,
        delta5: delta3,
    })
}

pub fn lemma2_thresholds(
    nc: &NoiseConstants,
    m2: f64,
    n: usize,
    p: usize,
    eps: f64,
) -> Result<Lemma2Thresholds> {
    check_eps(eps)?;
    check_sizes(n, p, m2)?;
    nc.validate()?;
    let pf = p as f64;
    let delta1_prime = nc.sigma_star * (2.0 * m2 * (2.0 * pf / eps).ln() / n as f64).sqrt();
    let delta4_prime = bernstein_tail(nc.gamma2, nc.t2, n, 2.0 * pf, eps);
    Ok(Lemma2Thresholds {
        delta1_prime,
        delta4_prime,
    })
}

pub fn tuning_from_lemmas(l1: &Lemma1Thresholds, l2: &Lemma2Thresholds, b_eps: f64) -> Tuning {
    Tuning {
        mu: l2.delta1_prime + l2.delta4_prime,
        tau: l1.delta2 + l1.delta3,
        beta: b_eps + l1.delta5,
    }
}

/// Penalties of the Monte Carlo study: `τ = σ√(log(p/ε)/n)` and `b(ε) = σ*²√(log(p/ε)/n)`.
///
/// Returns `(tau, b_eps)`.
pub fn simulation_tuning(
    sigma: f64,
    sigma_star_sq: f64,
    n: usize,
    p: usize,
    eps: f64,
) -> Result<(f64, f64)> {
    check_eps(eps)?;
    if n == 0 || p == 0 {
        return Err(EivError::Domain(format!("n = {n}, p = {p}: both must be at least 1")));
    }
    let scale = ((p as f64 / eps).ln().max(0.0) / n as f64).sqrt();
    Ok((sigma * scale, sigma_star_sq * scale))
}

impl ThresholdSet {
    pub fn compute(nc: &NoiseConstants, m2: f64, n: usize, p: usize, eps: f64) -> Result<Self> {
        let l1 = lemma1_thresholds(nc, m2, n, p, eps)?;
        let l2 = lemma2_thresholds(nc, m2, n, p, eps)?;
        let tuning = tuning_from_lemmas(&l1, &l2, nc.b_eps);
        Ok(Self {
            m2,
            eps,
            delta1: l1.delta1,
            delta2: l1.delta2,
            delta3: l1.delta3,
            delta4: l1.delta4,
            delta5: l1.delta5,
            delta1_prime: l2.delta1_prime,
            delta4_prime: l2.delta4_prime,
            mu: tuning.mu,
            tau: tuning.tau,
            beta: tuning.beta,
        })
    }

    /// `key = value` lines, one per field, for embedding in reports.
    pub fn to_kv_block(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v:.7e}");
        }
        out
    }

    pub fn entries(&self) -> [(&'static str, f64); 12] {
        [
            ("m2", self.m2),
            ("eps", self.eps),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
            ("delta4", self.delta4),
            ("delta5", self.delta5),
            ("delta1_prime", self.delta1_prime),
            ("delta4_prime", self.delta4_prime),
            ("mu", self.mu),
            ("tau", self.tau),
            ("beta", self.beta),
        ]
    }
}

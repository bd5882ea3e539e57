//! Gaussian errors-in-variables design with Toeplitz covariance.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EivError, Result};
use crate::model::EivDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Replication count.
    pub r: usize,
    pub rho: f64,
    pub sigma: f64,
    pub sigma_star_sq: f64,
    pub theta_star: Vec<f64>,
    pub eps: f64,
    pub master_seed: u64,
}

impl SimConfig {
    /// The reference design: `n = 300`, `σ = 0.128`, `σ*² = 0.5`, `ρ = 0.25`, `ε = 0.05` and
    /// `θ* = 1.25 (1, 1, 1, 1, 1, 0, …, 0)`.
    pub fn reference(p: usize, r: usize, master_seed: u64) -> Self {
        let mut theta_star = vec![0.0; p];
        for v in theta_star.iter_mut().take(5) {
            *v = 1.25;
        }
        Self {
            n: 300,
            p,
            r,
            rho: 0.25,
            sigma: 0.128,
            sigma_star_sq: 0.5,
            theta_star,
            eps: 0.05,
            master_seed,
        }
    }

    /// Every violated field, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n == 0 {
            out.push("sim.n must be at least 1".to_string());
        }
        if self.p == 0 {
            out.push("sim.p must be at least 1".to_string());
        }
        if self.r == 0 {
            out.push("sim.R must be at least 1".to_string());
        }
        if !(self.rho.is_finite() && self.rho.abs() < 1.0) {
            out.push(format!("sim.rho = {} must lie in (-1, 1)", self.rho));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            out.push(format!("sim.sigma = {} must be finite and nonnegative", self.sigma));
        }
        if !(self.sigma_star_sq.is_finite() && self.sigma_star_sq >= 0.0) {
            out.push(format!(
                "sim.sigma_star_sq = {} must be finite and nonnegative",
                self.sigma_star_sq
            ));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            out.push(format!("sim.eps = {} must lie in (0, 1)", self.eps));
        }
        if self.theta_star.len() != self.p {
            out.push(format!(
                "sim.theta_star has length {} but p = {}",
                self.theta_star.len(),
                self.p
            ));
        }
        if self.theta_star.iter().any(|v| !v.is_finite()) {
            out.push("sim.theta_star has non-finite entries".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(EivError::Config(problems))
        }
    }
}

/// `Σ_ij = ρ^|i−j|`.
pub fn toeplitz_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Draws datasets for a fixed configuration; the covariance factor is computed once.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: SimConfig,
    chol_l: DMatrix<f64>,
    theta_star: DVector<f64>,
}

impl Generator {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let sigma = toeplitz_covariance(cfg.p, cfg.rho);
        let chol = Cholesky::new(sigma).ok_or_else(|| {
            EivError::Factorization(format!("Toeplitz covariance with rho = {} is not positive definite", cfg.rho))
        })?;
        Ok(Self {
            cfg: cfg.clone(),
            chol_l: chol.l(),
            theta_star: DVector::from_column_slice(&cfg.theta_star),
        })
    }

    /// Dataset number `replication_index`; the stream depends only on the seed and the index.
    pub fn dataset(&self, replication_index: u64) -> EivDataset {
        let SimConfig {
            n, p, sigma, sigma_star_sq, ..
        } = self.cfg;
        let mut rng = ChaCha20Rng::seed_from_u64(self.cfg.master_seed);
        rng.set_stream(replication_index);
        let mut draw = |rows: usize, cols: usize| -> DMatrix<f64> {
            // Row-major draw order so each observation consumes a contiguous block.
            DMatrix::from_row_iterator(
                rows,
                cols,
                (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)),
            )
        };
        let g = draw(n, p);
        let x = g * self.chol_l.transpose();
        let w = draw(n, p) * sigma_star_sq.sqrt();
        let xi = draw(n, 1).column(0) * sigma;
        let y = &x * &self.theta_star + xi;
        let z = &x + w;
        EivDataset::new(y, z, Some(x), Some(self.theta_star.clone()))
            .expect("generated data is finite and consistently shaped")
    }
}

pub fn generate_dataset(cfg: &SimConfig, replication_index: u64) -> Result<EivDataset> {
    Ok(Generator::new(cfg)?.dataset(replication_index))
}

//! Replicated experiments over a roster of estimators.
//!
//! Every replication draws one dataset and fits every estimator on it, so comparisons
//! between rows are paired. Replications run on a rayon pool and are reduced in index
//! order, which makes results independent of the thread count.

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{Generator, SimConfig};
use super::metrics::{aggregate, ReplicationError};
use crate::error::{EivError, Result};
use crate::estimators::{estimate, EstimatorSpec};
use crate::model::{EivDataset, SolveStatus};
use crate::solver::SolverOptions;
use crate::thresholds::{compute_m2, simulation_tuning, NoiseConstants, ThresholdSet};

/// How one tuning parameter is chosen for each replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tuned {
    Value(f64),
    /// From the threshold formulas, with `m₂` taken from the replication's true design.
    Lemma,
    /// From the penalty formulas of the simulation design: `τ = σ s`, `μ = β = σ*² s`
    /// with `s = √(log(p/ε)/n)`.
    Simulation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorPlan {
    pub label: String,
    pub spec: EstimatorSpec,
    pub mu: Tuned,
    pub tau: Tuned,
    pub beta: Tuned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTuning {
    pub mu: f64,
    pub tau: f64,
    pub beta: f64,
}

/// Noise constants for a simulation design: `σ*` from `σ*²` and `b(ε)` from the penalty formula.
pub fn simulation_noise(cfg: &SimConfig) -> Result<NoiseConstants> {
    let (_, b_eps) = simulation_tuning(cfg.sigma, cfg.sigma_star_sq, cfg.n, cfg.p, cfg.eps)?;
    let mut nc = NoiseConstants::with_defaults(cfg.sigma, cfg.sigma_star_sq.sqrt());
    nc.b_eps = b_eps;
    Ok(nc)
}

impl EstimatorPlan {
    pub fn fixed(label: impl Into<String>, spec: EstimatorSpec) -> Self {
        Self {
            label: label.into(),
            mu: Tuned::Value(spec.mu),
            tau: Tuned::Value(spec.tau),
            beta: Tuned::Value(spec.beta),
            spec,
        }
    }

    fn needs_thresholds(&self) -> bool {
        [self.mu, self.tau, self.beta].contains(&Tuned::Lemma)
    }

    pub fn resolve_tuning(
        &self,
        cfg: &SimConfig,
        noise: &NoiseConstants,
        d: &EivDataset,
    ) -> Result<ResolvedTuning> {
        let (tau_sim, b_sim) = simulation_tuning(cfg.sigma, cfg.sigma_star_sq, cfg.n, cfg.p, cfg.eps)?;
        let ts = if self.needs_thresholds() {
            let x = d.x().ok_or(EivError::MissingDesign)?;
            Some(ThresholdSet::compute(noise, compute_m2(x)?, d.n(), d.p(), cfg.eps)?)
        } else {
            None
        };
        let pick = |rule: Tuned, lemma: fn(&ThresholdSet) -> f64, sim: f64| match (rule, &ts) {
            (Tuned::Value(v), _) => v,
            (Tuned::Lemma, Some(ts)) => lemma(ts),
            (Tuned::Lemma, None) => unreachable!("thresholds are computed whenever a rule needs them"),
            (Tuned::Simulation, _) => sim,
        };
        Ok(ResolvedTuning {
            mu: pick(self.mu, |t| t.mu, b_sim),
            tau: pick(self.tau, |t| t.tau, tau_sim),
            beta: pick(self.beta, |t| t.beta, b_sim),
        })
    }

    pub fn resolve(&self, cfg: &SimConfig, noise: &NoiseConstants, d: &EivDataset) -> Result<EstimatorSpec> {
        let t = self.resolve_tuning(cfg, noise, d)?;
        Ok(EstimatorSpec {
            mu: t.mu,
            tau: t.tau,
            beta: t.beta,
            ..self.spec.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub estimator_label: String,
    pub lambda: f64,
    pub nu: f64,
    pub bias: f64,
    pub rmse: f64,
    pub pr: f64,
    #[serde(rename = "R_effective")]
    pub r_effective: usize,
}

/// One fit that did not produce an optimal solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FitFailure {
    pub label: String,
    pub replication: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<FitFailure>,
    /// Tuning used by each estimator, averaged over replications.
    pub mean_tuning: Vec<(String, ResolvedTuning)>,
    /// Mean `|θ̂|₁` per estimator over optimal fits.
    pub mean_l1: Vec<f64>,
}

/// Maps `f` over all replications, in parallel, returning results in replication order.
pub fn map_replications<T, F>(cfg: &SimConfig, jobs: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &EivDataset) -> T + Sync + Send,
{
    let generator = Generator::new(cfg)?;
    let work = || -> Vec<T> {
        (0..cfg.r as u64)
            .into_par_iter()
            .map(|rep| f(rep, &generator.dataset(rep)))
            .collect()
    };
    match jobs {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| EivError::Domain(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

enum FitOutcome {
    Ok {
        err: ReplicationError,
        l1: f64,
        tuning: ResolvedTuning,
    },
    Failed {
        reason: String,
        tuning: Option<ResolvedTuning>,
    },
}

fn fit_one(
    plan: &EstimatorPlan,
    cfg: &SimConfig,
    noise: &NoiseConstants,
    d: &EivDataset,
    opts: &SolverOptions,
) -> FitOutcome {
    let tuning = match plan.resolve_tuning(cfg, noise, d) {
        Ok(t) => t,
        Err(e) => {
            return FitOutcome::Failed {
                reason: e.to_string(),
                tuning: None,
            }
        }
    };
    let spec = EstimatorSpec {
        mu: tuning.mu,
        tau: tuning.tau,
        beta: tuning.beta,
        ..plan.spec.clone()
    };
    match estimate(&spec, d, opts) {
        Ok(sol) if sol.status == SolveStatus::Optimal => {
            let ts = d.theta_star().expect("simulated data carries the truth");
            let x = d.x().expect("simulated data carries the design");
            FitOutcome::Ok {
                err: ReplicationError::new(&sol.theta_hat, ts, x),
                l1: sol.theta_hat.lp_norm(1),
                tuning,
            }
        }
        Ok(sol) => FitOutcome::Failed {
            reason: format!(
                "status {} (residual {:.3e}, gap {:.3e})",
                sol.status, sol.feasibility_residual, sol.optimality_gap
            ),
            tuning: Some(tuning),
        },
        Err(e) => FitOutcome::Failed {
            reason: e.to_string(),
            tuning: Some(tuning),
        },
    }
}

pub fn run_experiment(
    cfg: &SimConfig,
    plans: &[EstimatorPlan],
    noise: &NoiseConstants,
    opts: &SolverOptions,
    jobs: Option<usize>,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    opts.validate()?;
    noise.validate()?;
    if plans.is_empty() {
        return Err(EivError::Empty("no estimators to run"));
    }
    for plan in plans {
        plan.spec.validate(cfg.p)?;
    }
    info!("running {} replications of {} estimators", cfg.r, plans.len());

    let per_rep = map_replications(cfg, jobs, |_, d| {
        plans
            .iter()
            .map(|plan| fit_one(plan, cfg, noise, d, opts))
            .collect::<Vec<_>>()
    })?;

    let mut rows = Vec::with_capacity(plans.len());
    let mut failures = Vec::new();
    let mut mean_tuning = Vec::with_capacity(plans.len());
    let mut mean_l1 = Vec::with_capacity(plans.len());
    for (k, plan) in plans.iter().enumerate() {
        let mut errs = Vec::with_capacity(cfg.r);
        let mut l1_sum = 0.0;
        let mut tsum = DVector::<f64>::zeros(3);
        let mut tcount = 0usize;
        for (rep, outcomes) in per_rep.iter().enumerate() {
            let tuning = match &outcomes[k] {
                FitOutcome::Ok { err, l1, tuning } => {
                    errs.push(*err);
                    l1_sum += l1;
                    Some(*tuning)
                }
                FitOutcome::Failed { reason, tuning } => {
                    warn!("{} replication {rep}: {reason}", plan.label);
                    failures.push(FitFailure {
                        label: plan.label.clone(),
                        replication: rep as u64,
                        reason: reason.clone(),
                    });
                    *tuning
                }
            };
            if let Some(t) = tuning {
                tsum += DVector::from_vec(vec![t.mu, t.tau, t.beta]);
                tcount += 1;
            }
        }
        let metrics = aggregate(&errs).ok();
        let nan = f64::NAN;
        rows.push(MetricsRow {
            estimator_label: plan.label.clone(),
            lambda: plan.spec.lambda,
            nu: plan.spec.nu,
            bias: metrics.map_or(nan, |m| m.bias),
            rmse: metrics.map_or(nan, |m| m.rmse),
            pr: metrics.map_or(nan, |m| m.pr),
            r_effective: errs.len(),
        });
        let tc = tcount.max(1) as f64;
        mean_tuning.push((
            plan.label.clone(),
            ResolvedTuning {
                mu: tsum[0] / tc,
                tau: tsum[1] / tc,
                beta: tsum[2] / tc,
            },
        ));
        mean_l1.push(if errs.is_empty() { nan } else { l1_sum / errs.len() as f64 });
    }
    Ok(ExperimentReport {
        rows,
        failures,
        mean_tuning,
        mean_l1,
    })
}

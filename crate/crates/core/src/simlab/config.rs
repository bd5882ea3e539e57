//! TOML experiment configuration with sections `[sim]`, `[noise]`, `[solver]` and `[estimators.N]`.
//!
//! ```toml
//! [sim]
//! n = 300
//! p = 10
//! R = 100
//! rho = 0.25
//! sigma = 0.128
//! sigma_star_sq = 0.5
//! eps = 0.05
//! master_seed = 1
//! theta_star = [1.25, 1.25, 1.25, 1.25, 1.25]   # padded with zeros up to p
//!
//! [estimators.1]
//! label = "Dantzig X"
//! kind = "dantzig"
//! design = "x"
//! tau = "sim"
//! ```
//!
//! Tuning values (`mu`, `tau`, `beta`) are numbers, `"lemma"` or `"sim"`; see [`Tuned`].
//! `d_hat` is a number, an array, or `"sigma_star_sq"` for the exact diagonal `σ*² I`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::dgp::SimConfig;
use super::experiment::{simulation_noise, EstimatorPlan, Tuned};
use crate::error::{EivError, Result};
use crate::estimators::{DesignSource, EstimatorSpec};
use crate::model::{EstimatorKind, EstimatorTag, ThetaSet};
use crate::solver::SolverOptions;
use crate::thresholds::NoiseConstants;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub noise: NoiseConstants,
    pub solver: SolverOptions,
    pub estimators: Vec<EstimatorPlan>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    sim: RawSim,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    estimators: BTreeMap<String, RawEstimator>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    n: i64,
    p: i64,
    #[serde(rename = "R")]
    r: i64,
    rho: f64,
    sigma: f64,
    sigma_star_sq: f64,
    eps: f64,
    master_seed: u64,
    theta_star: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    gamma0: Option<f64>,
    t0: Option<f64>,
    gamma2: Option<f64>,
    t2: Option<f64>,
    delta_bar: Option<f64>,
    b_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    eps_feas: Option<f64>,
    eps_opt: Option<f64>,
    max_iterations: Option<i64>,
    verbose: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NumOrWord {
    Num(f64),
    Word(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum VecSpec {
    Scalar(f64),
    Array(Vec<f64>),
    Word(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    label: Option<String>,
    kind: String,
    #[serde(default)]
    safeguards: bool,
    #[serde(default)]
    lambda: f64,
    #[serde(default)]
    nu: f64,
    mu: Option<NumOrWord>,
    tau: Option<NumOrWord>,
    beta: Option<NumOrWord>,
    #[serde(default)]
    delta_bar: Option<f64>,
    d_hat: Option<VecSpec>,
    theta_lower: Option<VecSpec>,
    theta_upper: Option<VecSpec>,
    design: Option<String>,
}

fn tuned(field: &str, v: &Option<NumOrWord>, errors: &mut Vec<String>) -> Tuned {
    match v {
        None => Tuned::Value(0.0),
        Some(NumOrWord::Num(x)) => {
            if !(x.is_finite() && *x >= 0.0) {
                errors.push(format!("{field} = {x} must be finite and nonnegative"));
            }
            Tuned::Value(*x)
        }
        Some(NumOrWord::Word(w)) => match w.as_str() {
            "lemma" => Tuned::Lemma,
            "sim" => Tuned::Simulation,
            other => {
                errors.push(format!("{field} = \"{other}\" is not a number, \"lemma\" or \"sim\""));
                Tuned::Value(0.0)
            }
        },
    }
}

fn vector(
    field: &str,
    v: &VecSpec,
    p: usize,
    sigma_star_sq: f64,
    errors: &mut Vec<String>,
) -> Option<DVector<f64>> {
    match v {
        VecSpec::Scalar(x) => Some(DVector::from_element(p, *x)),
        VecSpec::Array(a) if a.len() == p => Some(DVector::from_column_slice(a)),
        VecSpec::Array(a) => {
            errors.push(format!("{field} has length {} but p = {p}", a.len()));
            None
        }
        VecSpec::Word(w) if w == "sigma_star_sq" && field.ends_with("d_hat") => {
            Some(DVector::from_element(p, sigma_star_sq))
        }
        VecSpec::Word(w) => {
            errors.push(format!("{field} = \"{w}\" is not understood"));
            None
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0);
            EivError::Parse {
                line,
                msg: e.message().to_string(),
            }
        })?;
        let mut errors = Vec::new();
        let s = &raw.sim;
        let count = |v: i64| usize::try_from(v).unwrap_or(0);
        let (n, p, r) = (count(s.n), count(s.p), count(s.r));
        let mut theta_star = s.theta_star.clone();
        if theta_star.len() < p {
            theta_star.resize(p, 0.0);
        }
        let sim = SimConfig {
            n,
            p,
            r,
            rho: s.rho,
            sigma: s.sigma,
            sigma_star_sq: s.sigma_star_sq,
            theta_star,
            eps: s.eps,
            master_seed: s.master_seed,
        };
        errors.extend(sim.problems());

        let mut noise = if errors.is_empty() {
            simulation_noise(&sim)?
        } else {
            NoiseConstants::with_defaults(s.sigma.max(0.0), s.sigma_star_sq.max(0.0).sqrt())
        };
        let nz = &raw.noise;
        for (target, v) in [
            (&mut noise.gamma0, nz.gamma0),
            (&mut noise.t0, nz.t0),
            (&mut noise.gamma2, nz.gamma2),
            (&mut noise.t2, nz.t2),
            (&mut noise.delta_bar, nz.delta_bar),
            (&mut noise.b_eps, nz.b_eps),
        ] {
            if let Some(v) = v {
                *target = v;
            }
        }
        if let Err(e) = noise.validate() {
            errors.push(format!("noise: {e}"));
        }

        let defaults = SolverOptions::default();
        let solver = SolverOptions {
            eps_feas: raw.solver.eps_feas.unwrap_or(defaults.eps_feas),
            eps_opt: raw.solver.eps_opt.unwrap_or(defaults.eps_opt),
            max_iterations: raw
                .solver
                .max_iterations
                .map_or(defaults.max_iterations, count),
            verbose: raw.solver.verbose.unwrap_or(false),
        };
        if let Err(e) = solver.validate() {
            errors.push(format!("solver: {e}"));
        }

        let mut keyed: Vec<(i64, &String, &RawEstimator)> = Vec::new();
        for (key, est) in &raw.estimators {
            match key.parse::<i64>() {
                Ok(k) => keyed.push((k, key, est)),
                Err(_) => errors.push(format!("estimators.{key}: section keys must be integers")),
            }
        }
        keyed.sort_by_key(|(k, _, _)| *k);
        if keyed.is_empty() {
            errors.push("no [estimators.N] sections".to_string());
        }

        let mut estimators = Vec::new();
        for (_, key, e) in keyed {
            let f = |name: &str| format!("estimators.{key}.{name}");
            let tag = match e.kind.parse::<EstimatorTag>() {
                Ok(t) => t,
                Err(err) => {
                    errors.push(format!("{}: {err}", f("kind")));
                    continue;
                }
            };
            let kind = match EstimatorKind::new(tag, e.safeguards) {
                Ok(k) => k,
                Err(err) => {
                    errors.push(format!("{}: {err}", f("safeguards")));
                    continue;
                }
            };
            let design_source = match e.design.as_deref() {
                None | Some("z") => DesignSource::UseZ,
                Some("x") => DesignSource::UseX,
                Some(other) => {
                    errors.push(format!("{} = \"{other}\" must be \"x\" or \"z\"", f("design")));
                    DesignSource::UseZ
                }
            };
            let mu = tuned(&f("mu"), &e.mu, &mut errors);
            let tau = tuned(&f("tau"), &e.tau, &mut errors);
            let beta = tuned(&f("beta"), &e.beta, &mut errors);
            let d_hat = e
                .d_hat
                .as_ref()
                .and_then(|v| vector(&f("d_hat"), v, p, s.sigma_star_sq, &mut errors));
            let theta_set = match (&e.theta_lower, &e.theta_upper) {
                (None, None) => ThetaSet::All,
                (lo, hi) => {
                    let inf = VecSpec::Scalar(f64::INFINITY);
                    let ninf = VecSpec::Scalar(f64::NEG_INFINITY);
                    let lo = vector(&f("theta_lower"), lo.as_ref().unwrap_or(&ninf), p, 0.0, &mut errors);
                    let hi = vector(&f("theta_upper"), hi.as_ref().unwrap_or(&inf), p, 0.0, &mut errors);
                    match (lo, hi) {
                        (Some(lo), Some(hi)) => ThetaSet::boxed(lo, hi).unwrap_or_else(|err| {
                            errors.push(format!("{}: {err}", f("theta_lower")));
                            ThetaSet::All
                        }),
                        _ => ThetaSet::All,
                    }
                }
            };
            let value = |t: Tuned| if let Tuned::Value(v) = t { v } else { 0.0 };
            let spec = EstimatorSpec {
                kind,
                lambda: e.lambda,
                nu: e.nu,
                mu: value(mu),
                tau: value(tau),
                beta: value(beta),
                delta_bar: e.delta_bar.unwrap_or(noise.delta_bar),
                d_hat,
                theta_set,
                design_source,
            };
            // Placeholder tunings of 1 let `EstimatorSpec::validate` see which terms are active.
            let probe = EstimatorSpec {
                mu: if matches!(mu, Tuned::Value(_)) { spec.mu } else { 1.0 },
                ..spec.clone()
            };
            if p > 0 {
                if let Err(err) = probe.validate(p) {
                    errors.push(format!("estimators.{key}: {err}"));
                }
            }
            let label = e.label.clone().unwrap_or_else(|| format!("{tag}"));
            estimators.push(EstimatorPlan {
                label,
                spec,
                mu,
                tau,
                beta,
            });
        }

        if errors.is_empty() {
            Ok(Self {
                sim,
                noise,
                solver,
                estimators,
            })
        } else {
            Err(EivError::Config(errors))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Deterministic text rendering of the parsed configuration, for hashing.
    pub fn canonical(&self) -> String {
        #[derive(Serialize)]
        struct Canon<'a> {
            sim: &'a SimConfig,
            noise: &'a NoiseConstants,
            solver: (f64, f64, usize),
            estimators: Vec<CanonEst>,
        }
        #[derive(Serialize)]
        struct CanonEst {
            label: String,
            kind: String,
            safeguards: bool,
            lambda: f64,
            nu: f64,
            mu: Tuned,
            tau: Tuned,
            beta: Tuned,
            delta_bar: f64,
            d_hat: Option<Vec<f64>>,
            theta_set: Option<(Vec<String>, Vec<String>)>,
            design: DesignSource,
        }
        let fmt = |v: &DVector<f64>| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>();
        let canon = Canon {
            sim: &self.sim,
            noise: &self.noise,
            solver: (self.solver.eps_feas, self.solver.eps_opt, self.solver.max_iterations),
            estimators: self
                .estimators
                .iter()
                .map(|e| CanonEst {
                    label: e.label.clone(),
                    kind: e.spec.kind.tag.to_string(),
                    safeguards: e.spec.kind.safeguards,
                    lambda: e.spec.lambda,
                    nu: e.spec.nu,
                    mu: e.mu,
                    tau: e.tau,
                    beta: e.beta,
                    delta_bar: e.spec.delta_bar,
                    d_hat: e.spec.d_hat.as_ref().map(|d| d.iter().copied().collect()),
                    theta_set: match &e.spec.theta_set {
                        ThetaSet::All => None,
                        ThetaSet::Box { lower, upper } => Some((fmt(lower), fmt(upper))),
                    },
                    design: e.spec.design_source,
                })
                .collect(),
        };
        toml::to_string(&canon).expect("canonical config serializes")
    }
}

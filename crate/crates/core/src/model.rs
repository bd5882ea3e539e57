//! Domain types shared by the estimators, the solver and the simulation code.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EivError, Result};

/// Observed response `y`, noisy design `Z`, and (in simulations) the true design and coefficients.
///
/// Construction validates shapes and finiteness; the dataset is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct EivDataset {
    y: DVector<f64>,
    z: DMatrix<f64>,
    x: Option<DMatrix<f64>>,
    theta_star: Option<DVector<f64>>,
}

impl EivDataset {
    pub fn new(
        y: DVector<f64>,
        z: DMatrix<f64>,
        x: Option<DMatrix<f64>>,
        theta_star: Option<DVector<f64>>,
    ) -> Result<Self> {
        validate_dataset(Self {
            y,
            z,
            x,
            theta_star,
        })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn x(&self) -> Option<&DMatrix<f64>> {
        self.x.as_ref()
    }

    pub fn theta_star(&self) -> Option<&DVector<f64>> {
        self.theta_star.as_ref()
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    /// Replaces the true design; used when a sibling `X` file is loaded after the main CSV.
    pub fn with_design(self, x: DMatrix<f64>) -> Result<Self> {
        Self::new(self.y, self.z, Some(x), self.theta_star)
    }
}

/// Checks every dataset invariant and hands the dataset back untouched.
pub fn validate_dataset(d: EivDataset) -> Result<EivDataset> {
    let (n, p) = d.z.shape();
    if n == 0 {
        return Err(EivError::Empty("Z has no rows"));
    }
    if p == 0 {
        return Err(EivError::Empty("Z has no columns"));
    }
    if d.y.len() != n {
        return Err(EivError::DimensionMismatch {
            field: "y",
            expected: format!("length {n} (rows of Z)"),
            found: format!("length {}", d.y.len()),
        });
    }
    if let Some(x) = &d.x {
        if x.shape() != (n, p) {
            return Err(EivError::DimensionMismatch {
                field: "X",
                expected: format!("{n}x{p}"),
                found: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
    }
    if let Some(t) = &d.theta_star {
        if t.len() != p {
            return Err(EivError::DimensionMismatch {
                field: "theta_star",
                expected: format!("length {p}"),
                found: format!("length {}", t.len()),
            });
        }
    }
    check_finite_vec("y", &d.y)?;
    check_finite_mat("Z", &d.z)?;
    if let Some(x) = &d.x {
        check_finite_mat("X", x)?;
    }
    if let Some(t) = &d.theta_star {
        check_finite_vec("theta_star", t)?;
    }
    Ok(d)
}

pub(crate) fn check_finite_vec(field: &'static str, v: &DVector<f64>) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(row) => Err(EivError::NonFinite { field, row, col: 0 }),
        None => Ok(()),
    }
}

pub(crate) fn check_finite_mat(field: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(EivError::NonFinite {
                    field,
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(())
}

/// The convex set `Θ` the coefficients are constrained to.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ThetaSet {
    #[default]
    All,
    /// Axis-aligned box; infinite entries leave a side open.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl ThetaSet {
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(EivError::DimensionMismatch {
                field: "theta_set.upper",
                expected: format!("length {}", lower.len()),
                found: format!("length {}", upper.len()),
            });
        }
        for j in 0..lower.len() {
            let (lo, hi) = (lower[j], upper[j]);
            if lo.is_nan() || hi.is_nan() {
                return Err(EivError::NonFinite {
                    field: "theta_set",
                    row: j,
                    col: 0,
                });
            }
            if lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(EivError::Domain(format!(
                    "empty box: lower[{j}] = {lo} > upper[{j}] = {hi}"
                )));
            }
        }
        Ok(ThetaSet::Box { lower, upper })
    }

    pub fn check_dim(&self, p: usize) -> Result<()> {
        match self {
            ThetaSet::All => Ok(()),
            ThetaSet::Box { lower, .. } if lower.len() == p => Ok(()),
            ThetaSet::Box { lower, .. } => Err(EivError::DimensionMismatch {
                field: "theta_set",
                expected: format!("length {p}"),
                found: format!("length {}", lower.len()),
            }),
        }
    }

    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        self.violation(theta) <= tol
    }

    /// Largest amount by which `theta` leaves the set.
    pub fn violation(&self, theta: &DVector<f64>) -> f64 {
        match self {
            ThetaSet::All => 0.0,
            ThetaSet::Box { lower, upper } => theta
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
                .fold(0.0, f64::max),
        }
    }

    pub fn project(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            ThetaSet::All => theta.clone(),
            ThetaSet::Box { lower, upper } => DVector::from_iterator(
                theta.len(),
                theta
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(&v, (&lo, &hi))| v.clamp(lo, hi)),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIterations => "max_iterations",
            SolveStatus::NumericalFailure => "numerical_failure",
        })
    }
}

/// Result of one solve. `w_hat` is the ℓ1 surrogate `Σ(θ⁺ + θ⁻)` of the split formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta_hat: DVector<f64>,
    pub t_hat: f64,
    pub u_hat: f64,
    pub w_hat: f64,
    pub objective: f64,
    pub status: SolveStatus,
    pub feasibility_residual: f64,
    pub optimality_gap: f64,
    pub iterations: usize,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    Dantzig,
    Mu,
    CompensatedMu,
    Conic,
    L1l2linfMu,
    L1l2linfCmu,
}

impl EstimatorTag {
    pub const ALL: [EstimatorTag; 6] = [
        EstimatorTag::Dantzig,
        EstimatorTag::Mu,
        EstimatorTag::CompensatedMu,
        EstimatorTag::Conic,
        EstimatorTag::L1l2linfMu,
        EstimatorTag::L1l2linfCmu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::Dantzig => "dantzig",
            EstimatorTag::Mu => "mu",
            EstimatorTag::CompensatedMu => "compensated_mu",
            EstimatorTag::Conic => "conic",
            EstimatorTag::L1l2linfMu => "l1l2linf_mu",
            EstimatorTag::L1l2linfCmu => "l1l2linf_cmu",
        }
    }

    /// Whether the program carries auxiliary `t` (and possibly `u`) variables.
    pub fn has_auxiliary(self) -> bool {
        matches!(
            self,
            EstimatorTag::Conic | EstimatorTag::L1l2linfMu | EstimatorTag::L1l2linfCmu
        )
    }
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorTag {
    type Err = EivError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let tag = match norm.as_str() {
            "dantzig" => EstimatorTag::Dantzig,
            "mu" => EstimatorTag::Mu,
            "compensated_mu" | "cmu" => EstimatorTag::CompensatedMu,
            "conic" => EstimatorTag::Conic,
            "l1l2linf_mu" => EstimatorTag::L1l2linfMu,
            "l1l2linf_cmu" => EstimatorTag::L1l2linfCmu,
            _ => {
                return Err(EivError::Domain(format!("unknown estimator `{s}`")));
            }
        };
        Ok(tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EstimatorKind {
    pub tag: EstimatorTag,
    pub safeguards: bool,
}

impl EstimatorKind {
    pub fn new(tag: EstimatorTag, safeguards: bool) -> Result<Self> {
        if safeguards && !tag.has_auxiliary() {
            return Err(EivError::InconsistentSpec(format!(
                "safeguards need auxiliary (t, u) variables, which `{tag}` does not have"
            )));
        }
        Ok(Self { tag, safeguards })
    }

    pub fn plain(tag: EstimatorTag) -> Self {
        Self {
            tag,
            safeguards: false,
        }
    }
}

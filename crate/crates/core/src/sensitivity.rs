//! Exact ℓq-sensitivities by enumeration, for small dimensions.
//!
//! ```text
//! κ_q(s, u) = min_{|J| ≤ s}  min_{Δ ∈ C_J(u), |Δ|_q = 1}  |ΨΔ|∞
//! C_J(u)    = {Δ : |Δ_{Jᶜ}|₁ ≤ u |Δ_J|₁}
//! ```
//!
//! Cones grow with `J`, so only supports of size exactly `s` are enumerated. Each support
//! and orthant gives a linear program in `v = σ∘Δ ≥ 0`, solved with the interior point solver.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EivError, Result};
use crate::solver::ipm::{dual_lower_bound, solve_cone, ConeProblem, Outcome};
use crate::solver::ConeDims;

/// Largest `p` accepted by [`kappa_bruteforce`].
pub const MAX_DIMENSION: usize = 12;

const LP_TOL: f64 = 1e-9;
const LP_MAX_ITER: usize = 200;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QNorm {
    One,
    Infinity,
}

impl QNorm {
    pub fn norm(self, v: &DVector<f64>) -> f64 {
        match self {
            QNorm::One => v.lp_norm(1),
            QNorm::Infinity => v.amax(),
        }
    }
}

impl std::str::FromStr for QNorm {
    type Err = EivError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "one" => Ok(QNorm::One),
            "inf" | "infinity" => Ok(QNorm::Infinity),
            other => Err(EivError::Domain(format!("q must be 1 or inf, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityQuery {
    pub psi: DMatrix<f64>,
    pub s: usize,
    pub u: f64,
    pub q: QNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub kappa: f64,
    pub witness_delta: DVector<f64>,
    /// Zero-based and sorted.
    pub witness_j: Vec<usize>,
}

impl SensitivityQuery {
    pub fn new(psi: DMatrix<f64>, s: usize, u: f64, q: QNorm) -> Self {
        Self { psi, s, u, q }
    }

    pub fn p(&self) -> usize {
        self.psi.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.psi.ncols();
        if self.psi.nrows() != p {
            return Err(EivError::DimensionMismatch {
                field: "psi",
                expected: "a square matrix".into(),
                found: format!("{}x{}", self.psi.nrows(), p),
            });
        }
        if p == 0 {
            return Err(EivError::Empty("psi has no columns"));
        }
        crate::model::check_finite_mat("psi", &self.psi)?;
        for i in 0..p {
            for j in 0..i {
                let diff = (self.psi[(i, j)] - self.psi[(j, i)]).abs();
                if diff > SYMMETRY_TOL {
                    return Err(EivError::NotSymmetric { row: i, col: j, diff });
                }
            }
        }
        if self.s == 0 || self.s > p {
            return Err(EivError::Domain(format!("s = {} must lie in [1, {p}]", self.s)));
        }
        if !(self.u.is_finite() && self.u > 0.0) {
            return Err(EivError::Domain(format!("u = {} must be positive and finite", self.u)));
        }
        Ok(())
    }
}

/// `|Δ_{Jᶜ}|₁ ≤ u|Δ_J|₁ + 1e−12 |Δ|₁`.
pub fn cone_membership(delta: &DVector<f64>, j: &[usize], u: f64) -> Result<bool> {
    let p = delta.len();
    let mut in_j = vec![false; p];
    for &k in j {
        if k >= p {
            return Err(EivError::IndexOutOfRange { index: k, dim: p });
        }
        in_j[k] = true;
    }
    let (on, off) = split_mass(delta, &in_j);
    Ok(off <= u * on + 1e-12 * (on + off))
}

fn split_mass(delta: &DVector<f64>, in_j: &[bool]) -> (f64, f64) {
    let (mut on, mut off) = (0.0, 0.0);
    for (k, v) in delta.iter().enumerate() {
        if in_j[k] {
            on += v.abs();
        } else {
            off += v.abs();
        }
    }
    (on, off)
}

struct Cell {
    support: Vec<usize>,
    signs: Vec<f64>,
    anchor: Option<usize>,
}

/// Builds the program for one cell. Variables are `(v, z)`; rows are the signs of `v`, the
/// sign of `z`, the two-sided bound on `ΨΔ`, the cone row and, for `q = ∞`, `v ≤ 1`.
fn cell_program(psi: &DMatrix<f64>, u: f64, cell: &Cell) -> ConeProblem {
    let p = psi.ncols();
    let nv = p + 1;
    let cap_rows = if cell.anchor.is_some() { p } else { 0 };
    let m = p + 1 + 2 * p + 1 + cap_rows;
    let mut g = DMatrix::zeros(m, nv);
    let mut h = DVector::zeros(m);
    for j in 0..=p {
        g[(j, j)] = -1.0;
    }
    let base = p + 1;
    for k in 0..p {
        for j in 0..p {
            let a = psi[(k, j)] * cell.signs[j];
            g[(base + 2 * k, j)] = a;
            g[(base + 2 * k + 1, j)] = -a;
        }
        g[(base + 2 * k, p)] = -1.0;
        g[(base + 2 * k + 1, p)] = -1.0;
    }
    let cone_row = base + 2 * p;
    let mut in_j = vec![false; p];
    for &k in &cell.support {
        in_j[k] = true;
    }
    for j in 0..p {
        g[(cone_row, j)] = if in_j[j] { -u } else { 1.0 };
    }
    let mut a = DMatrix::zeros(1, nv);
    match cell.anchor {
        None => {
            for j in 0..p {
                a[(0, j)] = 1.0;
            }
        }
        Some(j0) => {
            a[(0, j0)] = 1.0;
            for j in 0..p {
                g[(cone_row + 1 + j, j)] = 1.0;
                h[cone_row + 1 + j] = 1.0;
            }
        }
    }
    let mut c = DVector::zeros(nv);
    c[p] = 1.0;
    ConeProblem {
        c,
        g,
        h,
        a,
        b: DVector::from_element(1, 1.0),
        dims: ConeDims { nonneg: m, soc: vec![] },
    }
}

fn primal_residual(cp: &ConeProblem, x: &DVector<f64>) -> f64 {
    let slack = &cp.h - &cp.g * x;
    let cone = slack.iter().fold(0.0f64, |acc, &s| acc.max(-s));
    let eq = (&cp.a * x - &cp.b).amax();
    cone.max(eq)
}

/// Solves one cell; `None` when the cell is empty.
fn solve_cell(psi: &DMatrix<f64>, u: f64, cell: &Cell) -> Result<Option<DVector<f64>>> {
    let p = psi.ncols();
    let cp = cell_program(psi, u, cell);
    // At an optimum `|v|∞ ≤ 1`, so `z ≤ |Ψ|₁-norm of a row` bounds the objective variable.
    let z_cap = psi.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max) + 1.0;
    let mut upper = vec![1.0; p];
    upper.push(z_cap);
    let var_rows: Vec<usize> = (0..=p).collect();
    let res = solve_cone(&cp, LP_MAX_ITER, |x, y, z| {
        let objective = x[p];
        let lower = dual_lower_bound(&cp, y, z, &var_rows, &upper);
        primal_residual(&cp, x) <= LP_TOL && objective - lower <= LP_TOL
    });
    match res.outcome {
        Outcome::Certified => Ok(Some(res.x.rows(0, p).into_owned())),
        Outcome::PrimalInfeasible => Ok(None),
        other => Err(EivError::Domain(format!(
            "sensitivity program for support {:?} did not converge ({other:?})",
            cell.support
        ))),
    }
}

/// Maps a near-feasible `v` to an exactly feasible `Δ = σ∘v` in the cone with `|Δ|_q = 1`.
fn polish(v: &DVector<f64>, cell: &Cell, u: f64, q: QNorm) -> DVector<f64> {
    let p = v.len();
    let mut in_j = vec![false; p];
    for &k in &cell.support {
        in_j[k] = true;
    }
    let mut d = DVector::from_fn(p, |j, _| v[j].max(0.0) * cell.signs[j]);
    let (on, off) = split_mass(&d, &in_j);
    if off > u * on {
        let f = if off > 0.0 { u * on / off } else { 0.0 };
        for j in 0..p {
            if !in_j[j] {
                d[j] *= f;
            }
        }
    }
    let nrm = q.norm(&d);
    if nrm > 0.0 {
        d / nrm
    } else {
        let mut e = DVector::zeros(p);
        e[cell.support[0]] = 1.0;
        e
    }
}

/// `κ_q(s, u)` by enumeration of supports, orthants and (for `q = ∞`) anchors.
pub fn kappa_bruteforce(qry: &SensitivityQuery) -> Result<SensitivityResult> {
    qry.validate()?;
    let p = qry.p();
    if p > MAX_DIMENSION {
        return Err(EivError::DimensionCap { p, cap: MAX_DIMENSION });
    }
    let scale = qry.psi.amax();
    if scale == 0.0 {
        let witness_j: Vec<usize> = (0..qry.s).collect();
        let mut d = DVector::zeros(p);
        d[0] = 1.0;
        return Ok(SensitivityResult {
            kappa: 0.0,
            witness_delta: d,
            witness_j,
        });
    }
    let psi = &qry.psi / scale;

    // Δ and −Δ give the same value, so the first sign is fixed.
    let supports: Vec<Vec<usize>> = (0..p).combinations(qry.s).collect();
    let anchors: Vec<Option<usize>> = match qry.q {
        QNorm::One => vec![None],
        QNorm::Infinity => (0..p).map(Some).collect(),
    };
    let n_signs = 1usize << (p - 1);
    let n_cells = supports.len() * n_signs * anchors.len();

    let best = (0..n_cells)
        .into_par_iter()
        .map(|idx| -> Result<Option<(f64, usize, DVector<f64>)>> {
            let a = idx % anchors.len();
            let rest = idx / anchors.len();
            let mask = rest % n_signs;
            let support = supports[rest / n_signs].clone();
            let signs = (0..p)
                .map(|j| if j > 0 && (mask >> (j - 1)) & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            let cell = Cell {
                support,
                signs,
                anchor: anchors[a],
            };
            let Some(v) = solve_cell(&psi, qry.u, &cell)? else {
                return Ok(None);
            };
            let d = polish(&v, &cell, qry.u, qry.q);
            let val = (&psi * &d).amax();
            Ok(Some((val, idx, d)))
        })
        .try_fold(
            || None,
            |acc: Option<(f64, usize, DVector<f64>)>, item| item.map(|it| better(acc, it)),
        )
        .try_reduce(|| None, |a, b| Ok(better(a, b)))?;

    let (_, idx, d) = best.ok_or_else(|| EivError::Domain("every sensitivity cell was empty".into()))?;
    let support = supports[idx / anchors.len() / n_signs].clone();
    Ok(SensitivityResult {
        kappa: (&qry.psi * &d).amax(),
        witness_delta: d,
        witness_j: support,
    })
}

/// Smaller value first, then smaller cell index, so the result does not depend on scheduling.
fn better(
    a: Option<(f64, usize, DVector<f64>)>,
    b: Option<(f64, usize, DVector<f64>)>,
) -> Option<(f64, usize, DVector<f64>)> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if (b.0, b.1) < (a.0, a.1) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

/// Whether `κ_q(s, u) ≥ c s^{−1/q}`, with `s^{−1/∞} = 1`.
pub fn check_kappa_condition(qry: &SensitivityQuery, c: f64) -> Result<bool> {
    if !(c.is_finite() && c > 0.0) {
        return Err(EivError::Domain(format!("c = {c} must be positive and finite")));
    }
    let res = kappa_bruteforce(qry)?;
    let threshold = match qry.q {
        QNorm::One => c / qry.s as f64,
        QNorm::Infinity => c,
    };
    Ok(res.kappa >= threshold)
}

//! The generalized selector program and its certified solver.
//!
//! Every estimator in the crate is an instance of
//!
//! ```text
//! minimize    w + λ t + ν u
//! subject to  |r − A θ|∞ ≤ μ_t t + μ_u u + μ₁ w + τ
//!             |θ|₂ ≤ t            (t-cone)
//!             |θ|∞ ≤ u            (u-cone)
//!             t ≤ w,  u ≤ w       (safeguards)
//!             θ ∈ Θ
//! ```
//!
//! with `θ = θ⁺ − θ⁻`, `θ⁺, θ⁻ ≥ 0` and `w = Σ(θ⁺ + θ⁻)`.

mod cone;
pub(crate) mod ipm;

use std::fmt::Write as _;
use std::path::Path;

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::error::{EivError, Result};
use crate::model::{SolveStatus, Solution, ThetaSet};

pub(crate) use cone::ConeDims;
use ipm::{ConeProblem, Outcome};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorProgram {
    pub a: DMatrix<f64>,
    pub r: DVector<f64>,
    pub mu_t: f64,
    pub mu_u: f64,
    pub mu_1: f64,
    pub tau: f64,
    pub lambda: f64,
    pub nu: f64,
    pub theta_set: ThetaSet,
    pub use_t_cone: bool,
    pub use_u_cone: bool,
    pub safeguards: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub eps_feas: f64,
    pub eps_opt: f64,
    pub max_iterations: usize,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps_feas: 1e-7,
            eps_opt: 1e-7,
            max_iterations: 50_000,
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_feas > 0.0 && self.eps_feas.is_finite()) {
            return Err(EivError::Domain(format!("eps_feas = {} must be positive", self.eps_feas)));
        }
        if !(self.eps_opt > 0.0 && self.eps_opt.is_finite()) {
            return Err(EivError::Domain(format!("eps_opt = {} must be positive", self.eps_opt)));
        }
        if self.max_iterations == 0 {
            return Err(EivError::Domain("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

impl SelectorProgram {
    /// Program with only the constant slack `τ`: `min |θ|₁ s.t. |r − Aθ|∞ ≤ τ`.
    pub fn dantzig(a: DMatrix<f64>, r: DVector<f64>, tau: f64) -> Self {
        Self {
            a,
            r,
            mu_t: 0.0,
            mu_u: 0.0,
            mu_1: 0.0,
            tau,
            lambda: 0.0,
            nu: 0.0,
            theta_set: ThetaSet::All,
            use_t_cone: false,
            use_u_cone: false,
            safeguards: false,
        }
    }

    pub fn p(&self) -> usize {
        self.r.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.r.len();
        if p == 0 {
            return Err(EivError::Empty("program has no coefficients"));
        }
        if self.a.shape() != (p, p) {
            return Err(EivError::DimensionMismatch {
                field: "A",
                expected: format!("{p}x{p}"),
                found: format!("{}x{}", self.a.nrows(), self.a.ncols()),
            });
        }
        self.theta_set.check_dim(p)?;
        crate::model::check_finite_mat("A", &self.a)?;
        crate::model::check_finite_vec("r", &self.r)?;
        let coefs = [
            ("mu_t", self.mu_t),
            ("mu_u", self.mu_u),
            ("mu_1", self.mu_1),
            ("tau", self.tau),
            ("lambda", self.lambda),
            ("nu", self.nu),
        ];
        for (name, v) in coefs {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EivError::InvalidProgram(format!(
                    "`{name}` = {v} must be finite and nonnegative"
                )));
            }
        }
        if self.lambda > 0.0 && !self.use_t_cone {
            return Err(EivError::InvalidProgram("lambda > 0 requires the t-cone".into()));
        }
        if self.nu > 0.0 && !self.use_u_cone {
            return Err(EivError::InvalidProgram("nu > 0 requires the u-cone".into()));
        }
        if self.mu_t > 0.0 && !self.use_t_cone {
            return Err(EivError::InvalidProgram("mu_t > 0 requires the t-cone".into()));
        }
        if self.mu_u > 0.0 && !self.use_u_cone {
            return Err(EivError::InvalidProgram("mu_u > 0 requires the u-cone".into()));
        }
        if self.mu_1 > 0.0 && (self.lambda > 0.0 || self.nu > 0.0) {
            return Err(EivError::InvalidProgram(
                "mu_1 > 0 is only allowed with lambda = nu = 0".into(),
            ));
        }
        if self.safeguards && !(self.use_t_cone || self.use_u_cone) {
            return Err(EivError::InvalidProgram(
                "safeguards need at least one auxiliary variable".into(),
            ));
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let p = self.p();
        let t = self.use_t_cone.then_some(2 * p);
        let u = self.use_u_cone.then_some(2 * p + usize::from(self.use_t_cone));
        Layout {
            p,
            t,
            u,
            n: 2 * p + usize::from(self.use_t_cone) + usize::from(self.use_u_cone),
        }
    }

    /// Objective `w + λt + νu` at a point of the split formulation.
    pub fn objective(&self, t: f64, u: f64, w: f64) -> f64 {
        let mut f = w;
        if self.use_t_cone {
            f += self.lambda * t;
        }
        if self.use_u_cone {
            f += self.nu * u;
        }
        f
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    p: usize,
    t: Option<usize>,
    u: Option<usize>,
    n: usize,
}

impl Layout {
    fn theta(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.p, |j, _| x[j].max(0.0) - x[self.p + j].max(0.0))
    }

    fn w(&self, x: &DVector<f64>) -> f64 {
        (0..2 * self.p).map(|j| x[j].max(0.0)).sum()
    }
}

/// Dense conic form of a selector program. Rows: variable signs, residual pairs,
/// u-cone pairs, safeguards, box sides, then the `(t, θ)` second-order block.
fn to_cone(prog: &SelectorProgram) -> (ConeProblem, Layout) {
    let lay = prog.layout();
    let p = lay.p;
    let n = lay.n;
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();

    for j in 0..n {
        rows.push((vec![(j, -1.0)], 0.0));
    }

    // ±(Aθ)_k − μ_t t − μ_u u − μ₁ w ≤ τ ± r_k
    for sign in [-1.0, 1.0] {
        for k in 0..p {
            let mut row = Vec::with_capacity(2 * p + 2);
            for j in 0..p {
                let a = sign * prog.a[(k, j)];
                row.push((j, a - prog.mu_1));
                row.push((p + j, -a - prog.mu_1));
            }
            if let Some(ti) = lay.t {
                row.push((ti, -prog.mu_t));
            }
            if let Some(ui) = lay.u {
                row.push((ui, -prog.mu_u));
            }
            rows.push((row, prog.tau + sign * prog.r[k]));
        }
    }

    if let Some(ui) = lay.u {
        for sign in [1.0, -1.0] {
            for j in 0..p {
                rows.push((vec![(j, sign), (p + j, -sign), (ui, -1.0)], 0.0));
            }
        }
    }

    if prog.safeguards {
        for aux in [lay.t, lay.u].into_iter().flatten() {
            let mut row: Vec<(usize, f64)> = (0..2 * p).map(|j| (j, -1.0)).collect();
            row.push((aux, 1.0));
            rows.push((row, 0.0));
        }
    }

    if let ThetaSet::Box { lower, upper } = &prog.theta_set {
        for j in 0..p {
            if upper[j].is_finite() {
                rows.push((vec![(j, 1.0), (p + j, -1.0)], upper[j]));
            }
            if lower[j].is_finite() {
                rows.push((vec![(j, -1.0), (p + j, 1.0)], -lower[j]));
            }
        }
    }

    let nonneg = rows.len();
    let mut soc = Vec::new();
    if let Some(ti) = lay.t {
        rows.push((vec![(ti, -1.0)], 0.0));
        for j in 0..p {
            rows.push((vec![(j, -1.0), (p + j, 1.0)], 0.0));
        }
        soc.push(p + 1);
    }

    let m = rows.len();
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    for (i, (row, rhs)) in rows.into_iter().enumerate() {
        for (j, v) in row {
            g[(i, j)] += v;
        }
        h[i] = rhs;
    }

    let mut c = DVector::from_element(n, 1.0);
    if let Some(ti) = lay.t {
        c[ti] = prog.lambda;
    }
    if let Some(ui) = lay.u {
        c[ui] = prog.nu;
    }

    (
        ConeProblem {
            c,
            g,
            h,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            dims: ConeDims { nonneg, soc },
        },
        lay,
    )
}

/// Largest constraint violation at `(θ, t, u)` with the ℓ1 term evaluated as `|θ|₁`.
pub fn feasibility_residual(prog: &SelectorProgram, theta: &DVector<f64>, t: f64, u: f64) -> f64 {
    let w = theta.lp_norm(1);
    split_feasibility_residual(prog, theta, t, u, w)
}

/// Largest constraint violation at a point `(θ, t, u, w)` of the split formulation.
///
/// `w < |θ|₁` counts as a violation of the decomposition itself.
pub fn split_feasibility_residual(
    prog: &SelectorProgram,
    theta: &DVector<f64>,
    t: f64,
    u: f64,
    w: f64,
) -> f64 {
    let p = prog.p();
    assert_eq!(theta.len(), p, "theta has length {} but the program has p = {p}", theta.len());
    let mut viol: f64 = 0.0;
    viol = viol.max(theta.lp_norm(1) - w);

    let mut rhs = prog.tau + prog.mu_1 * w;
    if prog.use_t_cone {
        rhs += prog.mu_t * t;
        viol = viol.max(theta.norm() - t).max(-t);
    }
    if prog.use_u_cone {
        rhs += prog.mu_u * u;
        viol = viol.max(theta.amax() - u).max(-u);
    }
    let resid = &prog.r - &prog.a * theta;
    viol = viol.max(resid.amax() - rhs);

    if prog.safeguards {
        if prog.use_t_cone {
            viol = viol.max(t - w);
        }
        if prog.use_u_cone {
            viol = viol.max(u - w);
        }
    }
    viol = viol.max(prog.theta_set.violation(theta));
    viol.max(0.0)
}

struct Candidate {
    theta: DVector<f64>,
    t: f64,
    u: f64,
    w: f64,
    objective: f64,
    residual: f64,
    gap: f64,
}

fn evaluate(
    prog: &SelectorProgram,
    cp: &ConeProblem,
    lay: &Layout,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> Candidate {
    let theta = lay.theta(x);
    let w = lay.w(x);
    let t = lay.t.map_or(0.0, |i| x[i].max(0.0));
    let u = lay.u.map_or(0.0, |i| x[i].max(0.0));
    let objective = prog.objective(t, u, w);
    let residual = split_feasibility_residual(prog, &theta, t, u, w);

    let var_rows: Vec<usize> = (0..lay.n).collect();
    let bound_val = objective.abs() + 1.0;
    let upper: Vec<f64> = cp
        .c
        .iter()
        .map(|&cj| if cj > 0.0 { bound_val / cj } else { f64::INFINITY })
        .collect();
    let mut upper = upper;
    // With safeguards, t ≤ w ≤ objective bounds the auxiliaries even when they are free.
    if prog.safeguards {
        for i in [lay.t, lay.u].into_iter().flatten() {
            upper[i] = upper[i].min(bound_val);
        }
    }
    let lower = ipm::dual_lower_bound(cp, y, z, &var_rows, &upper);
    let gap = (objective - lower).max(0.0);
    Candidate {
        theta,
        t,
        u,
        w,
        objective,
        residual,
        gap,
    }
}

/// Solves a selector program to certified accuracy.
pub fn solve(prog: &SelectorProgram, opts: &SolverOptions) -> Result<Solution> {
    prog.validate()?;
    opts.validate()?;
    let (cp, lay) = to_cone(prog);

    let mut last: Option<Candidate> = None;
    let res = ipm::solve_cone(&cp, opts.max_iterations, |x, y, z| {
        let cand = evaluate(prog, &cp, &lay, x, y, z);
        let ok = cand.residual <= 0.5 * opts.eps_feas && cand.gap <= 0.5 * opts.eps_opt;
        if opts.verbose {
            debug!(
                "certify: objective={:.10e} residual={:.3e} gap={:.3e}",
                cand.objective, cand.residual, cand.gap
            );
        }
        last = Some(cand);
        ok
    });

    let meets = |c: &Candidate| c.residual <= opts.eps_feas && c.gap <= opts.eps_opt;
    let status = match res.outcome {
        Outcome::Certified => SolveStatus::Optimal,
        Outcome::PrimalInfeasible => SolveStatus::Infeasible,
        Outcome::Stalled | Outcome::MaxIterations if last.as_ref().is_some_and(meets) => SolveStatus::Optimal,
        Outcome::MaxIterations => SolveStatus::MaxIterations,
        Outcome::DualInfeasible | Outcome::Stalled => SolveStatus::NumericalFailure,
    };

    let cand = match (status, last) {
        (SolveStatus::Infeasible, _) | (_, None) => evaluate(prog, &cp, &lay, &res.x, &res.y, &res.z),
        (_, Some(c)) => c,
    };
    let cand = if status == SolveStatus::Infeasible {
        let zero = DVector::zeros(lay.p);
        Candidate {
            residual: split_feasibility_residual(prog, &zero, 0.0, 0.0, 0.0),
            objective: 0.0,
            gap: f64::INFINITY,
            theta: zero,
            t: 0.0,
            u: 0.0,
            w: 0.0,
        }
    } else {
        cand
    };

    Ok(Solution {
        theta_hat: cand.theta,
        t_hat: cand.t,
        u_hat: cand.u,
        w_hat: cand.w,
        objective: cand.objective,
        status,
        feasibility_residual: cand.residual,
        optimality_gap: cand.gap,
        iterations: res.iterations,
    })
}

/// Writes the program and its solution to a sectioned text file; matrices are row-major.
pub fn write_debug_dump(prog: &SelectorProgram, sol: &Solution, path: &Path) -> Result<()> {
    std::fs::write(path, debug_dump(prog, sol))?;
    Ok(())
}

pub fn debug_dump(prog: &SelectorProgram, sol: &Solution) -> String {
    let mut out = String::new();
    let p = prog.p();
    let _ = writeln!(out, "[dimensions]\np = {p}\n");
    let _ = writeln!(out, "[A]");
    for i in 0..p {
        let row: Vec<String> = (0..p).map(|j| format!("{:.17e}", prog.a[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    let _ = writeln!(out, "\n[r]");
    let r: Vec<String> = prog.r.iter().map(|v| format!("{v:.17e}")).collect();
    let _ = writeln!(out, "{}\n", r.join(" "));
    let _ = writeln!(out, "[coefficients]");
    for (k, v) in [
        ("mu_t", prog.mu_t),
        ("mu_u", prog.mu_u),
        ("mu_1", prog.mu_1),
        ("tau", prog.tau),
        ("lambda", prog.lambda),
        ("nu", prog.nu),
    ] {
        let _ = writeln!(out, "{k} = {v:.17e}");
    }
    let _ = writeln!(out, "use_t_cone = {}", prog.use_t_cone);
    let _ = writeln!(out, "use_u_cone = {}", prog.use_u_cone);
    let _ = writeln!(out, "safeguards = {}\n", prog.safeguards);
    if let ThetaSet::Box { lower, upper } = &prog.theta_set {
        let _ = writeln!(out, "[theta_set]");
        let lo: Vec<String> = lower.iter().map(|v| format!("{v:.17e}")).collect();
        let hi: Vec<String> = upper.iter().map(|v| format!("{v:.17e}")).collect();
        let _ = writeln!(out, "lower = {}\nupper = {}\n", lo.join(" "), hi.join(" "));
    }
    let _ = writeln!(out, "[solution]");
    let _ = writeln!(out, "status = {}", sol.status);
    let th: Vec<String> = sol.theta_hat.iter().map(|v| format!("{v:.17e}")).collect();
    let _ = writeln!(out, "theta_hat = {}", th.join(" "));
    for (k, v) in [
        ("t_hat", sol.t_hat),
        ("u_hat", sol.u_hat),
        ("w_hat", sol.w_hat),
        ("objective", sol.objective),
        ("feasibility_residual", sol.feasibility_residual),
        ("optimality_gap", sol.optimality_gap),
    ] {
        let _ = writeln!(out, "{k} = {v:.17e}");
    }
    let _ = writeln!(out, "iterations = {}", sol.iterations);
    out
}

//! Independent brute-force optimum of small selector programs.
//!
//! Programs without the t-cone are linear in `(θ⁺, θ⁻)` and are solved by enumerating
//! vertices. Programs with the t-cone are reduced, for fixed `θ`, to a linear program in the
//! auxiliaries (again solved on vertices), and `θ` is found by grid and line searches; a
//! central-cut ellipsoid method over `(θ, w, t[, u])` then refines the best point found.

#![allow(dead_code)]

use eiv_core::estimators::{build_program, EstimatorSpec};
use eiv_core::model::{EivDataset, EstimatorKind, EstimatorTag, ThetaSet};
use eiv_core::solver::SelectorProgram;
use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FEAS_TOL: f64 = 1e-9;

/// Minimum of `c'x` over `{x : Gx ≤ h}` by vertex enumeration; `None` when no vertex is feasible.
pub fn lp_vertices(c: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
    let d = c.len();
    let m = g.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for rows in (0..m).combinations(d) {
        let sub = DMatrix::from_fn(d, d, |i, j| g[(rows[i], j)]);
        let rhs = DVector::from_fn(d, |i, _| h[rows[i]]);
        let lu = sub.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(x) = lu.solve(&rhs) else { continue };
        let slack = h - g * &x;
        let scale = 1.0 + x.amax();
        if slack.iter().any(|&s| s < -FEAS_TOL * scale) {
            continue;
        }
        let val = c.dot(&x);
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, x));
        }
    }
    best
}

fn box_bounds(prog: &SelectorProgram) -> (DVector<f64>, DVector<f64>) {
    let p = prog.p();
    match &prog.theta_set {
        ThetaSet::All => (
            DVector::from_element(p, f64::NEG_INFINITY),
            DVector::from_element(p, f64::INFINITY),
        ),
        ThetaSet::Box { lower, upper } => (lower.clone(), upper.clone()),
    }
}

/// Linear programs: variables `(θ⁺, θ⁻)` with `w = Σ(θ⁺ + θ⁻)`.
fn linear_optimum(prog: &SelectorProgram) -> Option<f64> {
    let p = prog.p();
    let d = 2 * p;
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for j in 0..d {
        let mut a = DVector::zeros(d);
        a[j] = -1.0;
        rows.push((a, 0.0));
    }
    for k in 0..p {
        for sign in [1.0, -1.0] {
            // sign·((Aθ)_k − r_k) − μ₁ w ≤ τ
            let mut a = DVector::zeros(d);
            for j in 0..p {
                a[j] = sign * prog.a[(k, j)] - prog.mu_1;
                a[p + j] = -sign * prog.a[(k, j)] - prog.mu_1;
            }
            rows.push((a, prog.tau + sign * prog.r[k]));
        }
    }
    let (lo, hi) = box_bounds(prog);
    for j in 0..p {
        if hi[j].is_finite() {
            let mut a = DVector::zeros(d);
            a[j] = 1.0;
            a[p + j] = -1.0;
            rows.push((a, hi[j]));
        }
        if lo[j].is_finite() {
            let mut a = DVector::zeros(d);
            a[j] = -1.0;
            a[p + j] = 1.0;
            rows.push((a, -lo[j]));
        }
    }
    let g = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].0[j]);
    let h = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    lp_vertices(&DVector::from_element(d, 1.0), &g, &h).map(|(v, _)| v)
}

/// Best objective over the auxiliaries `(w, t[, u])` for a fixed `θ`.
pub fn inner_value(prog: &SelectorProgram, theta: &DVector<f64>) -> f64 {
    let resid = (&prog.r - &prog.a * theta).amax();
    let need = resid - prog.tau;
    let m = if prog.use_u_cone { 3 } else { 2 };
    let mut rows: Vec<(Vec<f64>, f64)> = vec![
        (vec![-1.0, 0.0, 0.0], -theta.lp_norm(1)),
        (vec![0.0, -1.0, 0.0], -theta.norm()),
        (vec![-prog.mu_1, -prog.mu_t, -prog.mu_u], -need),
    ];
    if prog.use_u_cone {
        rows.push((vec![0.0, 0.0, -1.0], -theta.amax()));
    }
    if prog.safeguards {
        rows.push((vec![-1.0, 1.0, 0.0], 0.0));
        if prog.use_u_cone {
            rows.push((vec![-1.0, 0.0, 1.0], 0.0));
        }
    }
    let g = DMatrix::from_fn(rows.len(), m, |i, j| rows[i].0[j]);
    let h = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let c = DVector::from_fn(m, |j, _| [1.0, prog.lambda, prog.nu][j]);
    lp_vertices(&c, &g, &h).map_or(f64::INFINITY, |(v, _)| v)
}

/// Minimizes a convex function of one variable on `[a, b]` by golden-section search.
fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..90 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Programs with the t-cone: a zooming grid over `θ` followed by line searches along
/// coordinate, random and recent-progress directions. The objective is convex in `θ`.
fn conic_optimum(prog: &SelectorProgram) -> Option<f64> {
    let p = prog.p();
    let (lo, hi) = box_bounds(prog);
    let start = DVector::from_fn(p, |j, _| 0.0f64.clamp(lo[j], hi[j]));
    let g0 = inner_value(prog, &start);
    if !g0.is_finite() {
        return None;
    }
    let reach = g0 + start.lp_norm(1) + 1.0;
    let lo = DVector::from_fn(p, |j, _| lo[j].max(-reach));
    let hi = DVector::from_fn(p, |j, _| hi[j].min(reach));
    let points = match p {
        1 => 401,
        2 => 61,
        _ => 21,
    };
    let mut center = start;
    let mut best = g0;
    let mut half = DVector::from_fn(p, |j, _| (hi[j] - lo[j]) / 2.0);
    let mut mid = (&lo + &hi) / 2.0;
    for _ in 0..6 {
        let spacing = &half * (2.0 / (points - 1) as f64);
        for idx in (0..p).map(|_| 0..points).multi_cartesian_product() {
            let theta = DVector::from_fn(p, |j, _| {
                (mid[j] - half[j] + spacing[j] * idx[j] as f64).clamp(lo[j], hi[j])
            });
            let v = inner_value(prog, &theta);
            if v < best {
                best = v;
                center = theta;
            }
        }
        half = spacing * 3.0;
        mid = center.clone();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut previous = center.clone();
    let mut idle = 0;
    for _ in 0..2000 {
        let mut dirs: Vec<DVector<f64>> = (0..p)
            .map(|j| {
                let mut e = DVector::zeros(p);
                e[j] = 1.0;
                e
            })
            .collect();
        for _ in 0..16 {
            let d = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            dirs.push(d.normalize());
        }
        let progress = &center - &previous;
        if progress.norm() > 0.0 {
            dirs.push(progress.normalize());
        }
        previous = center.clone();
        let before = best;
        for d in dirs {
            // Largest step interval keeping θ inside the box.
            let (mut smin, mut smax) = (-2.0 * reach, 2.0 * reach);
            for j in 0..p {
                if d[j] > 0.0 {
                    smax = smax.min((hi[j] - center[j]) / d[j]);
                    smin = smin.max((lo[j] - center[j]) / d[j]);
                } else if d[j] < 0.0 {
                    smax = smax.min((lo[j] - center[j]) / d[j]);
                    smin = smin.max((hi[j] - center[j]) / d[j]);
                }
            }
            if smax <= smin {
                continue;
            }
            let (s, v) = golden(|s| inner_value(prog, &(&center + &d * s)), smin, smax);
            if v < best {
                best = v;
                center += &d * s;
            }
        }
        idle = if before - best < 1e-13 { idle + 1 } else { 0 };
        if idle == 40 {
            break;
        }
    }
    Some(best.min(ellipsoid_optimum(prog, &center, best)))
}

/// Largest constraint violation at `x = (θ, w, t[, u])` with a subgradient of that constraint.
fn worst_constraint(prog: &SelectorProgram, x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> (f64, DVector<f64>) {
    let p = prog.p();
    let d = x.len();
    let (iw, it, iu) = (p, p + 1, p + 2);
    let theta = x.rows(0, p).into_owned();
    let u = if prog.use_u_cone { x[iu] } else { 0.0 };
    let mut worst = (f64::NEG_INFINITY, DVector::zeros(d));
    let mut consider = |v: f64, g: DVector<f64>| {
        if v > worst.0 {
            worst = (v, g);
        }
    };

    let mut g = DVector::zeros(d);
    for j in 0..p {
        g[j] = if theta[j] > 0.0 { 1.0 } else if theta[j] < 0.0 { -1.0 } else { 0.0 };
    }
    g[iw] = -1.0;
    consider(theta.lp_norm(1) - x[iw], g);

    let mut g = DVector::zeros(d);
    let norm = theta.norm();
    if norm > 0.0 {
        g.rows_mut(0, p).copy_from(&(&theta / norm));
    }
    g[it] = -1.0;
    consider(norm - x[it], g);

    if prog.use_u_cone {
        let k = theta.iamax();
        let mut g = DVector::zeros(d);
        g[k] = theta[k].signum();
        g[iu] = -1.0;
        consider(theta[k].abs() - u, g);
    }

    let resid = &prog.r - &prog.a * &theta;
    let slack = prog.mu_t * x[it] + prog.mu_u * u + prog.mu_1 * x[iw] + prog.tau;
    for i in 0..p {
        for sign in [1.0, -1.0] {
            let mut g = DVector::zeros(d);
            for j in 0..p {
                g[j] = -sign * prog.a[(i, j)];
            }
            g[iw] = -prog.mu_1;
            g[it] = -prog.mu_t;
            if prog.use_u_cone {
                g[iu] = -prog.mu_u;
            }
            consider(sign * resid[i] - slack, g);
        }
    }

    if prog.safeguards {
        let mut g = DVector::zeros(d);
        g[it] = 1.0;
        g[iw] = -1.0;
        consider(x[it] - x[iw], g);
        if prog.use_u_cone {
            let mut g = DVector::zeros(d);
            g[iu] = 1.0;
            g[iw] = -1.0;
            consider(u - x[iw], g);
        }
    }

    for j in 0..p {
        let mut g = DVector::zeros(d);
        g[j] = 1.0;
        consider(theta[j] - hi[j], g.clone());
        consider(lo[j] - theta[j], -g);
    }
    worst
}

/// Central-cut ellipsoid method started from a ball around `(θ₀, |θ₀|₁, |θ₀|₂[, |θ₀|∞])` that
/// holds every optimal point whose objective is at most `bound`. Returns the best feasible objective.
fn ellipsoid_optimum(prog: &SelectorProgram, theta0: &DVector<f64>, bound: f64) -> f64 {
    let p = prog.p();
    let d = p + 2 + usize::from(prog.use_u_cone);
    let (lo, hi) = box_bounds(prog);
    let mut cost = DVector::zeros(d);
    cost[p] = 1.0;
    cost[p + 1] = prog.lambda;
    if prog.use_u_cone {
        cost[p + 2] = prog.nu;
    }
    let mut x = DVector::zeros(d);
    x.rows_mut(0, p).copy_from(theta0);
    x[p] = theta0.lp_norm(1);
    x[p + 1] = theta0.norm();
    if prog.use_u_cone {
        x[p + 2] = theta0.amax();
    }
    let radius = 2.0 * (theta0.norm() + x.norm() + bound * (2.0 + 1.0 / prog.lambda.max(0.05) + 1.0 / prog.nu.max(0.05))) + 1.0;
    let mut shape = DMatrix::identity(d, d) * (radius * radius);
    let df = d as f64;
    let mut best = f64::INFINITY;
    for _ in 0..50_000 {
        let (viol, sub) = worst_constraint(prog, &x, &lo, &hi);
        let g = if viol <= 1e-10 {
            best = best.min(cost.dot(&x));
            cost.clone()
        } else {
            sub
        };
        let pg = &shape * &g;
        let width = g.dot(&pg);
        if width.is_nan() || width <= 0.0 || (viol <= 1e-10 && width.sqrt() < 1e-10) {
            break;
        }
        let step = &pg / width.sqrt();
        x -= &step / (df + 1.0);
        shape = (&shape - &step * step.transpose() * (2.0 / (df + 1.0))) * (df * df / (df * df - 1.0));
        shape = (&shape + shape.transpose()) * 0.5;
    }
    best
}

/// Optimal objective of `prog`, or `None` when it is infeasible.
pub fn oracle_objective(prog: &SelectorProgram) -> Option<f64> {
    if prog.use_t_cone {
        conic_optimum(prog)
    } else {
        assert!(!prog.use_u_cone, "u-cone without t-cone is not an estimator shape");
        linear_optimum(prog)
    }
}

/// A random program of the given estimator shape with `p ≤ 3`.
pub fn random_program<R: Rng>(rng: &mut R, tag: EstimatorTag) -> SelectorProgram {
    random_program_with(rng, tag, true)
}

pub fn random_program_with<R: Rng>(rng: &mut R, tag: EstimatorTag, allow_box: bool) -> SelectorProgram {
    let p = rng.random_range(1..=3usize);
    let n = rng.random_range(p + 2..=8);
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let d = EivDataset::new(y, z, None, None).unwrap();
    let safeguards = tag.has_auxiliary() && rng.random_bool(0.5);
    let mut spec = EstimatorSpec::new(EstimatorKind::new(tag, safeguards).unwrap());
    spec.tau = rng.random_range(0.0..0.3);
    spec.mu = rng.random_range(0.05..0.5);
    spec.lambda = rng.random_range(0.1..1.5);
    spec.nu = rng.random_range(0.1..1.5);
    spec.beta = rng.random_range(0.0..0.5);
    spec.delta_bar = rng.random_range(0.0..0.7);
    spec.d_hat = Some(DVector::from_fn(p, |_, _| rng.random_range(0.0..0.5)));
    if allow_box && rng.random_bool(0.3) {
        let lower = DVector::from_fn(p, |_, _| {
            if rng.random_bool(0.3) {
                f64::NEG_INFINITY
            } else {
                rng.random_range(-2.0..0.0)
            }
        });
        let upper = DVector::from_fn(p, |_, _| {
            if rng.random_bool(0.3) {
                f64::INFINITY
            } else {
                rng.random_range(0.0..2.0)
            }
        });
        spec.theta_set = ThetaSet::boxed(lower, upper).unwrap();
    }
    build_program(&spec, &d).unwrap()
}

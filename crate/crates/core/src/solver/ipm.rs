//! Primal-dual interior point method for dense conic programs
//!
//! ```text
//! minimize c'x  subject to  A x = b,  G x + s = h,  s ∈ K
//! ```
//!
//! solved through the homogeneous self-dual embedding with Nesterov–Todd scaling and a
//! Mehrotra predictor-corrector. Termination is delegated to a caller-supplied certificate
//! check on the normalized iterate.

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cone::{ConeDims, Scaling};

#[derive(Debug, Clone)]
pub(crate) struct ConeProblem {
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub dims: ConeDims,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Certified,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub outcome: Outcome,
    /// Normalized iterate `x/τ` (or the raw ray for an infeasibility certificate).
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub iterations: usize,
}

const STEP_FRACTION: f64 = 0.99;
const INFEAS_TOL: f64 = 1e-10;
const REFINE_STEPS: usize = 4;

struct Kkt<'a> {
    prob: &'a ConeProblem,
    w: &'a Scaling,
    /// `W⁻¹ G`.
    m: DMatrix<f64>,
    hchol: Cholesky<f64, Dyn>,
    /// Cholesky of `A H⁻¹ A'` and the cached `H⁻¹ A'`.
    schur: Option<(Cholesky<f64, Dyn>, DMatrix<f64>)>,
}

fn regularized_cholesky(h: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let scale = h.diagonal().amax().max(1.0);
    let mut delta = 1e-13 * scale;
    for _ in 0..8 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += delta;
        }
        if let Some(ch) = Cholesky::new(hr) {
            return Some(ch);
        }
        delta *= 100.0;
    }
    None
}

impl<'a> Kkt<'a> {
    fn factor(prob: &'a ConeProblem, w: &'a Scaling) -> Option<Self> {
        let mut m = prob.g.clone();
        w.inv_mul_columns(&mut m);
        let h = m.tr_mul(&m);
        let hchol = regularized_cholesky(&h)?;
        let schur = if prob.a.nrows() > 0 {
            let hinv_at = hchol.solve(&prob.a.transpose());
            let s = &prob.a * &hinv_at;
            Some((regularized_cholesky(&s)?, hinv_at))
        } else {
            None
        };
        Some(Self {
            prob,
            w,
            m,
            hchol,
            schur,
        })
    }

    fn solve_once(
        &self,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let wbz = self.w.inv_mul(bz);
        let v = bx + self.m.tr_mul(&wbz);
        let hv = self.hchol.solve(&v);
        let (dx, dy) = match &self.schur {
            Some((sch, hinv_at)) => {
                let rhs = &self.prob.a * &hv - by;
                let dy = sch.solve(&rhs);
                let dx = hv - hinv_at * &dy;
                (dx, dy)
            }
            None => (hv, DVector::zeros(0)),
        };
        let dz = self.w.inv_mul(&(&self.m * &dx - wbz));
        (dx, dy, dz)
    }

    /// Solves `[0 A' G'; A 0 0; G 0 -W²] (x, y, z) = (bx, by, bz)` with iterative refinement.
    fn solve(
        &self,
        bx: &DVector<f64>,
        by: &DVector<f64>,
        bz: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (mut x, mut y, mut z) = self.solve_once(bx, by, bz);
        let p = self.prob;
        let bnorm = bx.amax().max(by.amax()).max(bz.amax()).max(1e-300);
        for _ in 0..REFINE_STEPS {
            let ex = bx - (p.a.tr_mul(&y) + p.g.tr_mul(&z));
            let ey = by - &p.a * &x;
            let ez = bz - (&p.g * &x - self.w.mul(&self.w.mul(&z)));
            let err = ex.amax().max(ey.amax()).max(ez.amax());
            if err <= 1e-14 * bnorm {
                break;
            }
            let (cx, cy, cz) = self.solve_once(&ex, &ey, &ez);
            x += cx;
            y += cy;
            z += cz;
        }
        (x, y, z)
    }
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

struct State {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    kappa: f64,
}

fn shift_into_cone(dims: &ConeDims, v: &mut DVector<f64>) {
    let lo = dims.min_eig(v);
    let nrm = v.norm().max(1.0);
    if lo <= 1e-8 * nrm {
        *v += dims.identity() * (1.0 - lo);
    }
}

fn initial_point(prob: &ConeProblem) -> Option<State> {
    let dims = &prob.dims;
    let e = dims.identity();
    let unit = Scaling::new(dims, &e, &e);
    let kkt = Kkt::factor(prob, &unit)?;
    let n = prob.c.len();
    let (x, _, zp) = kkt.solve(&DVector::zeros(n), &prob.b, &prob.h);
    let mut s = -zp;
    shift_into_cone(dims, &mut s);
    let (_, y, mut z) = kkt.solve(&(-&prob.c), &DVector::zeros(prob.b.len()), &DVector::zeros(prob.h.len()));
    shift_into_cone(dims, &mut z);
    Some(State {
        x,
        y,
        z,
        s,
        tau: 1.0,
        kappa: 1.0,
    })
}

/// Runs the interior point method until `certify(x, y, z)` accepts the normalized iterate.
pub(crate) fn solve_cone<F>(prob: &ConeProblem, max_iter: usize, mut certify: F) -> IpmResult
where
    F: FnMut(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> bool,
{
    let dims = &prob.dims;
    let degree = (dims.degree() + 1) as f64;
    let cnorm = prob.c.norm().max(1.0);
    let bnorm = prob.b.norm().max(1.0);
    let hnorm = prob.h.norm().max(1.0);

    let finish = |st: &State, outcome: Outcome, it: usize| IpmResult {
        outcome,
        x: &st.x / st.tau,
        y: &st.y / st.tau,
        z: &st.z / st.tau,
        iterations: it,
    };

    let Some(mut st) = initial_point(prob) else {
        let n = prob.c.len();
        return IpmResult {
            outcome: Outcome::Stalled,
            x: DVector::zeros(n),
            y: DVector::zeros(prob.b.len()),
            z: DVector::zeros(prob.h.len()),
            iterations: 0,
        };
    };

    let mut best_mu = f64::INFINITY;
    let mut stagnant = 0usize;

    for it in 0..max_iter {
        if certify(&(&st.x / st.tau), &(&st.y / st.tau), &(&st.z / st.tau)) {
            return finish(&st, Outcome::Certified, it);
        }

        let rx = prob.a.tr_mul(&st.y) + prob.g.tr_mul(&st.z) + &prob.c * st.tau;
        let ry = &prob.a * &st.x - &prob.b * st.tau;
        let rz = &st.s + &prob.g * &st.x - &prob.h * st.tau;
        let cx = prob.c.dot(&st.x);
        let hz_by = prob.h.dot(&st.z) + prob.b.dot(&st.y);
        let rtau = st.kappa + cx + hz_by;

        if hz_by < 0.0 {
            let dual_ray = (prob.a.tr_mul(&st.y) + prob.g.tr_mul(&st.z)).norm() / cnorm;
            if dual_ray <= INFEAS_TOL * (-hz_by) {
                let scale = -hz_by;
                return IpmResult {
                    outcome: Outcome::PrimalInfeasible,
                    x: DVector::zeros(prob.c.len()),
                    y: &st.y / scale,
                    z: &st.z / scale,
                    iterations: it,
                };
            }
        }
        if cx < 0.0 {
            let ax = (&prob.a * &st.x).norm() / bnorm;
            let gxs = (&prob.g * &st.x + &st.s).norm() / hnorm;
            if ax.max(gxs) <= INFEAS_TOL * (-cx) {
                return IpmResult {
                    outcome: Outcome::DualInfeasible,
                    x: &st.x / (-cx),
                    y: DVector::zeros(prob.b.len()),
                    z: DVector::zeros(prob.h.len()),
                    iterations: it,
                };
            }
        }

        let mu = (st.s.dot(&st.z) + st.tau * st.kappa) / degree;
        if !mu.is_finite() {
            return finish(&st, Outcome::Stalled, it);
        }
        if mu < 0.5 * best_mu {
            best_mu = mu;
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant > 30 || mu < 1e-300 {
                return finish(&st, Outcome::Stalled, it);
            }
        }

        let w = Scaling::new(dims, &st.s, &st.z);
        let lambda = w.mul(&st.z);
        let Some(kkt) = Kkt::factor(prob, &w) else {
            return finish(&st, Outcome::Stalled, it);
        };
        let (x1, y1, z1) = kkt.solve(&(-&prob.c), &prob.b, &prob.h);
        let wz1 = w.mul(&z1);
        let denom = -(wz1.norm_squared() + st.kappa / st.tau);

        let direction = |eta: f64, dsr: &DVector<f64>, dkr: f64| -> Direction {
            let lam_dsr = dims.div(&lambda, dsr);
            let bz = -(&rz * eta) - w.mul(&lam_dsr);
            let (x2, y2, z2) = kkt.solve(&(-(&rx * eta)), &(-(&ry * eta)), &bz);
            let num = -eta * rtau - prob.c.dot(&x2) - prob.b.dot(&y2) - prob.h.dot(&z2) - dkr / st.tau;
            let dtau = num / denom;
            let dx = x2 + &x1 * dtau;
            let dy = y2 + &y1 * dtau;
            let dz = z2 + &z1 * dtau;
            let ds = w.mul(&(lam_dsr - w.mul(&dz)));
            let dkappa = (dkr - st.kappa * dtau) / st.tau;
            Direction {
                dx,
                dy,
                dz,
                ds,
                dtau,
                dkappa,
            }
        };

        let step_to_boundary = |d: &Direction| -> f64 {
            let mut a = dims.max_step(&st.s, &d.ds).min(dims.max_step(&st.z, &d.dz));
            if d.dtau < 0.0 {
                a = a.min(-st.tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-st.kappa / d.dkappa);
            }
            a
        };

        let lam_sq = dims.prod(&lambda, &lambda);
        let aff = direction(1.0, &(-&lam_sq), -st.tau * st.kappa);
        let alpha_aff = step_to_boundary(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        let ds_scaled = w.inv_mul(&aff.ds);
        let dz_scaled = w.mul(&aff.dz);
        let dsr = -lam_sq - dims.prod(&ds_scaled, &dz_scaled) + dims.identity() * (sigma * mu);
        let dkr = -st.tau * st.kappa - aff.dtau * aff.dkappa + sigma * mu;
        let comb = direction(1.0 - sigma, &dsr, dkr);
        let alpha = (STEP_FRACTION * step_to_boundary(&comb)).min(1.0);

        debug!(
            "ipm it={it} mu={mu:.3e} tau={:.3e} kappa={:.3e} sigma={sigma:.3e} alpha={alpha:.3e}",
            st.tau, st.kappa
        );

        if alpha.is_nan() || alpha <= 1e-12 {
            return finish(&st, Outcome::Stalled, it);
        }
        st.x += comb.dx * alpha;
        st.y += comb.dy * alpha;
        st.z += comb.dz * alpha;
        st.s += comb.ds * alpha;
        st.tau += comb.dtau * alpha;
        st.kappa += comb.dkappa * alpha;
    }
    if certify(&(&st.x / st.tau), &(&st.y / st.tau), &(&st.z / st.tau)) {
        return finish(&st, Outcome::Certified, max_iter);
    }
    finish(&st, Outcome::MaxIterations, max_iter)
}

/// Lower bound on the optimal value from a (possibly inexact) dual iterate.
///
/// `var_rows[j]` is the row of `G` encoding `−x_j ≤ 0` (with `h = 0`), and `upper[j]` bounds
/// `x_j` at every optimal point. The dual is projected onto `K` and the dual residual on each
/// variable is absorbed into that variable's sign row; what remains is charged against `upper`.
pub(crate) fn dual_lower_bound(
    prob: &ConeProblem,
    y: &DVector<f64>,
    z: &DVector<f64>,
    var_rows: &[usize],
    upper: &[f64],
) -> f64 {
    let mut zp = prob.dims.project(z);
    let resid = prob.a.tr_mul(y) + prob.g.tr_mul(&zp) + &prob.c;
    let mut bound = 0.0;
    for (j, &row) in var_rows.iter().enumerate() {
        // Raising z_row by d lowers residual j by d.
        let r = resid[j];
        if r < 0.0 {
            let give = zp[row].min(-r);
            zp[row] -= give;
            let left = r + give;
            if left < 0.0 {
                if !upper[j].is_finite() {
                    return f64::NEG_INFINITY;
                }
                bound += left * upper[j];
            }
        }
    }
    -prob.h.dot(&zp) - prob.b.dot(y) + bound
}

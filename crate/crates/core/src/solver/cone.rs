//! Product cone `R₊^l × Q^{q₁} × … × Q^{q_k}`: Jordan algebra, Nesterov–Todd scaling and step lengths.

use nalgebra::{DVector, DVectorView, DVectorViewMut};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ConeDims {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl ConeDims {
    pub fn total(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant coordinate and one per second-order block.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    /// `(offset, len)` of each second-order block.
    pub fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut off = self.nonneg;
        self.soc.iter().map(move |&q| {
            let start = off;
            off += q;
            (start, q)
        })
    }

    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.total());
        e.rows_mut(0, self.nonneg).fill(1.0);
        for (off, _) in self.soc_blocks() {
            e[off] = 1.0;
        }
        e
    }

    /// Smallest eigenvalue of `x` with respect to the cone.
    pub fn min_eig(&self, x: &DVector<f64>) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.nonneg {
            m = m.min(x[i]);
        }
        for (off, q) in self.soc_blocks() {
            m = m.min(x[off] - x.rows(off + 1, q - 1).norm());
        }
        m
    }

    /// Jordan product `u ∘ v`.
    pub fn prod(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for i in 0..self.nonneg {
            out[i] = u[i] * v[i];
        }
        for (off, q) in self.soc_blocks() {
            let (u0, v0) = (u[off], v[off]);
            let u1 = u.rows(off + 1, q - 1);
            let v1 = v.rows(off + 1, q - 1);
            out[off] = u0 * v0 + u1.dot(&v1);
            let mut o1 = out.rows_mut(off + 1, q - 1);
            o1.copy_from(&(v1 * u0 + u1 * v0));
        }
        out
    }

    /// Solves `u ∘ x = v` for `x`, with `u` in the interior of the cone.
    pub fn div(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for i in 0..self.nonneg {
            out[i] = v[i] / u[i];
        }
        for (off, q) in self.soc_blocks() {
            let (u0, v0) = (u[off], v[off]);
            let u1 = u.rows(off + 1, q - 1);
            let v1 = v.rows(off + 1, q - 1);
            let det = u0 * u0 - u1.norm_squared();
            let x0 = (u0 * v0 - u1.dot(&v1)) / det;
            out[off] = x0;
            out.rows_mut(off + 1, q - 1).copy_from(&((v1 - u1 * x0) / u0));
        }
        out
    }

    /// Largest `α ≥ 0` with `x + α d` in the cone (`f64::INFINITY` when unbounded).
    pub fn max_step(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let mut alpha = f64::INFINITY;
        for i in 0..self.nonneg {
            if d[i] < 0.0 {
                alpha = alpha.min(-x[i] / d[i]);
            }
        }
        for (off, q) in self.soc_blocks() {
            alpha = alpha.min(soc_step(x.rows(off, q), d.rows(off, q)));
        }
        alpha.max(0.0)
    }

    /// Euclidean projection onto the cone.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = x.clone();
        for i in 0..self.nonneg {
            out[i] = out[i].max(0.0);
        }
        for (off, q) in self.soc_blocks() {
            let x0 = x[off];
            let nx1 = x.rows(off + 1, q - 1).norm();
            if nx1 <= x0 {
                continue;
            }
            if nx1 <= -x0 {
                out.rows_mut(off, q).fill(0.0);
                continue;
            }
            let a = 0.5 * (x0 + nx1);
            out[off] = a;
            let scale = a / nx1;
            let x1 = x.rows(off + 1, q - 1) * scale;
            out.rows_mut(off + 1, q - 1).copy_from(&x1);
        }
        out
    }
}

fn soc_step(x: DVectorView<f64>, d: DVectorView<f64>) -> f64 {
    // (x0 + a d0)^2 - |x1 + a d1|^2 = qa a^2 + 2 qb a + qc
    let q = x.len();
    let (x0, d0) = (x[0], d[0]);
    let x1 = x.rows(1, q - 1);
    let d1 = d.rows(1, q - 1);
    let qa = d0 * d0 - d1.norm_squared();
    let qb = x0 * d0 - x1.dot(&d1);
    let qc = x0 * x0 - x1.norm_squared();
    if qc <= 0.0 {
        return 0.0;
    }
    // While q > 0 the leading coordinate keeps its sign, so the first positive root is the exit.
    let scale = qa.abs().max(qb.abs()).max(qc);
    if qa.abs() <= 1e-15 * scale {
        return if qb < 0.0 { -qc / (2.0 * qb) } else { f64::INFINITY };
    }
    let disc = qb * qb - qa * qc;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let root_q = -(qb + qb.signum() * disc.sqrt());
    [root_q / qa, qc / root_q]
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Nesterov–Todd scaling `W` with `W z = W⁻¹ s = λ`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    lp: DVector<f64>,
    soc: Vec<SocScaling>,
    nonneg: usize,
}

#[derive(Debug, Clone)]
struct SocScaling {
    off: usize,
    eta: f64,
    w: DVector<f64>,
}

fn jnorm(v: DVectorView<f64>) -> f64 {
    let q = v.len();
    (v[0] * v[0] - v.rows(1, q - 1).norm_squared()).max(0.0).sqrt()
}

/// `v ↦ H(w) v` for the hyperbolic reflection with `w'Jw = 1`; `sign = -1` applies the inverse.
fn hyperbolic(w: &DVector<f64>, v: DVectorView<f64>, sign: f64, mut out: DVectorViewMut<f64>) {
    let q = w.len();
    let w0 = w[0];
    let w1 = w.rows(1, q - 1);
    let v0 = v[0];
    let v1 = v.rows(1, q - 1);
    let d = w1.dot(&v1);
    out[0] = w0 * v0 + sign * d;
    let o1 = v1 + w1 * (sign * v0 + d / (1.0 + w0));
    out.rows_mut(1, q - 1).copy_from(&o1);
}

impl Scaling {
    pub fn new(dims: &ConeDims, s: &DVector<f64>, z: &DVector<f64>) -> Self {
        let l = dims.nonneg;
        let lp = DVector::from_iterator(l, (0..l).map(|i| (s[i] / z[i]).sqrt()));
        let soc = dims
            .soc_blocks()
            .map(|(off, q)| {
                let sb = s.rows(off, q);
                let zb = z.rows(off, q);
                let sn = jnorm(sb);
                let zn = jnorm(zb);
                let sbar = sb / sn;
                let zbar = zb / zn;
                let gamma = (0.5 * (1.0 + sbar.dot(&zbar))).sqrt();
                let mut w = sbar.clone_owned();
                w[0] += zbar[0];
                for i in 1..q {
                    w[i] -= zbar[i];
                }
                w /= 2.0 * gamma;
                // Restore w'Jw = 1 lost to rounding.
                let w1n = w.rows(1, q - 1).norm();
                w[0] = (1.0 + w1n * w1n).sqrt();
                SocScaling {
                    off,
                    eta: (sn / zn).sqrt(),
                    w,
                }
            })
            .collect();
        Self { lp, soc, nonneg: l }
    }

    fn apply(&self, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..self.nonneg {
            out[i] = if inverse { v[i] / self.lp[i] } else { v[i] * self.lp[i] };
        }
        for b in &self.soc {
            let q = b.w.len();
            let sign = if inverse { -1.0 } else { 1.0 };
            hyperbolic(&b.w, v.rows(b.off, q), sign, out.rows_mut(b.off, q));
            let f = if inverse { 1.0 / b.eta } else { b.eta };
            out.rows_mut(b.off, q).scale_mut(f);
        }
        out
    }

    /// `W v`.
    pub fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, false)
    }

    /// `W⁻¹ v`.
    pub fn inv_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, true)
    }

    /// Applies `W⁻¹` to every column of `g` in place.
    pub fn inv_mul_columns(&self, g: &mut nalgebra::DMatrix<f64>) {
        for mut col in g.column_iter_mut() {
            let v = DVector::from_column_slice(col.as_slice());
            col.copy_from(&self.inv_mul(&v));
        }
    }
}

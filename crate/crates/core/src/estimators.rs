//! Selector programs for each estimator, built from a dataset and tuning parameters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EivError, Result};
use crate::model::{EivDataset, EstimatorKind, EstimatorTag, Solution, ThetaSet};
use crate::solver::{self, SelectorProgram, SolverOptions};

/// Which design the Dantzig benchmark sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignSource {
    #[default]
    UseZ,
    UseX,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub lambda: f64,
    pub nu: f64,
    pub mu: f64,
    pub tau: f64,
    pub beta: f64,
    /// Almost-sure bound on the design errors; only the uncompensated `{ℓ1, ℓ2, ℓ∞}` selector reads it.
    pub delta_bar: f64,
    /// Diagonal of `D̂`. Required by the compensated variants, optional (zero) for conic.
    pub d_hat: Option<DVector<f64>>,
    pub theta_set: ThetaSet,
    pub design_source: DesignSource,
}

impl EstimatorSpec {
    /// Spec with every tuning value zero and no `D̂`.
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            lambda: 0.0,
            nu: 0.0,
            mu: 0.0,
            tau: 0.0,
            beta: 0.0,
            delta_bar: 0.0,
            d_hat: None,
            theta_set: ThetaSet::All,
            design_source: DesignSource::UseZ,
        }
    }

    pub fn dantzig(tau: f64, design_source: DesignSource) -> Self {
        Self {
            tau,
            design_source,
            ..Self::new(EstimatorKind::plain(EstimatorTag::Dantzig))
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let tag = self.kind.tag;
        EstimatorKind::new(tag, self.kind.safeguards)?;
        for (name, v) in [
            ("lambda", self.lambda),
            ("nu", self.nu),
            ("mu", self.mu),
            ("tau", self.tau),
            ("beta", self.beta),
            ("delta_bar", self.delta_bar),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EivError::InconsistentSpec(format!(
                    "`{name}` = {v} must be finite and nonnegative"
                )));
            }
        }
        if self.design_source == DesignSource::UseX && tag != EstimatorTag::Dantzig {
            return Err(EivError::InconsistentSpec(format!(
                "only the Dantzig benchmark may use the true design, not `{tag}`"
            )));
        }
        if let Some(d) = &self.d_hat {
            if d.len() != p {
                return Err(EivError::DimensionMismatch {
                    field: "d_hat",
                    expected: format!("length {p}"),
                    found: format!("length {}", d.len()),
                });
            }
            if let Some(j) = d.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(EivError::InconsistentSpec(format!(
                    "d_hat[{j}] = {} must be a finite nonnegative variance estimate",
                    d[j]
                )));
            }
        }
        match tag {
            EstimatorTag::CompensatedMu | EstimatorTag::L1l2linfCmu if self.d_hat.is_none() => {
                Err(EivError::InconsistentSpec(format!("`{tag}` needs d_hat")))
            }
            EstimatorTag::L1l2linfMu | EstimatorTag::L1l2linfCmu
                if self.lambda <= 0.0 || self.nu <= 0.0 =>
            {
                Err(EivError::InconsistentSpec(format!(
                    "`{tag}` needs lambda > 0 and nu > 0 (got {} and {})",
                    self.lambda, self.nu
                )))
            }
            EstimatorTag::Conic if self.lambda <= 0.0 && self.mu > 0.0 => {
                Err(EivError::InconsistentSpec(
                    "conic with lambda = 0 leaves t unpenalized; set mu = 0 as well".into(),
                ))
            }
            _ => {
                self.theta_set.check_dim(p)?;
                Ok(())
            }
        }
    }
}

/// `(MᵀM/n, Mᵀy/n)`.
fn moments(m: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = m.nrows() as f64;
    (m.tr_mul(m) / n, m.tr_mul(y) / n)
}

fn subtract_diag(a: &mut DMatrix<f64>, d: Option<&DVector<f64>>) {
    if let Some(d) = d {
        for j in 0..a.nrows() {
            a[(j, j)] -= d[j];
        }
    }
}

pub fn build_program(spec: &EstimatorSpec, d: &EivDataset) -> Result<SelectorProgram> {
    spec.validate(d.p())?;
    let tag = spec.kind.tag;
    let design = match spec.design_source {
        DesignSource::UseZ => d.z(),
        DesignSource::UseX => d.x().ok_or(EivError::MissingDesign)?,
    };
    let (mut a, r) = moments(design, d.y());
    let mut prog = SelectorProgram::dantzig(DMatrix::zeros(0, 0), r, spec.tau);
    prog.theta_set = spec.theta_set.clone();
    match tag {
        EstimatorTag::Dantzig => {}
        EstimatorTag::Mu => prog.mu_1 = spec.mu,
        EstimatorTag::CompensatedMu => {
            subtract_diag(&mut a, spec.d_hat.as_ref());
            prog.mu_1 = spec.mu;
        }
        EstimatorTag::Conic => {
            subtract_diag(&mut a, spec.d_hat.as_ref());
            if spec.lambda > 0.0 {
                prog.use_t_cone = true;
                prog.lambda = spec.lambda;
                prog.mu_t = spec.mu;
            }
        }
        EstimatorTag::L1l2linfMu | EstimatorTag::L1l2linfCmu => {
            let mu_u = if tag == EstimatorTag::L1l2linfMu {
                spec.delta_bar * spec.delta_bar
            } else {
                subtract_diag(&mut a, spec.d_hat.as_ref());
                spec.beta
            };
            prog.use_t_cone = true;
            prog.use_u_cone = true;
            prog.lambda = spec.lambda;
            prog.nu = spec.nu;
            prog.mu_t = spec.mu;
            prog.mu_u = mu_u;
        }
    }
    prog.a = a;
    prog.safeguards = spec.kind.safeguards && prog.use_t_cone;
    if spec.kind.safeguards && !prog.safeguards {
        return Err(EivError::InconsistentSpec(
            "safeguards need the auxiliary t variable, which this spec drops".into(),
        ));
    }
    Ok(prog)
}

pub fn estimate(spec: &EstimatorSpec, d: &EivDataset, opts: &SolverOptions) -> Result<Solution> {
    solver::solve(&build_program(spec, d)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn data() -> EivDataset {
        let z = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 0.2, -0.3, 0.5, 1.1, 0.0, -0.4, 0.3, 0.9, 0.2, -0.7, 0.4],
        );
        let y = DVector::from_vec(vec![1.0, 0.4, -0.2, 0.3]);
        EivDataset::new(y, z, None, None).unwrap()
    }

    fn spec(tag: EstimatorTag) -> EstimatorSpec {
        EstimatorSpec::new(EstimatorKind::plain(tag))
    }

    #[test]
    fn compensated_l1l2linf_transcription() {
        let mut s = spec(EstimatorTag::L1l2linfCmu);
        s.lambda = 1.0;
        s.nu = 1.0;
        s.mu = 0.2;
        s.beta = 0.3;
        s.tau = 0.05;
        s.d_hat = Some(DVector::from_element(3, 0.5));
        let prog = build_program(&s, &data()).unwrap();
        assert_eq!((prog.mu_t, prog.mu_u, prog.mu_1), (0.2, 0.3, 0.0));
        assert!(prog.use_t_cone && prog.use_u_cone && !prog.safeguards);
        let plain = build_program(&EstimatorSpec::dantzig(0.05, DesignSource::UseZ), &data()).unwrap();
        assert_relative_eq!(plain.a[(1, 1)] - prog.a[(1, 1)], 0.5, epsilon = 1e-15);
        assert_eq!(plain.a[(0, 1)], prog.a[(0, 1)]);
    }

    #[test]
    fn mu_selector_with_zero_mu_is_dantzig() {
        let mut s = spec(EstimatorTag::Mu);
        s.tau = 0.1;
        let a = build_program(&s, &data()).unwrap();
        let b = build_program(&EstimatorSpec::dantzig(0.1, DesignSource::UseZ), &data()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uncompensated_variants_share_the_constraint_matrix() {
        let d = data();
        let mut l = spec(EstimatorTag::L1l2linfMu);
        l.lambda = 0.5;
        l.nu = 0.5;
        let mut c = spec(EstimatorTag::CompensatedMu);
        c.d_hat = Some(DVector::zeros(3));
        let mut k = spec(EstimatorTag::Conic);
        k.lambda = 0.5;
        k.d_hat = Some(DVector::zeros(3));
        let a1 = build_program(&l, &d).unwrap().a;
        let a2 = build_program(&c, &d).unwrap().a;
        let a3 = build_program(&k, &d).unwrap().a;
        assert_eq!(a1, a2);
        assert_eq!(a2, a3);
    }

    #[test]
    fn inconsistent_specs_are_rejected() {
        let d = data();
        let mut l = spec(EstimatorTag::L1l2linfCmu);
        l.d_hat = Some(DVector::zeros(3));
        l.lambda = 1.0;
        assert!(build_program(&l, &d).is_err(), "nu = 0 must be rejected");
        l.nu = 1.0;
        l.d_hat = None;
        assert!(build_program(&l, &d).is_err(), "missing d_hat must be rejected");
        let mut m = spec(EstimatorTag::Mu);
        m.design_source = DesignSource::UseX;
        assert!(build_program(&m, &d).is_err());
        let x = EstimatorSpec::dantzig(0.1, DesignSource::UseX);
        assert!(matches!(build_program(&x, &d), Err(EivError::MissingDesign)));
        let mut neg = spec(EstimatorTag::Dantzig);
        neg.tau = -1.0;
        assert!(build_program(&neg, &d).is_err());
        let mut cmu = spec(EstimatorTag::CompensatedMu);
        cmu.d_hat = Some(DVector::from_vec(vec![0.1, -0.2, 0.0]));
        assert!(build_program(&cmu, &d).is_err());
    }

    fn orthonormal_data(theta: &[f64]) -> EivDataset {
        let n = 2;
        let x = DMatrix::identity(n, n) * (n as f64).sqrt();
        let y = &x * DVector::from_column_slice(theta);
        EivDataset::new(y, x.clone(), Some(x), Some(DVector::from_column_slice(theta))).unwrap()
    }

    #[test]
    fn noiseless_square_design_interpolates() {
        let d = orthonormal_data(&[0.7, -1.2]);
        let sol = estimate(&EstimatorSpec::dantzig(0.0, DesignSource::UseX), &d, &SolverOptions::default()).unwrap();
        assert!(sol.is_optimal());
        assert_relative_eq!(sol.theta_hat[0], 0.7, epsilon = 1e-7);
        assert_relative_eq!(sol.theta_hat[1], -1.2, epsilon = 1e-7);
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        let d = orthonormal_data(&[0.5, -0.1]);
        let sol = estimate(&EstimatorSpec::dantzig(0.2, DesignSource::UseX), &d, &SolverOptions::default()).unwrap();
        assert!(sol.is_optimal());
        assert_relative_eq!(sol.theta_hat[0], 0.3, epsilon = 1e-7);
        assert_relative_eq!(sol.theta_hat[1], 0.0, epsilon = 1e-7);
    }
}

//! Bias, RMSE and prediction risk over replications.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EivError, Result};
use crate::model::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub bias: f64,
    pub rmse: f64,
    pub pr: f64,
}

/// Squared errors of one replication: `|Δ|₂²` and `(1/n)|XΔ|₂²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationError {
    pub l2_sq: f64,
    pub pred_sq: f64,
}

impl ReplicationError {
    pub fn new(theta_hat: &DVector<f64>, theta_star: &DVector<f64>, x: &DMatrix<f64>) -> Self {
        let delta = theta_hat - theta_star;
        let xd = x * &delta;
        Self {
            l2_sq: delta.norm_squared(),
            pred_sq: xd.norm_squared() / x.nrows() as f64,
        }
    }
}

/// Averages in the given order, so the result does not depend on how the errors were computed.
pub fn aggregate(errors: &[ReplicationError]) -> Result<Metrics> {
    if errors.is_empty() {
        return Err(EivError::Empty("no replications to aggregate"));
    }
    let r = errors.len() as f64;
    let (mut b, mut m, mut pr) = (0.0, 0.0, 0.0);
    for e in errors {
        b += e.l2_sq.sqrt();
        m += e.l2_sq;
        pr += e.pred_sq;
    }
    Ok(Metrics {
        bias: b / r,
        rmse: (m / r).sqrt(),
        pr: (pr / r).sqrt(),
    })
}

pub fn compute_metrics(
    solutions: &[Solution],
    theta_star: &DVector<f64>,
    x_list: &[DMatrix<f64>],
) -> Result<Metrics> {
    if solutions.len() != x_list.len() {
        return Err(EivError::DimensionMismatch {
            field: "x_list",
            expected: format!("{} matrices", solutions.len()),
            found: format!("{} matrices", x_list.len()),
        });
    }
    let mut errs = Vec::with_capacity(solutions.len());
    for (s, x) in solutions.iter().zip(x_list) {
        if s.theta_hat.len() != theta_star.len() || x.ncols() != theta_star.len() {
            return Err(EivError::DimensionMismatch {
                field: "theta_hat",
                expected: format!("length {}", theta_star.len()),
                found: format!("length {} with X of {} columns", s.theta_hat.len(), x.ncols()),
            });
        }
        errs.push(ReplicationError::new(&s.theta_hat, theta_star, x));
    }
    aggregate(&errs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SolveStatus;
    use approx::assert_relative_eq;

    fn sol(theta: Vec<f64>) -> Solution {
        Solution {
            theta_hat: DVector::from_vec(theta),
            t_hat: 0.0,
            u_hat: 0.0,
            w_hat: 0.0,
            objective: 0.0,
            status: SolveStatus::Optimal,
            feasibility_residual: 0.0,
            optimality_gap: 0.0,
            iterations: 0,
        }
    }

    #[test]
    fn exact_estimates_have_zero_metrics() {
        let ts = DVector::from_vec(vec![1.0, -2.0]);
        let x = DMatrix::identity(2, 2);
        let m = compute_metrics(&vec![sol(vec![1.0, -2.0]); 3], &ts, &vec![x; 3]).unwrap();
        assert_eq!((m.bias, m.rmse, m.pr), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_replications_by_hand() {
        let ts = DVector::zeros(2);
        let x = DMatrix::identity(2, 2);
        let m = compute_metrics(&[sol(vec![1.0, 0.0]), sol(vec![0.0, 3.0])], &ts, &[x.clone(), x]).unwrap();
        assert_relative_eq!(m.bias, 2.0);
        assert_relative_eq!(m.rmse, 5f64.sqrt());
        // (1/2)(1 + 9) / 2 = 2.5
        assert_relative_eq!(m.pr, 2.5f64.sqrt());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(compute_metrics(&[], &DVector::zeros(1), &[]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bias_never_exceeds_rmse(errs in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..40)) {
                let e: Vec<ReplicationError> = errs.iter().map(|&(a, b)| ReplicationError { l2_sq: a, pred_sq: b }).collect();
                let m = aggregate(&e).unwrap();
                prop_assert!(m.bias <= m.rmse + 1e-12);
                prop_assert!(m.bias.is_finite() && m.rmse.is_finite() && m.pr.is_finite());
            }
        }
    }
}

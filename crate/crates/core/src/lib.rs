//! Sparse linear regression when the design is observed with additive error.
//!
//! The crate provides MU-type selectors (Dantzig, MU, compensated MU, conic and the two
//! `{ℓ1, ℓ2, ℓ∞}` selectors) as instances of one second-order cone program, a certified
//! interior point solver for it, threshold and tuning formulas, a brute-force sensitivity
//! oracle, and a Monte Carlo laboratory for the Gaussian errors-in-variables design.

pub mod error;
pub mod estimators;
pub mod io;
pub mod model;
pub mod simlab;
pub mod solver;
pub mod sensitivity;
pub mod thresholds;

pub use error::{EivError, Result};
pub use estimators::{build_program, estimate, DesignSource, EstimatorSpec};
pub use model::{EivDataset, EstimatorKind, EstimatorTag, SolveStatus, Solution, ThetaSet};
pub use solver::{feasibility_residual, solve, SelectorProgram, SolverOptions};

//! Flexible covariate balancing.
//!
//! Weights for one group are chosen to balance covariate means against a
//! target, penalised by an f-divergence from uniform. The flexible program
//! additionally optimises the penalty weight `λ` and a mixing parameter `δ`;
//! its objective value at any feasible point is a finite-sample confidence
//! radius for the weighted outcome mean, under a sparse linear outcome model
//! and a concentration bound on the target.
//!
//! Modules, bottom up:
//!
//! - [`numeric`], [`problem`]: matrices, weights, imbalance, estimates.
//! - [`divergence`]: KL, χ², CBPS and custom f-divergences with restricted conjugates.
//! - [`lp`], [`beta`]: a dense simplex solver and the outcome-bound program.
//! - [`plain`]: fixed-`λ` balancing (entropy balancing, stable weights, normalised CBPS).
//! - [`fbal`]: the jointly optimised program and its certificate.
//! - [`inference`], [`lasso`]: estimates, intervals, ATE, choice of `k`.
//! - [`simgen`], [`ingest`]: simulation designs and dataset preparation.

pub mod beta;
pub mod divergence;
pub mod error;
pub mod fbal;
pub mod inference;
pub mod ingest;
pub mod lasso;
pub mod lp;
pub mod numeric;
mod optim;
pub mod plain;
pub mod problem;
pub mod simgen;

pub use divergence::{conjugate, divergence, DivergenceSpec};
pub use fbal::{solve_fbal, Centering, FbalConfig, FbalSolution};
pub use plain::{solve_plain, BalanceResult, PlainBalanceConfig};
pub use error::{Error, ErrorKind, Result};

pub use numeric::Matrix;

pub use problem::{
    effective_sample_size, imbalance, weighted_estimate, weighted_mean, BalanceProblem, ImbalanceReport,
    SimplexWeights,
};

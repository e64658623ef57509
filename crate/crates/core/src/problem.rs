//! Balancing problems, simplex weights, and the basic weighted statistics.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, Matrix};

/// Absolute tolerance on `Σ w_i = 1`.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// One group to reweight (usually the treated group) together with the
/// target it must be balanced towards.
#[derive(Debug, Clone)]
pub struct BalanceProblem {
    x: Matrix,
    y: Vec<f64>,
    target: Arc<[f64]>,
    conc_radius: f64,
    k: f64,
    alpha: f64,
}

/// Concentration radius from Hoeffding's inequality for covariates in `[-1, 1]`:
/// `√(2 log(2d/α) / n)`.
pub fn hoeffding_radius(d: usize, n: usize, alpha: f64) -> f64 {
    (2.0 * (2.0 * d as f64 / alpha).ln() / n as f64).sqrt()
}

/// Concentration radius `C log d / √n` for an explicit constant `C`.
pub fn explicit_radius(c: f64, d: usize, n: usize) -> f64 {
    c * (d as f64).ln() / (n as f64).sqrt()
}

impl BalanceProblem {
    pub fn new(
        x: Matrix,
        y: Vec<f64>,
        target: Arc<[f64]>,
        k: f64,
        conc_radius: f64,
        alpha: f64,
    ) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n == 0 || d == 0 {
            return Err(Error::validation("problem needs at least one row and one column"));
        }
        if y.len() != n {
            return Err(Error::Dimension {
                context: "outcomes",
                expected: n,
                got: y.len(),
            });
        }
        if target.len() != d {
            return Err(Error::Dimension {
                context: "target",
                expected: d,
                got: target.len(),
            });
        }
        if !x.all_finite() || !y.iter().all(|v| v.is_finite()) || !target.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("covariates, outcomes and target must be finite"));
        }
        if !(conc_radius >= 0.0 && conc_radius.is_finite()) {
            return Err(Error::validation(format!("conc_radius must be >= 0, got {conc_radius}")));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::validation(format!("k must be > 0, got {k}")));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::validation(format!("alpha must lie in (0, 1/2), got {alpha}")));
        }
        Ok(Self {
            x,
            y,
            target,
            conc_radius,
            k,
            alpha,
        })
    }

    /// Builds a problem whose concentration radius is the Hoeffding default for a
    /// target averaged over `n_target` samples.
    pub fn with_hoeffding(
        x: Matrix,
        y: Vec<f64>,
        target: Arc<[f64]>,
        k: f64,
        alpha: f64,
        n_target: usize,
    ) -> Result<Self> {
        let rho = hoeffding_radius(x.cols(), n_target, alpha);
        Self::new(x, y, target, k, rho, alpha)
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn target(&self) -> &[f64] {
        &self.target
    }
    /// Shared handle to the target vector.
    pub fn target_arc(&self) -> &Arc<[f64]> {
        &self.target
    }
    pub fn conc_radius(&self) -> f64 {
        self.conc_radius
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn n(&self) -> usize {
        self.x.rows()
    }
    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Same data with a different sparsity bound.
    pub fn with_k(&self, k: f64) -> Result<Self> {
        Self::new(
            self.x.clone(),
            self.y.clone(),
            self.target.clone(),
            k,
            self.conc_radius,
            self.alpha,
        )
    }

    fn check_weights(&self, w: &SimplexWeights) -> Result<()> {
        if w.len() != self.n() {
            return Err(Error::Dimension {
                context: "weights",
                expected: self.n(),
                got: w.len(),
            });
        }
        Ok(())
    }
}

/// A probability distribution over the rows of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexWeights {
    w: Vec<f64>,
}

impl SimplexWeights {
    /// Validates without touching the values.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::validation("weights must be non-empty"));
        }
        if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::validation(format!("weight {i} is {v}, must be finite and >= 0")));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::validation(format!("weights sum to {s}, not 1")));
        }
        Ok(Self { w })
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn normalized(w: Vec<f64>) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !(s > 0.0 && s.is_finite()) || w.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::validation("cannot normalise weights"));
        }
        Ok(Self {
            w: w.into_iter().map(|v| v / s).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            w: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self { w }
    }

    /// `softmax(logits)`.
    pub fn from_logits(logits: &[f64]) -> Self {
        Self {
            w: numeric::softmax(logits),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
    pub fn len(&self) -> usize {
        self.w.len()
    }
    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }
}

/// Per-covariate imbalance `M̃ - M̂` and its sup norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceReport {
    pub per_covariate: Vec<f64>,
    pub max_abs: f64,
    pub argmax_j: usize,
}

/// `Xᵀ w`.
pub fn weighted_mean(problem: &BalanceProblem, w: &SimplexWeights) -> Result<Vec<f64>> {
    problem.check_weights(w)?;
    let mut out = vec![0.0; problem.d()];
    problem.x.tr_mul_vec(w.as_slice(), &mut out);
    Ok(out)
}

pub fn imbalance(problem: &BalanceProblem, w: &SimplexWeights) -> Result<ImbalanceReport> {
    let mut r = weighted_mean(problem, w)?;
    for (rj, t) in r.iter_mut().zip(problem.target.iter()) {
        *rj -= t;
    }
    let (max_abs, argmax_j) = numeric::max_abs(&r);
    Ok(ImbalanceReport {
        per_covariate: r,
        max_abs,
        argmax_j,
    })
}

/// `Σ w_i Y_i`.
pub fn weighted_estimate(problem: &BalanceProblem, w: &SimplexWeights) -> Result<f64> {
    problem.check_weights(w)?;
    Ok(numeric::dot(w.as_slice(), &problem.y))
}

/// `1 / Σ w_i²`.
pub fn effective_sample_size(w: &SimplexWeights) -> f64 {
    1.0 / w.as_slice().iter().map(|v| v * v).sum::<f64>()
}

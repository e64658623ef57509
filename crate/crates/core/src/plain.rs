//! Penalised balancing at a fixed `λ`:
//! `min_W max_j |Σ_i W_i X_ij − M̂_j| + λ D(W)` over the simplex.
//!
//! KL gives entropy balancing, χ² stable balancing weights, and the CBPS
//! divergence a normalised CBPS. Weights are parameterised as `softmax(θ)`
//! starting from `θ = 0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::numeric;
use crate::optim::{self, DescentConfig, Objective};
use crate::problem::{imbalance, BalanceProblem, ImbalanceReport, SimplexWeights};

#[derive(Debug, Clone)]
pub struct PlainBalanceConfig {
    pub divergence: DivergenceSpec,
    pub lambda: f64,
    pub max_iters: usize,
    pub step_size: f64,
    pub grad_tolerance: f64,
}

impl PlainBalanceConfig {
    pub fn new(divergence: DivergenceSpec, lambda: f64) -> Self {
        Self {
            divergence,
            lambda,
            max_iters: 20_000,
            step_size: 1.0,
            grad_tolerance: 1e-7,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::validation(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(Error::validation("max_iters must be >= 1"));
        }
        if !(self.step_size > 0.0 && self.grad_tolerance > 0.0) {
            return Err(Error::validation("step_size and grad_tolerance must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceResult {
    pub weights: SimplexWeights,
    pub lambda: f64,
    pub objective: f64,
    pub imbalance: ImbalanceReport,
    pub divergence_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Exact objective at each accepted iterate.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// The plain objective as a function of the logits `θ`, with its gradient.
pub struct PlainObjective<'a> {
    problem: &'a BalanceProblem,
    divergence: &'a DivergenceSpec,
    lambda: f64,
    w: Vec<f64>,
    r: Vec<f64>,
    gr: Vec<f64>,
    gw: Vec<f64>,
    gd: Vec<f64>,
}

impl<'a> PlainObjective<'a> {
    pub fn new(problem: &'a BalanceProblem, divergence: &'a DivergenceSpec, lambda: f64) -> Self {
        let (n, d) = (problem.n(), problem.d());
        Self {
            problem,
            divergence,
            lambda,
            w: vec![0.0; n],
            r: vec![0.0; d],
            gr: vec![0.0; d],
            gw: vec![0.0; n],
            gd: vec![0.0; n],
        }
    }

    fn residual(&mut self, theta: &[f64]) {
        numeric::softmax_into(theta, &mut self.w);
        self.problem.x().tr_mul_vec(&self.w, &mut self.r);
        for (rj, t) in self.r.iter_mut().zip(self.problem.target()) {
            *rj -= t;
        }
    }

    /// Exact objective and its surrogate at temperature `tau` (`tau ≤ 0`
    /// means no smoothing).
    pub fn evaluate(&mut self, theta: &[f64], tau: f64) -> (f64, f64) {
        self.residual(theta);
        let pen = self.lambda * self.divergence.value(&self.w);
        let exact = numeric::norm_inf(&self.r) + pen;
        let smooth = if tau > 0.0 {
            numeric::smooth_max_abs(&self.r, tau, None) + pen
        } else {
            exact
        };
        (exact, smooth)
    }

    /// Exact objective, surrogate, and the surrogate's gradient in `θ`.
    /// With `tau ≤ 0` the gradient is the subgradient at the lowest-index
    /// maximising covariate.
    pub fn evaluate_with_gradient(&mut self, theta: &[f64], tau: f64, grad: &mut [f64]) -> (f64, f64) {
        self.residual(theta);
        let pen = self.lambda * self.divergence.value(&self.w);
        let exact = numeric::norm_inf(&self.r) + pen;
        let smooth = numeric::smooth_max_abs(&self.r, tau, Some(&mut self.gr)) + pen;
        self.problem.x().mul_vec(&self.gr, &mut self.gw);
        self.divergence.gradient(&self.w, &mut self.gd);
        for (g, d) in self.gw.iter_mut().zip(&self.gd) {
            *g += self.lambda * d;
        }
        softmax_pullback(&self.w, &self.gw, grad);
        (exact, smooth)
    }
}

/// Chain rule through `w = softmax(θ)`: `∂/∂θ_i = w_i (g_i − wᵀg)`.
pub(crate) fn softmax_pullback(w: &[f64], gw: &[f64], out: &mut [f64]) {
    let avg = numeric::dot(w, gw);
    for ((o, &wi), &gi) in out.iter_mut().zip(w).zip(gw) {
        *o = wi * (gi - avg);
    }
}

impl Objective for PlainObjective<'_> {
    fn dim(&self) -> usize {
        self.problem.n()
    }

    fn values(&mut self, theta: &[f64], tau: f64) -> Result<(f64, f64)> {
        Ok(self.evaluate(theta, tau))
    }

    fn gradient(&mut self, theta: &[f64], tau: f64, grad: &mut [f64]) -> Result<(f64, f64)> {
        Ok(self.evaluate_with_gradient(theta, tau, grad))
    }
}

/// Temperature schedule tied to the imbalance of uniform weights.
pub(crate) fn temperatures(problem: &BalanceProblem) -> (f64, f64) {
    let imb_u = imbalance(problem, &SimplexWeights::uniform(problem.n()))
        .map(|r| r.max_abs)
        .unwrap_or(1.0);
    let scale = imb_u.max(1e-6);
    let tau0 = 0.1 * scale / (2.0 * problem.d() as f64).ln().max(1.0);
    (tau0, 1e-7 * scale)
}

pub fn solve_plain(problem: &BalanceProblem, config: &PlainBalanceConfig) -> Result<BalanceResult> {
    config.validate()?;
    let (tau0, tau_min) = temperatures(problem);
    let cfg = DescentConfig {
        max_iters: config.max_iters,
        grad_tolerance: config.grad_tolerance,
        initial_step: config.step_size,
        tau0,
        tau_min,
        window: 20,
        improvement_tol: 1e-10,
    };
    let mut obj = PlainObjective::new(problem, &config.divergence, config.lambda);
    let out = optim::minimize(&mut obj, vec![0.0; problem.n()], &cfg)?;
    let weights = SimplexWeights::from_logits(&out.theta);
    let imb = imbalance(problem, &weights)?;
    let divergence_value = config.divergence.value(weights.as_slice());
    let objective = imb.max_abs + config.lambda * divergence_value;
    if !objective.is_finite() {
        return Err(Error::solver("plain objective is not finite", format!("lambda={}", config.lambda)));
    }
    Ok(BalanceResult {
        weights,
        lambda: config.lambda,
        objective,
        imbalance: imb,
        divergence_value,
        iterations: out.iterations,
        converged: out.converged,
        trace: out.trace,
    })
}

/// Solves independently for every `λ` in `grid`, in parallel.
pub fn sweep_lambda(problem: &BalanceProblem, config: &PlainBalanceConfig, grid: &[f64]) -> Result<Vec<BalanceResult>> {
    grid.par_iter()
        .map(|&lambda| {
            let cfg = PlainBalanceConfig {
                lambda,
                ..config.clone()
            };
            solve_plain(problem, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::numeric::Matrix;

    fn problem(x: Vec<Vec<f64>>, target: Vec<f64>) -> BalanceProblem {
        let n = x.len();
        BalanceProblem::new(Matrix::from_rows(&x), vec![0.0; n], Arc::from(target), 1.0, 0.0, 0.05).unwrap()
    }

    #[test]
    fn balanced_column_stays_uniform() {
        let p = problem(vec![vec![0.5]; 4], vec![0.5]);
        let r = solve_plain(&p, &PlainBalanceConfig::new(DivergenceSpec::Kl, 0.3)).unwrap();
        assert!(r.objective.abs() < 1e-12);
        assert!(r.weights.as_slice().iter().all(|w| (w - 0.25).abs() < 1e-12));
    }

    #[test]
    fn huge_lambda_keeps_uniform() {
        let p = problem(vec![vec![0.0], vec![1.0], vec![0.2]], vec![0.9]);
        let r = solve_plain(&p, &PlainBalanceConfig::new(DivergenceSpec::Kl, 1e6)).unwrap();
        assert!(r.weights.as_slice().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-3));
    }

    #[test]
    fn objective_identity_and_monotone_trace() {
        let p = problem(vec![vec![1.0, -0.5], vec![-1.0, 0.3], vec![0.2, 0.9], vec![0.7, 0.1]], vec![0.4, 0.2]);
        for spec in [DivergenceSpec::Kl, DivergenceSpec::ChiSquared, DivergenceSpec::Cbps] {
            let r = solve_plain(&p, &PlainBalanceConfig::new(spec, 0.05)).unwrap();
            assert!((r.objective - (r.imbalance.max_abs + 0.05 * r.divergence_value)).abs() < 1e-8);
            assert!(r.trace.windows(2).all(|t| t[1] <= t[0]));
            assert!(r.objective <= r.trace[0]);
        }
    }

    #[test]
    fn rejects_bad_lambda() {
        let p = problem(vec![vec![0.5]; 2], vec![0.5]);
        assert!(solve_plain(&p, &PlainBalanceConfig::new(DivergenceSpec::Kl, 0.0)).is_err());
    }
}

//! The jointly optimised balancing program.
//!
//! For each sign `z ∈ {−1, +1}`:
//!
//! ```text
//! T_z(W, λ, δ) = ((1−δ) k + δ β_z) ‖Xᵀ W − M̂‖∞ + (1−δ) k ρ
//!              + λ D(W) + λ D*((δ/λ)(z Y − Ŷ_z))
//! ```
//!
//! and the certificate is `ν = max_z T_z`. Every feasible `(W, λ, δ)` gives a
//! valid radius, so the solver reports the exact `ν` of its best iterate.
//!
//! Parameters are `W = softmax(W̃)`, `λ = max(softplus(λ̃), 1e-10)` and
//! `δ = sigmoid(δ̃)`, started at `W̃ = 0, λ̃ = 1, δ̃ = 0`.
//!
//! By default ([`Centering::Raw`]) the conjugate term is evaluated as written,
//! through the exact shift identity `λ D*(v + c·1) = λ c + λ D*(v)` with `v`
//! the centred argument. [`Centering::Centred`] drops the `λ c` term, i.e.
//! centres `Y` and the fulcrum column over the group. That variant is not
//! covered by the coverage guarantee: the dropped term is `δ` times the
//! error of uniform weighting, which need not be small. Reported estimates
//! always use the raw outcomes.

use serde::{Deserialize, Serialize};

use crate::beta::{compute_beta, compute_betas, BetaInputs, BetaResult, InfeasiblePolicy, MIN_TARGET_NORM};
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::numeric;
use crate::optim::{self, DescentConfig, Objective};
use crate::plain::{softmax_pullback, temperatures};
use crate::problem::{imbalance, weighted_estimate, BalanceProblem, ImbalanceReport, SimplexWeights};

/// Floor applied to `λ`.
pub const LAMBDA_FLOOR: f64 = 1e-10;

const LAMBDA_LOGIT_INIT: f64 = 1.0;
const DELTA_LOGIT_INIT: f64 = 0.0;

/// How `z Y − Ŷ_z` enters the conjugate term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// The mean of `z Y − Ŷ_z` is kept as an additive `δ · mean` term.
    #[default]
    Raw,
    /// Group means of `Y` and `X_{·j*}` removed.
    Centred,
}

#[derive(Debug, Clone)]
pub struct FbalConfig {
    pub divergence: DivergenceSpec,
    pub max_iters: usize,
    pub step_size: f64,
    pub grad_tolerance: f64,
    /// Restrict the outer maximum to one sign.
    pub fixed_z: Option<i8>,
    pub fixed_lambda: Option<f64>,
    pub fixed_delta: Option<f64>,
    pub infeasible_policy: InfeasiblePolicy,
    pub centering: Centering,
}

impl FbalConfig {
    pub fn new(divergence: DivergenceSpec) -> Self {
        Self {
            divergence,
            max_iters: 50_000,
            step_size: 1.0,
            grad_tolerance: 1e-7,
            fixed_z: None,
            fixed_lambda: None,
            fixed_delta: None,
            infeasible_policy: InfeasiblePolicy::Error,
            centering: Centering::Raw,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.step_size > 0.0) || !(self.grad_tolerance > 0.0) {
            return Err(Error::validation("max_iters, step_size and grad_tolerance must be positive"));
        }
        if let Some(z) = self.fixed_z {
            if z != 1 && z != -1 {
                return Err(Error::validation(format!("fixed_z must be -1 or +1, got {z}")));
            }
        }
        if let Some(l) = self.fixed_lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::validation(format!("fixed_lambda must be > 0, got {l}")));
            }
        }
        if let Some(d) = self.fixed_delta {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::validation(format!("fixed_delta must lie in [0, 1], got {d}")));
            }
        }
        Ok(())
    }

    fn signs(&self) -> Vec<i8> {
        match self.fixed_z {
            Some(z) => vec![z],
            None => vec![-1, 1],
        }
    }
}

/// The four terms of `T_z` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZTerms {
    pub z: i8,
    pub imbalance_term: f64,
    pub concentration_term: f64,
    pub divergence_term: f64,
    pub conjugate_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FbalSolution {
    pub weights: SimplexWeights,
    pub lambda: f64,
    pub delta: f64,
    /// The certificate `max_z T_z`.
    pub nu: f64,
    pub per_z_terms: Vec<ZTerms>,
    /// `Σ W_i Y_i` on the original outcome scale.
    pub mu_hat: f64,
    pub imbalance: ImbalanceReport,
    pub divergence_value: f64,
    pub betas: Vec<(i8, BetaResult)>,
    /// Relaxed outcome-bound programs were needed.
    pub misspecified: bool,
    pub iterations: usize,
    pub converged: bool,
    /// `ν` at each accepted iterate.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Index of the largest `|M̂_j|` (lowest on ties) and its sign.
pub fn fulcrum_index(problem: &BalanceProblem) -> Result<(usize, f64)> {
    let (m, j) = numeric::max_abs(problem.target());
    if !(m >= MIN_TARGET_NORM) {
        return Err(Error::Domain(format!("target sup-norm {m:e} is too small for the fulcrum")));
    }
    Ok((j, problem.target()[j].signum()))
}

/// `Ŷ_i = −s β_z X_{i j*}`.
pub fn fulcrum(problem: &BalanceProblem, beta_z: f64) -> Result<Vec<f64>> {
    let (j, s) = fulcrum_index(problem)?;
    Ok((0..problem.n()).map(|i| -s * beta_z * problem.x().get(i, j)).collect())
}

/// `λ D*(v)` in the limit-safe form used throughout.
fn scaled_conjugate(
    div: &DivergenceSpec,
    centred: &[f64],
    mean: f64,
    lambda: f64,
    delta: f64,
    warm: Option<f64>,
) -> Result<(f64, Option<crate::divergence::ConjugateSolution>)> {
    if delta == 0.0 {
        // D*(0) = 0: uniform weights attain it.
        return Ok((0.0, None));
    }
    let v: Vec<f64> = centred.iter().map(|c| delta / lambda * c).collect();
    let sol = div.conjugate_solution(&v, warm)?;
    Ok((delta * mean + lambda * sol.value, Some(sol)))
}

/// `T_z` at `(w, λ, δ)`, with `betas` indexed as `[β₋₁, β₊₁]`.
pub fn fbal_objective(
    problem: &BalanceProblem,
    divergence: &DivergenceSpec,
    w: &SimplexWeights,
    lambda: f64,
    delta: f64,
    betas: [f64; 2],
    z: i8,
) -> Result<f64> {
    Ok(fbal_terms(problem, divergence, w, lambda, delta, betas, z, Centering::Raw)?.total)
}

#[allow(clippy::too_many_arguments)]
pub fn fbal_terms(
    problem: &BalanceProblem,
    divergence: &DivergenceSpec,
    w: &SimplexWeights,
    lambda: f64,
    delta: f64,
    betas: [f64; 2],
    z: i8,
    centering: Centering,
) -> Result<ZTerms> {
    if !(lambda > 0.0 && lambda.is_finite()) || !(0.0..=1.0).contains(&delta) {
        return Err(Error::validation(format!("need lambda > 0 and delta in [0, 1], got {lambda}, {delta}")));
    }
    let beta = match z {
        -1 => betas[0],
        1 => betas[1],
        _ => return Err(Error::validation(format!("z must be -1 or +1, got {z}"))),
    };
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::validation(format!("beta must be finite and >= 0, got {beta}")));
    }
    let imb = imbalance(problem, w)?;
    let data = SignData::new(problem, z, beta, centering)?;
    let k = problem.k();
    let (conj, _) = scaled_conjugate(divergence, &data.centred, data.mean, lambda, delta, None)?;
    let imbalance_term = ((1.0 - delta) * k + delta * beta) * imb.max_abs;
    let concentration_term = (1.0 - delta) * k * problem.conc_radius();
    let divergence_term = lambda * divergence.value(w.as_slice());
    let total = imbalance_term + concentration_term + divergence_term + conj;
    Ok(ZTerms {
        z,
        imbalance_term,
        concentration_term,
        divergence_term,
        conjugate_term: conj,
        total,
    })
}

/// Per-sign constants: `a = z Y − Ŷ_z` split into mean and centred part.
/// Under [`Centering::Centred`] the mean is dropped.
#[derive(Debug, Clone)]
struct SignData {
    z: i8,
    beta: f64,
    mean: f64,
    centred: Vec<f64>,
    warm: Option<f64>,
}

impl SignData {
    fn new(problem: &BalanceProblem, z: i8, beta: f64, centering: Centering) -> Result<Self> {
        let yhat = fulcrum(problem, beta)?;
        let zf = f64::from(z);
        let a: Vec<f64> = problem.y().iter().zip(&yhat).map(|(y, h)| zf * y - h).collect();
        let mean = numeric::mean(&a);
        Ok(Self {
            z,
            beta,
            mean: match centering {
                Centering::Centred => 0.0,
                Centering::Raw => mean,
            },
            centred: a.iter().map(|v| v - mean).collect(),
            warm: None,
        })
    }
}

/// `ν` as a function of `θ = (W̃, λ̃, δ̃)`, with gradients.
pub struct FbalObjective<'a> {
    problem: &'a BalanceProblem,
    divergence: &'a DivergenceSpec,
    signs: Vec<SignData>,
    centering: Centering,
    fixed_lambda: Option<f64>,
    fixed_delta: Option<f64>,
    fixed_weights: Option<Vec<f64>>,
    w: Vec<f64>,
    r: Vec<f64>,
    gr: Vec<f64>,
    gw: Vec<f64>,
    gd: Vec<f64>,
    gw_acc: Vec<f64>,
}

/// Values and parameter derivatives of one `T_z`.
struct SignEval {
    exact: f64,
    smooth: f64,
    d_lambda: f64,
    d_delta: f64,
    /// Coefficient on `X · ∂S/∂r`.
    imb_coef: f64,
}

impl<'a> FbalObjective<'a> {
    /// `betas` lists `(z, β_z)` for every sign in the outer maximum.
    pub fn new(
        problem: &'a BalanceProblem,
        divergence: &'a DivergenceSpec,
        betas: &[(i8, f64)],
        fixed_lambda: Option<f64>,
        fixed_delta: Option<f64>,
        centering: Centering,
    ) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::validation("at least one sign is required"));
        }
        let signs = betas
            .iter()
            .map(|&(z, b)| SignData::new(problem, z, b, centering))
            .collect::<Result<Vec<_>>>()?;
        let (n, d) = (problem.n(), problem.d());
        Ok(Self {
            problem,
            divergence,
            signs,
            centering,
            fixed_lambda,
            fixed_delta,
            fixed_weights: None,
            w: vec![0.0; n],
            r: vec![0.0; d],
            gr: vec![0.0; d],
            gw: vec![0.0; n],
            gd: vec![0.0; n],
            gw_acc: vec![0.0; n],
        })
    }

    /// Holds the weights at `w`; only `λ` and `δ` move.
    pub fn with_fixed_weights(mut self, w: &SimplexWeights) -> Self {
        self.fixed_weights = Some(w.as_slice().to_vec());
        self
    }

    pub fn dim(&self) -> usize {
        self.problem.n() + 2
    }

    /// Initial parameter vector.
    pub fn initial_theta(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.dim()];
        let n = self.problem.n();
        t[n] = LAMBDA_LOGIT_INIT;
        t[n + 1] = DELTA_LOGIT_INIT;
        t
    }

    /// `(λ, dλ/dλ̃)`.
    fn lambda(&self, theta: &[f64]) -> (f64, f64) {
        match self.fixed_lambda {
            Some(l) => (l, 0.0),
            None => {
                let t = theta[self.problem.n()];
                let sp = numeric::softplus(t);
                if sp < LAMBDA_FLOOR {
                    (LAMBDA_FLOOR, 0.0)
                } else {
                    (sp, numeric::sigmoid(t))
                }
            }
        }
    }

    /// `(δ, dδ/dδ̃)`.
    fn delta(&self, theta: &[f64]) -> (f64, f64) {
        match self.fixed_delta {
            Some(d) => (d, 0.0),
            None => {
                let d = numeric::sigmoid(theta[self.problem.n() + 1]);
                (d, d * (1.0 - d))
            }
        }
    }

    /// Weights, `λ` and `δ` encoded by `theta`.
    pub fn parameters(&self, theta: &[f64]) -> (SimplexWeights, f64, f64) {
        let w = match &self.fixed_weights {
            Some(w) => w.clone(),
            None => numeric::softmax(&theta[..self.problem.n()]),
        };
        (SimplexWeights::normalized(w).expect("softmax output is a distribution"), self.lambda(theta).0, self.delta(theta).0)
    }

    fn load_weights(&mut self, theta: &[f64]) {
        match &self.fixed_weights {
            Some(w) => self.w.copy_from_slice(w),
            None => {
                numeric::softmax_into(&theta[..self.problem.n()], &mut self.w);
            }
        }
        self.problem.x().tr_mul_vec(&self.w, &mut self.r);
        for (rj, t) in self.r.iter_mut().zip(self.problem.target()) {
            *rj -= t;
        }
    }

    fn z_tau(&self, tau: f64) -> f64 {
        let bmax = self.signs.iter().map(|s| s.beta).fold(0.0, f64::max);
        tau * (self.problem.k() + bmax)
    }

    fn eval_signs(&mut self, lambda: f64, delta: f64, imb: f64, smooth_imb: f64, div_w: f64) -> Result<Vec<SignEval>> {
        let k = self.problem.k();
        let rho = self.problem.conc_radius();
        let mut out = Vec::with_capacity(self.signs.len());
        for s in self.signs.iter_mut() {
            let (conj, sol) = scaled_conjugate(self.divergence, &s.centred, s.mean, lambda, delta, s.warm)?;
            let coef = (1.0 - delta) * k + delta * s.beta;
            let base = (1.0 - delta) * k * rho + lambda * div_w + conj;
            let (d_lambda, d_delta) = match &sol {
                Some(sol) => {
                    s.warm = Some(sol.multiplier);
                    let div_star = self.divergence.value(&sol.argmax);
                    let wc = numeric::dot(&sol.argmax, &s.centred);
                    (div_w - div_star, (s.beta - k) * smooth_imb - k * rho + s.mean + wc)
                }
                // At δ = 0 the maximiser is uniform, where the centred argument averages to zero.
                None => (div_w, (s.beta - k) * smooth_imb - k * rho + s.mean),
            };
            out.push(SignEval {
                exact: coef * imb + base,
                smooth: coef * smooth_imb + base,
                d_lambda,
                d_delta,
                imb_coef: coef,
            });
        }
        Ok(out)
    }

    /// Exact `ν` and its surrogate (`tau ≤ 0`: no smoothing).
    pub fn evaluate(&mut self, theta: &[f64], tau: f64) -> Result<(f64, f64)> {
        self.load_weights(theta);
        let (lambda, _) = self.lambda(theta);
        let (delta, _) = self.delta(theta);
        let imb = numeric::norm_inf(&self.r);
        let smooth_imb = if tau > 0.0 { numeric::smooth_max_abs(&self.r, tau, None) } else { imb };
        let div_w = self.divergence.value(&self.w);
        let evals = self.eval_signs(lambda, delta, imb, smooth_imb, div_w)?;
        let exact = evals.iter().map(|e| e.exact).fold(f64::NEG_INFINITY, f64::max);
        let smooth = match evals.as_slice() {
            [one] => one.smooth,
            [a, b] => numeric::smooth_max2(a.smooth, b.smooth, self.z_tau(tau)).0,
            _ => unreachable!("one or two signs"),
        };
        Ok((exact, smooth))
    }

    /// Exact `ν`, its surrogate, and the surrogate gradient in `θ`. With
    /// `tau ≤ 0` the gradient is taken at the lowest-index maximising
    /// covariate, averaging over tied signs.
    pub fn evaluate_with_gradient(&mut self, theta: &[f64], tau: f64, grad: &mut [f64]) -> Result<(f64, f64)> {
        let n = self.problem.n();
        self.load_weights(theta);
        let (lambda, dl) = self.lambda(theta);
        let (delta, dd) = self.delta(theta);
        let imb = numeric::norm_inf(&self.r);
        let smooth_imb = numeric::smooth_max_abs(&self.r, tau, Some(&mut self.gr));
        let div_w = self.divergence.value(&self.w);
        let evals = self.eval_signs(lambda, delta, imb, smooth_imb, div_w)?;
        let exact = evals.iter().map(|e| e.exact).fold(f64::NEG_INFINITY, f64::max);
        let (smooth, mix): (f64, Vec<f64>) = match evals.as_slice() {
            [one] => (one.smooth, vec![1.0]),
            [a, b] => {
                let (v, pa, pb) = numeric::smooth_max2(a.smooth, b.smooth, self.z_tau(tau));
                (v, vec![pa, pb])
            }
            _ => unreachable!("one or two signs"),
        };
        let mut g_lambda = 0.0;
        let mut g_delta = 0.0;
        let mut coef = 0.0;
        for (e, p) in evals.iter().zip(&mix) {
            g_lambda += p * e.d_lambda;
            g_delta += p * e.d_delta;
            coef += p * e.imb_coef;
        }
        if self.fixed_weights.is_some() {
            grad[..n].iter_mut().for_each(|g| *g = 0.0);
        } else {
            self.problem.x().mul_vec(&self.gr, &mut self.gw);
            self.divergence.gradient(&self.w, &mut self.gd);
            for ((acc, g), d) in self.gw_acc.iter_mut().zip(&self.gw).zip(&self.gd) {
                *acc = coef * g + lambda * d;
            }
            softmax_pullback(&self.w, &self.gw_acc, &mut grad[..n]);
        }
        grad[n] = g_lambda * dl;
        grad[n + 1] = g_delta * dd;
        Ok((exact, smooth))
    }

    fn terms(&self, w: &SimplexWeights, lambda: f64, delta: f64) -> Result<Vec<ZTerms>> {
        let mut betas = [0.0; 2];
        for s in &self.signs {
            betas[usize::from(s.z > 0)] = s.beta;
        }
        self.signs
            .iter()
            .map(|s| fbal_terms(self.problem, self.divergence, w, lambda, delta, betas, s.z, self.centering))
            .collect()
    }
}

impl Objective for FbalObjective<'_> {
    fn dim(&self) -> usize {
        FbalObjective::dim(self)
    }

    fn values(&mut self, theta: &[f64], tau: f64) -> Result<(f64, f64)> {
        self.evaluate(theta, tau)
    }

    fn gradient(&mut self, theta: &[f64], tau: f64, grad: &mut [f64]) -> Result<(f64, f64)> {
        self.evaluate_with_gradient(theta, tau, grad)
    }
}

fn required_betas(problem: &BalanceProblem, config: &FbalConfig) -> Result<Vec<(i8, BetaResult)>> {
    let signs = config.signs();
    let betas = if signs.len() == 2 {
        let [lo, hi] = compute_betas(problem, config.infeasible_policy)?;
        vec![(-1, lo), (1, hi)]
    } else {
        signs
            .into_iter()
            .map(|z| {
                let policy = config.infeasible_policy;
                compute_beta(&BetaInputs { problem, z, policy }).map(|r| (z, r))
            })
            .collect::<Result<Vec<_>>>()?
    };
    for (_, b) in &betas {
        b.value()?;
    }
    Ok(betas)
}

fn descent_config(problem: &BalanceProblem, config: &FbalConfig) -> DescentConfig {
    let (tau0, tau_min) = temperatures(problem);
    DescentConfig {
        max_iters: config.max_iters,
        grad_tolerance: config.grad_tolerance,
        initial_step: config.step_size,
        tau0,
        tau_min,
        window: 20,
        improvement_tol: 1e-10,
    }
}

/// Solves the joint program, computing `β_z` first. When the descent from
/// the default start settles away from the `δ = 0, λ → 0` corner, a second
/// descent with `(λ, δ)` held at that corner is run and the smaller `ν` kept.
pub fn solve_fbal(problem: &BalanceProblem, config: &FbalConfig) -> Result<FbalSolution> {
    config.validate()?;
    let betas = required_betas(problem, config)?;
    let first = solve_with(problem, config, betas.clone(), None, None, false)?;
    let free = config.fixed_lambda.is_none() && config.fixed_delta.is_none();
    if !free || (first.delta == 0.0 && first.lambda <= LAMBDA_FLOOR) {
        return Ok(first);
    }
    let corner = FbalConfig {
        fixed_lambda: Some(LAMBDA_FLOOR),
        fixed_delta: Some(0.0),
        ..config.clone()
    };
    let second = solve_with(problem, &corner, betas, None, None, true)?;
    let iterations = first.iterations + second.iterations;
    let mut best = if second.nu < first.nu { second } else { first };
    best.iterations = iterations;
    Ok(best)
}

/// Solves with precomputed `β_z` values. `init` overrides the starting `θ`.
fn solve_with(
    problem: &BalanceProblem,
    config: &FbalConfig,
    betas: Vec<(i8, BetaResult)>,
    init: Option<Vec<f64>>,
    fixed_weights: Option<&SimplexWeights>,
    corner_restart: bool,
) -> Result<FbalSolution> {
    let pairs: Vec<(i8, f64)> = betas.iter().map(|(z, b)| (*z, b.beta)).collect();
    let mut obj = FbalObjective::new(
        problem,
        &config.divergence,
        &pairs,
        config.fixed_lambda,
        config.fixed_delta,
        config.centering,
    )?;
    if let Some(w) = fixed_weights {
        obj = obj.with_fixed_weights(w);
    }
    let theta0 = init.unwrap_or_else(|| obj.initial_theta());
    let out = optim::minimize(&mut obj, theta0, &descent_config(problem, config))?;
    let mut trace = out.trace;
    let (weights, mut lambda, mut delta) = obj.parameters(&out.theta);
    let mut terms = obj.terms(&weights, lambda, delta)?;
    let mut nu = max_total(&terms);

    // The δ = 0, λ → 0 corner is always feasible and reproduces the naive radius.
    if corner_restart || (config.fixed_lambda.is_none() && config.fixed_delta.is_none()) {
        let lc = corner_lambda(config.divergence.value(weights.as_slice()));
        let corner = obj.terms(&weights, lc, 0.0)?;
        let corner_nu = max_total(&corner);
        if corner_nu < nu {
            nu = corner_nu;
            terms = corner;
            lambda = lc;
            delta = 0.0;
            trace.push(nu);
        }
    }
    if !nu.is_finite() {
        return Err(Error::solver("certificate is not finite", format!("lambda={lambda} delta={delta}")));
    }
    let imb = imbalance(problem, &weights)?;
    let mu_hat = weighted_estimate(problem, &weights)?;
    let divergence_value = config.divergence.value(weights.as_slice());
    let misspecified = betas.iter().any(|(_, b)| b.residual_band.is_some());
    Ok(FbalSolution {
        weights,
        lambda,
        delta,
        nu,
        per_z_terms: terms,
        mu_hat,
        imbalance: imb,
        divergence_value,
        betas,
        misspecified,
        iterations: out.iterations,
        converged: out.converged,
        trace,
    })
}

/// `λ` at which the corner's excess over the naive radius, `λ D(W)`, is at
/// most `LAMBDA_FLOOR`. Divergences such as CBPS are unbounded on the simplex.
fn corner_lambda(divergence_value: f64) -> f64 {
    LAMBDA_FLOOR / divergence_value.max(1.0)
}

fn max_total(terms: &[ZTerms]) -> f64 {
    terms.iter().map(|t| t.total).fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymmetricInterval {
    pub lower: f64,
    pub upper: f64,
    /// Solution with `z = +1`, giving the lower endpoint.
    pub plus: FbalSolution,
    /// Solution with `z = −1`, giving the upper endpoint.
    pub minus: FbalSolution,
    /// Symmetric certificate the one-sided solves started from.
    pub symmetric_nu: f64,
    pub crossed: bool,
}

/// `[μ̂₊ − ν₊, μ̂₋ + ν₋]` from two one-sided solves. Both start at the
/// symmetric solution, so neither one-sided radius exceeds the symmetric one.
pub fn asymmetric_interval(problem: &BalanceProblem, config: &FbalConfig) -> Result<AsymmetricInterval> {
    config.validate()?;
    let sym_cfg = FbalConfig {
        fixed_z: None,
        ..config.clone()
    };
    let betas = required_betas(problem, &sym_cfg)?;
    let sym = solve_with(problem, &sym_cfg, betas.clone(), None, None, false)?;
    let start = theta_for(problem, &sym);
    let one_side = |z: i8| -> Result<FbalSolution> {
        let cfg = FbalConfig {
            fixed_z: Some(z),
            ..config.clone()
        };
        let b: Vec<_> = betas.iter().filter(|(bz, _)| *bz == z).cloned().collect();
        solve_with(problem, &cfg, b, Some(start.clone()), None, false)
    };
    let plus = one_side(1)?;
    let minus = one_side(-1)?;
    let lower = plus.mu_hat - plus.nu;
    let upper = minus.mu_hat + minus.nu;
    if lower > upper {
        warn_crossed(lower, upper);
    }
    Ok(AsymmetricInterval {
        lower,
        upper,
        crossed: lower > upper,
        symmetric_nu: sym.nu,
        plus,
        minus,
    })
}

fn warn_crossed(lower: f64, upper: f64) {
    log::warn!("asymmetric interval is crossed: lower {lower} > upper {upper}");
}

/// Parameters reproducing a solution as a starting point.
fn theta_for(problem: &BalanceProblem, sol: &FbalSolution) -> Vec<f64> {
    let mut t: Vec<f64> = sol.weights.as_slice().iter().map(|w| w.max(1e-300).ln()).collect();
    let n = problem.n();
    debug_assert_eq!(t.len(), n);
    // Inverse softplus; at the floor any very negative logit will do.
    let l = sol.lambda;
    t.push(if l > 30.0 { l } else { l.exp_m1().max(1e-300).ln() });
    let d = sol.delta.clamp(1e-300, 1.0 - 1e-16);
    t.push((d / (1.0 - d)).ln());
    t
}

/// Certificate for given weights, optimising only `λ` and `δ`.
pub fn certify_weights(problem: &BalanceProblem, w: &SimplexWeights, config: &FbalConfig) -> Result<FbalSolution> {
    config.validate()?;
    if w.len() != problem.n() {
        return Err(Error::Dimension {
            context: "weights",
            expected: problem.n(),
            got: w.len(),
        });
    }
    let betas = required_betas(problem, config)?;
    solve_with(problem, config, betas, None, Some(w), false)
}

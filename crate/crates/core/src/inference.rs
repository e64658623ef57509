//! Point estimates, certified intervals, and the ATE combination.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta::InfeasiblePolicy;
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::fbal::{asymmetric_interval, certify_weights, AsymmetricInterval, solve_fbal, FbalConfig, FbalSolution};
use crate::lasso::{choose_k, LassoConfig};
use crate::numeric;
use crate::plain::{solve_plain, BalanceResult, PlainBalanceConfig};
use crate::problem::{effective_sample_size, imbalance, weighted_estimate, BalanceProblem, SimplexWeights};
use crate::simgen::{generate, SimDataset, SimKind, SimSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Naive,
    FbalSymmetric,
    FbalAsymmetric,
    PlainWithCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub imbalance_max: f64,
    pub divergence: f64,
    pub ess: f64,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    /// The outcome-bound programs had to be relaxed.
    pub misspecified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub mu_hat: f64,
    pub radius: f64,
    pub interval: (f64, f64),
    pub method: EstimateMethod,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub ate_hat: f64,
    pub radius: f64,
    pub mu1_report: EstimateReport,
    pub mu0_report: EstimateReport,
}

/// `k (‖Xᵀw − M̂‖∞ + ρ)`.
pub fn naive_radius(problem: &BalanceProblem, w: &SimplexWeights) -> Result<f64> {
    Ok(problem.k() * (imbalance(problem, w)?.max_abs + problem.conc_radius()))
}

fn symmetric(mu_hat: f64, radius: f64, method: EstimateMethod, diagnostics: Diagnostics) -> EstimateReport {
    EstimateReport {
        mu_hat,
        radius,
        interval: (mu_hat - radius, mu_hat + radius),
        method,
        diagnostics,
    }
}

/// Naive interval around the weighted estimate.
pub fn naive_report(problem: &BalanceProblem, w: &SimplexWeights, divergence: f64) -> Result<EstimateReport> {
    let diagnostics = Diagnostics {
        imbalance_max: imbalance(problem, w)?.max_abs,
        divergence,
        ess: effective_sample_size(w),
        lambda: None,
        delta: None,
        misspecified: false,
    };
    Ok(symmetric(
        weighted_estimate(problem, w)?,
        naive_radius(problem, w)?,
        EstimateMethod::Naive,
        diagnostics,
    ))
}

fn solution_diagnostics(sol: &FbalSolution) -> Diagnostics {
    Diagnostics {
        imbalance_max: sol.imbalance.max_abs,
        divergence: sol.divergence_value,
        ess: effective_sample_size(&sol.weights),
        lambda: Some(sol.lambda),
        delta: Some(sol.delta),
        misspecified: sol.misspecified,
    }
}

pub fn fbal_report(sol: &FbalSolution, method: EstimateMethod) -> EstimateReport {
    symmetric(sol.mu_hat, sol.nu, method, solution_diagnostics(sol))
}

/// Symmetric interval from the joint program.
pub fn estimate_fbal(problem: &BalanceProblem, config: &FbalConfig) -> Result<(EstimateReport, FbalSolution)> {
    let sol = solve_fbal(problem, config)?;
    Ok((fbal_report(&sol, EstimateMethod::FbalSymmetric), sol))
}

/// Interval from two one-sided solves. `mu_hat` and `radius` are the
/// interval's midpoint and half-width.
pub fn estimate_asymmetric(
    problem: &BalanceProblem,
    config: &FbalConfig,
) -> Result<(EstimateReport, AsymmetricInterval)> {
    let iv = asymmetric_interval(problem, config)?;
    let mut diagnostics = solution_diagnostics(&iv.plus);
    diagnostics.imbalance_max = iv.plus.imbalance.max_abs.max(iv.minus.imbalance.max_abs);
    diagnostics.misspecified = iv.plus.misspecified || iv.minus.misspecified;
    let report = EstimateReport {
        mu_hat: 0.5 * (iv.lower + iv.upper),
        radius: 0.5 * (iv.upper - iv.lower),
        interval: (iv.lower, iv.upper),
        method: EstimateMethod::FbalAsymmetric,
        diagnostics,
    };
    Ok((report, iv))
}

/// Plain balancing at a fixed `λ`, certified by optimising `λ` and `δ` of the
/// joint program with the weights held fixed.
pub fn estimate_plain(
    problem: &BalanceProblem,
    plain: &PlainBalanceConfig,
    certify: &FbalConfig,
) -> Result<(EstimateReport, BalanceResult)> {
    let res = solve_plain(problem, plain)?;
    let cert = certify_weights(problem, &res.weights, certify)?;
    let mut diagnostics = solution_diagnostics(&cert);
    diagnostics.divergence = res.divergence_value;
    let report = symmetric(cert.mu_hat, cert.nu, EstimateMethod::PlainWithCertificate, diagnostics);
    Ok((report, res))
}

fn side(name: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Side {
        side: name,
        source: Box::new(e),
    }
}

/// `μ̂₁ − μ̂₀` with radius `ν₁ + ν₀`. Both problems must hold the same target
/// allocation and the same concentration radius, so that the concentration
/// event is shared.
pub fn estimate_ate(treated: &BalanceProblem, control: &BalanceProblem, config: &FbalConfig) -> Result<AteReport> {
    if !Arc::ptr_eq(treated.target_arc(), control.target_arc()) {
        return Err(Error::validation("treated and control problems must share one target vector"));
    }
    if treated.conc_radius() != control.conc_radius() {
        return Err(Error::validation("treated and control problems must share conc_radius"));
    }
    let (t, c) = rayon::join(
        || estimate_fbal(treated, config).map_err(side("treated")),
        || estimate_fbal(control, config).map_err(side("control")),
    );
    let (mu1_report, _) = t?;
    let (mu0_report, _) = c?;
    Ok(AteReport {
        ate_hat: mu1_report.mu_hat - mu0_report.mu_hat,
        radius: mu1_report.radius + mu0_report.radius,
        mu1_report,
        mu0_report,
    })
}

/// SplitMix64 step, used to derive independent per-replication seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub median_abs_error: f64,
    pub median_radius: f64,
    pub median_naive_radius: f64,
}

/// One replication of the well-specified design: `(|μ̂₁ − μ₁|, ν, naive radius)`.
pub fn linear_replicate(spec: &SimSpec, alpha: f64, config: &FbalConfig) -> Result<(f64, f64, f64)> {
    if spec.kind != SimKind::LinearSparse {
        return Err(Error::validation("consistency replications need the linear design"));
    }
    let ds = generate(spec)?;
    let problem = ds.treated_problem(spec.k_true, alpha)?;
    let sol = solve_fbal(&problem, config)?;
    let naive = naive_radius(&problem, &sol.weights)?;
    Ok(((sol.mu_hat - ds.truth.mu1).abs(), sol.nu, naive))
}

/// Median error, certificate and naive radius of the treated mean over `reps`
/// replications at each sample size.
pub fn consistency_sweep(
    template: &SimSpec,
    n_grid: &[usize],
    reps: usize,
    alpha: f64,
    config: &FbalConfig,
) -> Result<Vec<SweepPoint>> {
    n_grid
        .iter()
        .map(|&n| {
            let runs: Vec<(f64, f64, f64)> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let spec = SimSpec {
                        n,
                        seed: derive_seed(template.seed, (n as u64) << 32 | r as u64),
                        ..template.clone()
                    };
                    linear_replicate(&spec, alpha, config)
                })
                .collect::<Result<_>>()?;
            let col = |f: fn(&(f64, f64, f64)) -> f64| numeric::median(&runs.iter().map(f).collect::<Vec<_>>());
            Ok(SweepPoint {
                n,
                median_abs_error: col(|r| r.0),
                median_radius: col(|r| r.1),
                median_naive_radius: col(|r| r.2),
            })
        })
        .collect()
}

/// Fixed-`λ` baselines: entropy balancing, stable balancing weights and
/// normalised CBPS, each in penalised form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Ebal,
    Sbw,
    Ncbps,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Ebal, Baseline::Sbw, Baseline::Ncbps];

    pub fn divergence(self) -> DivergenceSpec {
        match self {
            Baseline::Ebal => DivergenceSpec::Kl,
            Baseline::Sbw => DivergenceSpec::ChiSquared,
            Baseline::Ncbps => DivergenceSpec::Cbps,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Ebal => "ebal",
            Baseline::Sbw => "sbw",
            Baseline::Ncbps => "ncbps",
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown baseline `{s}`")))
    }
}

/// Default penalty grid for the baselines.
pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

/// Name used for the flexible method in replication output.
pub const FBAL_METHOD: &str = "fbal";

/// One estimate of the ATE in a replication study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub method: String,
    /// Empty for the flexible method.
    pub lambda: Option<f64>,
    pub rep: usize,
    pub estimate: f64,
    pub abs_error: f64,
}

/// Settings shared by every replication of a design.
#[derive(Debug, Clone)]
pub struct ReplicateConfig {
    pub reps: usize,
    pub lambda_grid: Vec<f64>,
    pub alpha: f64,
    pub fbal: FbalConfig,
    pub lasso: LassoConfig,
}

impl ReplicateConfig {
    pub fn new(reps: usize) -> Self {
        let mut fbal = FbalConfig::new(DivergenceSpec::Kl);
        fbal.infeasible_policy = InfeasiblePolicy::MinimalResidualBand;
        Self {
            reps,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            alpha: 0.05,
            fbal,
            lasso: LassoConfig::default(),
        }
    }
}

fn all_zero(y: &[f64]) -> bool {
    y.iter().all(|&v| v == 0.0)
}

/// ATE from plain balancing of both groups at one `λ`. A group whose
/// outcomes are all zero has weighted mean zero for any weights, so its
/// solve is skipped.
pub fn plain_ate(ds: &SimDataset, divergence: &DivergenceSpec, lambda: f64, alpha: f64) -> Result<f64> {
    let cfg = PlainBalanceConfig::new(divergence.clone(), lambda);
    let mean = |problem: BalanceProblem| -> Result<f64> {
        if all_zero(problem.y()) {
            return Ok(0.0);
        }
        let res = solve_plain(&problem, &cfg)?;
        weighted_estimate(&problem, &res.weights)
    };
    let mu1 = mean(ds.treated_problem(1.0, alpha)?).map_err(side("treated"))?;
    let mu0 = mean(ds.control_problem(1.0, alpha)?).map_err(side("control"))?;
    Ok(mu1 - mu0)
}

/// ATE report from the flexible program, with `k` chosen per group by
/// [`choose_k`].
pub fn fbal_ate(ds: &SimDataset, alpha: f64, config: &FbalConfig, lasso: &LassoConfig) -> Result<AteReport> {
    let k1 = choose_k(&ds.treated.x, &ds.treated.y, lasso)?.k;
    let k0 = choose_k(&ds.control.x, &ds.control.y, lasso)?.k;
    let (treated, control) = ds.into_problems(k1, k0, alpha)?;
    estimate_ate(&treated, &control, config)
}

/// One replication: the flexible estimate followed by every baseline at
/// every grid value.
pub fn replicate_once(spec: &SimSpec, rep: usize, config: &ReplicateConfig) -> Result<Vec<ReplicateRow>> {
    let ds = generate(spec)?;
    let truth = ds.truth.ate;
    let row = |method: &str, lambda: Option<f64>, estimate: f64| ReplicateRow {
        method: method.to_string(),
        lambda,
        rep,
        estimate,
        abs_error: (estimate - truth).abs(),
    };
    let fbal = fbal_ate(&ds, config.alpha, &config.fbal, &config.lasso)?;
    let mut rows = vec![row(FBAL_METHOD, None, fbal.ate_hat)];
    for b in Baseline::ALL {
        let div = b.divergence();
        for &lambda in &config.lambda_grid {
            rows.push(row(b.name(), Some(lambda), plain_ate(&ds, &div, lambda, config.alpha)?));
        }
    }
    Ok(rows)
}

/// Replications of `template` with per-replication derived seeds, ordered by
/// method, then `λ`, then replication.
pub fn replicate_design(template: &SimSpec, config: &ReplicateConfig) -> Result<Vec<ReplicateRow>> {
    if config.reps == 0 {
        return Err(Error::validation("replication count must be >= 1"));
    }
    if config.lambda_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::validation("every grid value must be a positive finite number"));
    }
    let per_rep: Vec<Vec<ReplicateRow>> = (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let spec = SimSpec {
                seed: derive_seed(template.seed, r as u64),
                ..template.clone()
            };
            replicate_once(&spec, r, config)
        })
        .collect::<Result<_>>()?;
    let cells = per_rep.first().map_or(0, Vec::len);
    Ok((0..cells)
        .flat_map(|c| per_rep.iter().map(move |rows| rows[c].clone()))
        .collect())
}

/// Median absolute error of each `(method, λ)` cell, in first-seen order.
pub fn median_errors(rows: &[ReplicateRow]) -> Vec<(String, Option<f64>, f64)> {
    let mut cells: Vec<(String, Option<f64>, Vec<f64>)> = Vec::new();
    for r in rows {
        match cells.iter_mut().find(|c| c.0 == r.method && c.1 == r.lambda) {
            Some(c) => c.2.push(r.abs_error),
            None => cells.push((r.method.clone(), r.lambda, vec![r.abs_error])),
        }
    }
    cells.into_iter().map(|(m, l, e)| (m, l, numeric::median(&e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub reps: usize,
    pub alpha: f64,
    /// Share of replications with `|μ̂₁ − μ₁| ≤ ν`.
    pub coverage: f64,
    pub mean_radius: f64,
    pub mean_abs_error: f64,
    pub mean_naive_radius: f64,
}

/// Coverage of the treated-mean certificate on the well-specified design,
/// with `k` set to the true outcome-model norm.
pub fn coverage_study(template: &SimSpec, reps: usize, alpha: f64, config: &FbalConfig) -> Result<CoverageSummary> {
    if reps == 0 {
        return Err(Error::validation("replication count must be >= 1"));
    }
    let runs: Vec<(f64, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let spec = SimSpec {
                seed: derive_seed(template.seed, r as u64),
                ..template.clone()
            };
            linear_replicate(&spec, alpha, config)
        })
        .collect::<Result<_>>()?;
    let covered = runs.iter().filter(|(err, nu, _)| err <= nu).count();
    let avg = |f: fn(&(f64, f64, f64)) -> f64| runs.iter().map(f).sum::<f64>() / reps as f64;
    Ok(CoverageSummary {
        reps,
        alpha,
        coverage: covered as f64 / reps as f64,
        mean_radius: avg(|r| r.1),
        mean_abs_error: avg(|r| r.0),
        mean_naive_radius: avg(|r| r.2),
    })
}

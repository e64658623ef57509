//! The outcome-bound program behind `β_z`.
//!
//! With `v = u − w`, `u, w ≥ 0`:
//!
//! ```text
//! β_z = max (ρ k − z M̂ᵀ v) / ‖M̂‖∞
//!       s.t. Σ_j (u_j + w_j) ≤ k,   X v = Y
//! ```
//!
//! and `β_z` is clamped at zero. When the equalities cannot be met inside the
//! budget (a misspecified outcome model) the caller may opt into a relaxed
//! program that replaces `X v = Y` by `|X v − Y| ≤ ε*`, where `ε*` is the
//! smallest band reachable within the budget.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::numeric::{self, Matrix};
use crate::problem::BalanceProblem;

/// Below this `‖M̂‖∞` the program is considered degenerate.
pub const MIN_TARGET_NORM: f64 = 1e-12;

/// What to do when `X v = Y` has no solution with `‖v‖₁ ≤ k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// Report [`LpStatus::Infeasible`].
    #[default]
    Error,
    /// Solve within the smallest achievable residual band and flag the result.
    MinimalResidualBand,
}

#[derive(Debug, Clone, Copy)]
pub struct BetaInputs<'a> {
    pub problem: &'a BalanceProblem,
    pub z: i8,
    pub policy: InfeasiblePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaResult {
    /// Clamped optimum; NaN unless `lp_status` is optimal.
    pub beta: f64,
    /// Maximising `u − w` (empty when not optimal).
    pub v_star: Vec<f64>,
    pub lp_status: LpStatus,
    /// Whether `‖v_star‖₁ = k` at the optimum.
    pub budget_active: bool,
    /// Residual band used when the equalities were relaxed.
    pub residual_band: Option<f64>,
}

impl BetaResult {
    fn not_optimal(status: LpStatus) -> Self {
        Self {
            beta: f64::NAN,
            v_star: Vec::new(),
            lp_status: status,
            budget_active: false,
            residual_band: None,
        }
    }

    /// The value, or an error carrying the non-optimal status.
    pub fn value(&self) -> Result<f64> {
        match self.lp_status {
            LpStatus::Optimal => Ok(self.beta),
            status => Err(Error::Lp { status }),
        }
    }
}

fn check_target(problem: &BalanceProblem) -> Result<f64> {
    let norm = numeric::norm_inf(problem.target());
    if norm < MIN_TARGET_NORM {
        return Err(Error::Domain(format!(
            "target sup-norm {norm:e} is below {MIN_TARGET_NORM:e}; add a constant covariate"
        )));
    }
    Ok(norm)
}

/// Equality rows `[X_i, −X_i] (u, w) = Y_i`.
fn split_rows(x: &Matrix) -> Vec<Vec<f64>> {
    (0..x.rows())
        .map(|i| {
            let r = x.row(i);
            r.iter().copied().chain(r.iter().map(|v| -v)).collect()
        })
        .collect()
}

fn recombine(x: &[f64], d: usize) -> Vec<f64> {
    (0..d).map(|j| x[j] - x[d + j]).collect()
}

pub fn compute_beta(inputs: &BetaInputs<'_>) -> Result<BetaResult> {
    compute_beta_cached(inputs, &mut None)
}

/// As [`compute_beta`], reusing the minimal residual band across signs.
fn compute_beta_cached(inputs: &BetaInputs<'_>, band_cache: &mut Option<f64>) -> Result<BetaResult> {
    let BetaInputs { problem, z, policy } = *inputs;
    if z != 1 && z != -1 {
        return Err(Error::validation(format!("z must be -1 or +1, got {z}")));
    }
    let norm = check_target(problem)?;
    let (d, k) = (problem.d(), problem.k());
    let zf = f64::from(z);
    let objective: Vec<f64> = problem
        .target()
        .iter()
        .map(|m| -zf * m / norm)
        .chain(problem.target().iter().map(|m| zf * m / norm))
        .collect();
    let rows = split_rows(problem.x());

    let mut lp = LinearProgram::new(objective.clone());
    lp.add_le(vec![1.0; 2 * d], k);
    for (row, &y) in rows.iter().zip(problem.y()) {
        lp.add_eq(row.clone(), y);
    }
    let first = solve_lp(&lp);
    let relax = policy == InfeasiblePolicy::MinimalResidualBand
        && match &first {
            Ok(sol) => sol.status == LpStatus::Infeasible,
            Err(_) => true,
        };
    let mut band = None;
    let sol = if relax {
        let eps = match *band_cache {
            Some(eps) => eps,
            None => {
                let eps = minimal_band(problem, &rows)?;
                *band_cache = Some(eps);
                eps
            }
        };
        let slack = 1e-10 * (1.0 + numeric::norm_inf(problem.y()));
        if first.is_err() && eps <= slack {
            // The equalities are attainable, so the failure is genuine.
            first?;
        }
        // Slightly widen so the relaxed program is strictly feasible in floating point.
        let eps = eps * (1.0 + 1e-9) + slack;
        let mut objective = objective;
        objective.push(0.0);
        let (mut relaxed, c) = band_program(problem, &rows, objective);
        let mut floor = vec![0.0; 2 * d + 1];
        floor[2 * d] = -1.0;
        relaxed.add_le(floor, eps - c);
        band = Some(eps);
        solve_lp(&relaxed)?
    } else {
        first?
    };

    if sol.status != LpStatus::Optimal {
        return Ok(BetaResult::not_optimal(sol.status));
    }
    let v_star = recombine(&sol.x[..2 * d], d);
    // Measured on `v` itself: `u` and `w` may overlap without changing the value.
    let used = numeric::norm_l1(&v_star);
    let budget_active = used >= k - 1e-7 * (1.0 + k);
    if !budget_active {
        warn!("outcome-bound budget is slack (used {used:.6} of k = {k:.6}); beta_{z} overestimates");
    }
    let raw = problem.conc_radius() * k / norm + sol.objective;
    Ok(BetaResult {
        beta: raw.max(0.0),
        v_star,
        lp_status: LpStatus::Optimal,
        budget_active,
        residual_band: band,
    })
}

/// Rows `±(X v − Y) ≤ c − t` over variables `(u, w, t)` with the budget on
/// `u + w`, where `c = max |Yᵢ|`. Every right-hand side is nonnegative, so
/// the slack basis is feasible, and `ε = c − t` bounds the residual band.
fn band_program(problem: &BalanceProblem, rows: &[Vec<f64>], objective: Vec<f64>) -> (LinearProgram, f64) {
    let d2 = 2 * problem.d();
    let c = numeric::norm_inf(problem.y());
    let mut lp = LinearProgram::new(objective);
    let mut budget = vec![1.0; d2 + 1];
    budget[d2] = 0.0;
    lp.add_le(budget, problem.k());
    for (row, &y) in rows.iter().zip(problem.y()) {
        let mut up = row.clone();
        up.push(1.0);
        lp.add_le(up, c + y);
        let mut down: Vec<f64> = row.iter().map(|v| -v).collect();
        down.push(1.0);
        lp.add_le(down, c - y);
    }
    (lp, c)
}

/// `min ε` such that some `‖v‖₁ ≤ k` has `|X v − Y| ≤ ε` row-wise.
fn minimal_band(problem: &BalanceProblem, rows: &[Vec<f64>]) -> Result<f64> {
    let d2 = 2 * problem.d();
    let mut objective = vec![0.0; d2 + 1];
    objective[d2] = 1.0;
    let (lp, c) = band_program(problem, rows, objective);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok((c - sol.x[d2]).max(0.0)),
        status => Err(Error::Lp { status }),
    }
}

/// Smallest `‖v‖₁` with `X v = Y` exactly, or `None` when no such `v` exists.
pub fn min_l1_interpolation(x: &Matrix, y: &[f64]) -> Result<Option<f64>> {
    if y.len() != x.rows() {
        return Err(Error::Dimension {
            context: "outcomes",
            expected: x.rows(),
            got: y.len(),
        });
    }
    let d = x.cols();
    let mut lp = LinearProgram::new(vec![-1.0; 2 * d]);
    for (row, &yi) in split_rows(x).into_iter().zip(y) {
        lp.add_eq(row, yi);
    }
    let sol = solve_lp(&lp)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(-sol.objective),
        _ => None,
    })
}

/// `β_z` for `z = −1` and `z = +1`, in that order.
pub fn compute_betas(problem: &BalanceProblem, policy: InfeasiblePolicy) -> Result<[BetaResult; 2]> {
    let mut band = None;
    let lo = compute_beta_cached(&BetaInputs { problem, z: -1, policy }, &mut band)?;
    let hi = compute_beta_cached(&BetaInputs { problem, z: 1, policy }, &mut band)?;
    Ok([lo, hi])
}

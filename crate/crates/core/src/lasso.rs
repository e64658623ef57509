//! Lasso path by coordinate descent, and the residual-bend choice of `k`.
//!
//! The fit has no intercept and penalises every coefficient, matching the
//! outcome model used for the certificate (a constant covariate plays the
//! role of the intercept).

use serde::{Deserialize, Serialize};

use crate::beta::min_l1_interpolation;
use crate::error::{Error, Result};
use crate::numeric::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    /// Number of penalties on the geometric grid.
    pub n_lambdas: usize,
    /// Smallest penalty as a fraction of the largest.
    pub lambda_min_ratio: f64,
    /// Training MSE relative to `Var(Y)` at which the fit counts as exact.
    pub bend_threshold: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            n_lambdas: 100,
            lambda_min_ratio: 1e-6,
            bend_threshold: 0.01,
            max_sweeps: 10_000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    pub l1_norm: f64,
    pub mse: f64,
    pub relative_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: f64,
    pub path: Vec<PathPoint>,
    /// False when no point on the path reached the threshold; `k` is then the largest norm.
    pub reached: bool,
}

/// Lasso path for `(1/2n)‖Y − Xb‖² + λ‖b‖₁` over a decreasing geometric grid.
pub fn lasso_path(x: &Matrix, y: &[f64], cfg: &LassoConfig) -> Result<Vec<(f64, Vec<f64>)>> {
    let (n, d) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::Dimension {
            context: "outcomes",
            expected: n,
            got: y.len(),
        });
    }
    if cfg.n_lambdas == 0 || !(cfg.lambda_min_ratio > 0.0 && cfg.lambda_min_ratio < 1.0) {
        return Err(Error::validation("lasso grid needs n_lambdas >= 1 and ratio in (0, 1)"));
    }
    let nf = n as f64;
    let cols: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
    let sq: Vec<f64> = cols.iter().map(|c| numeric::dot(c, c) / nf).collect();
    let lambda_max = cols.iter().map(|c| numeric::dot(c, y).abs() / nf).fold(0.0, f64::max);
    let mut b = vec![0.0; d];
    let mut resid = y.to_vec();
    let mut out = Vec::with_capacity(cfg.n_lambdas);
    if lambda_max == 0.0 {
        out.push((0.0, b));
        return Ok(out);
    }
    let steps = cfg.n_lambdas.max(2) - 1;
    for s in 0..cfg.n_lambdas {
        let lambda = lambda_max * cfg.lambda_min_ratio.powf(s as f64 / steps as f64);
        for _ in 0..cfg.max_sweeps {
            let mut max_change = 0.0f64;
            for j in 0..d {
                if sq[j] == 0.0 {
                    continue;
                }
                let c = &cols[j];
                let old = b[j];
                let rho = numeric::dot(c, &resid) / nf + sq[j] * old;
                let new = soft_threshold(rho, lambda) / sq[j];
                if new != old {
                    let delta = new - old;
                    for (r, &cij) in resid.iter_mut().zip(c) {
                        *r -= delta * cij;
                    }
                    b[j] = new;
                    max_change = max_change.max(delta.abs() * sq[j].sqrt());
                }
            }
            if max_change <= cfg.tolerance {
                break;
            }
        }
        out.push((lambda, b.clone()));
    }
    Ok(out)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Smallest ℓ1 norm along the lasso path whose training MSE is at most
/// `bend_threshold · Var(Y)`.
pub fn select_k(x: &Matrix, y: &[f64], cfg: &LassoConfig) -> Result<KSelection> {
    let n = y.len() as f64;
    let mean = numeric::mean(y);
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let second = y.iter().map(|v| v * v).sum::<f64>() / n;
    // A constant outcome has no spread; judge the fit against its magnitude instead.
    let scale = if var > 1e-12 * second.max(1e-300) { var } else { second };
    let path = lasso_path(x, y, cfg)?;
    let mut resid = vec![0.0; y.len()];
    let points: Vec<PathPoint> = path
        .iter()
        .map(|(lambda, b)| {
            x.mul_vec(b, &mut resid);
            let mse = resid.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum::<f64>() / n;
            PathPoint {
                lambda: *lambda,
                l1_norm: numeric::norm_l1(b),
                mse,
                relative_mse: if scale > 0.0 { mse / scale } else { 0.0 },
            }
        })
        .collect();
    let hit = points
        .iter()
        .filter(|p| p.relative_mse <= cfg.bend_threshold)
        .map(|p| p.l1_norm)
        .fold(f64::INFINITY, f64::min);
    let (k, reached) = if hit.is_finite() {
        (hit, true)
    } else {
        (points.iter().map(|p| p.l1_norm).fold(0.0, f64::max), false)
    };
    Ok(KSelection {
        k,
        path: points,
        reached,
    })
}

/// How `k` was chosen for a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KChoice {
    pub k: f64,
    pub bend_k: f64,
    /// Smallest `‖v‖₁` with `X v = Y` exactly, when one exists.
    pub exact_fit_norm: Option<f64>,
}

/// Smallest positive `k` the pipeline accepts.
pub const K_FLOOR: f64 = 1e-8;

/// Residual-bend `k`, raised to the exact-fit ℓ1 norm when the data can be
/// interpolated. A bend threshold above zero stops short of interpolation,
/// and a `k` below the exact-fit norm would leave the outcome-bound program
/// infeasible on well-specified data.
pub fn choose_k(x: &Matrix, y: &[f64], cfg: &LassoConfig) -> Result<KChoice> {
    let sel = select_k(x, y, cfg)?;
    let exact = min_l1_interpolation(x, y)?;
    let k = sel.k.max(exact.unwrap_or(0.0)).max(K_FLOOR);
    Ok(KChoice {
        k,
        bend_k: sel.k,
        exact_fit_norm: exact,
    })
}

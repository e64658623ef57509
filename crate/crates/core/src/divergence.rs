//! f-divergences from the uniform distribution over a group, and their
//! convex conjugates restricted to the probability simplex.
//!
//! For a convex `f` with `f(1) = 0` and a group of size `n`,
//!
//! ```text
//! D(w)  = (1/n) Σ_i f(n w_i)
//! D*(z) = sup_{w in simplex} zᵀw - D(w)
//! ```
//!
//! Closed forms are used where they exist: log-mean-exp for KL, and an exact
//! water-filling solution for χ². CBPS is solved through its KKT conditions
//! (a monotone root in the multiplier of `Σ w = 1`). Custom divergences fall
//! back to projected-gradient ascent.
//!
//! Note on χ²: with `D(w) = Σ (w_i - 1/n)²`, the restricted conjugate on the
//! interior of the simplex is `mean(z) + ¼ Σ (z_i - z̄)²`. The display
//! "`E z - ¼ Var z`" that circulates for this pair has the wrong sign and
//! scale; it under-estimates the supremum and would break Fenchel's
//! inequality, so it is not used anywhere.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{self, log_mean_exp};
use crate::problem::SimplexWeights;

/// Iteration cap for the projected-gradient conjugate.
const PGA_MAX_ITERS: usize = 10_000;
const PGA_WINDOW: usize = 50;
const PGA_IMPROVEMENT_TOL: f64 = 1e-10;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied convex `f` on `[0, ∞)` with `f(1) = 0`.
#[derive(Clone)]
pub struct CustomF {
    name: String,
    f: ScalarFn,
    df: Option<ScalarFn>,
}

impl CustomF {
    /// Checks `f(1) = 0` and midpoint convexity on a 64-point grid over `[0, check_upper]`.
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
        check_upper: f64,
    ) -> Result<Self> {
        let at_one = f(1.0);
        if !(at_one.abs() <= 1e-12) {
            return Err(Error::validation(format!("custom f(1) = {at_one}, must be 0")));
        }
        let grid: Vec<f64> = (0..64).map(|k| check_upper * k as f64 / 63.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
        for a in 0..64 {
            for b in a + 1..64 {
                let (fa, fb) = (vals[a], vals[b]);
                if !(fa.is_finite() && fb.is_finite()) {
                    continue;
                }
                let mid = f(0.5 * (grid[a] + grid[b]));
                if mid > 0.5 * (fa + fb) + 1e-9 {
                    return Err(Error::validation(format!(
                        "custom f fails midpoint convexity between {} and {}",
                        grid[a], grid[b]
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            f: Arc::new(f),
            df: df.map(|d| Arc::from(d) as ScalarFn),
        })
    }

    fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    fn deriv(&self, t: f64) -> f64 {
        match &self.df {
            Some(df) => df(t),
            None => {
                let h = 1e-6 * t.abs().max(1.0);
                let lo = (t - h).max(0.0);
                ((self.f)(t + h) - (self.f)(lo)) / (t + h - lo)
            }
        }
    }
}

/// Which divergence penalises departure from uniform weights.
#[derive(Clone)]
pub enum DivergenceSpec {
    Kl,
    ChiSquared,
    /// Normalised covariate-balancing-propensity-score divergence.
    Cbps,
    Custom(CustomF),
}

impl fmt::Debug for DivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DivergenceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" | "entropy" => Ok(Self::Kl),
            "chi2" | "chisquared" | "chi-squared" => Ok(Self::ChiSquared),
            "cbps" => Ok(Self::Cbps),
            other => Err(Error::validation(format!("unknown divergence `{other}`"))),
        }
    }
}

/// Restricted conjugate value together with its maximiser.
#[derive(Debug, Clone)]
pub struct ConjugateSolution {
    pub value: f64,
    /// The maximising distribution, i.e. the gradient of `D*` at `z`.
    pub argmax: Vec<f64>,
    /// Multiplier of the `Σ w = 1` constraint, used for warm starts.
    pub multiplier: f64,
}

/// The CBPS generator `f(t) = (n/t - 1) log(n/t - 1) - n/t + c` with
/// `c = -(n - 1) log(n - 1) + n`, defined on `[0, n]`.
pub fn cbps_f(t: f64, n: usize) -> Result<f64> {
    let nf = n as f64;
    if !(t >= 0.0 && t <= nf) {
        return Err(Error::Domain(format!("cbps f evaluated at {t} outside [0, {n}]")));
    }
    if t == 0.0 {
        return Ok(f64::INFINITY);
    }
    let q = nf / t - 1.0;
    Ok(xlogx(q) - nf / t + cbps_constant(n))
}

fn cbps_constant(n: usize) -> f64 {
    let m = n as f64 - 1.0;
    -xlogx(m) + n as f64
}

#[inline]
fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `D(w)`; `+∞` where the generator is infinite (CBPS with a zero weight).
pub fn divergence(spec: &DivergenceSpec, w: &SimplexWeights) -> f64 {
    spec.value(w.as_slice())
}

/// `D*(z)`.
pub fn conjugate(spec: &DivergenceSpec, z: &[f64]) -> Result<f64> {
    spec.conjugate_solution(z, None).map(|s| s.value)
}

/// Returns `(D*(z + c0·1), c0 + D*(z))`; the two agree because `w` sums to one.
pub fn conjugate_shift_check(spec: &DivergenceSpec, z: &[f64], c0: f64) -> Result<(f64, f64)> {
    let shifted: Vec<f64> = z.iter().map(|v| v + c0).collect();
    Ok((conjugate(spec, &shifted)?, c0 + conjugate(spec, z)?))
}

impl DivergenceSpec {
    pub fn name(&self) -> &str {
        match self {
            Self::Kl => "kl",
            Self::ChiSquared => "chi2",
            Self::Cbps => "cbps",
            Self::Custom(c) => &c.name,
        }
    }

    /// Divergence of raw weights assumed to lie on the simplex.
    pub fn value(&self, w: &[f64]) -> f64 {
        let n = w.len();
        let nf = n as f64;
        match self {
            Self::Kl => w.iter().map(|&wi| xlogx(wi) + wi * nf.ln()).sum(),
            Self::ChiSquared => w.iter().map(|&wi| (wi - 1.0 / nf).powi(2)).sum(),
            Self::Cbps => {
                let c = cbps_constant(n);
                let mut s = 0.0;
                for &wi in w {
                    if wi <= 0.0 {
                        return f64::INFINITY;
                    }
                    // n/t - 1 with t = n w simplifies to (1 - w)/w.
                    let q = ((1.0 - wi) / wi).max(0.0);
                    s += xlogx(q) - 1.0 / wi + c;
                }
                s / nf
            }
            Self::Custom(cf) => w.iter().map(|&wi| cf.eval(nf * wi)).sum::<f64>() / nf,
        }
    }

    /// `∂D/∂w_i` into `out`.
    pub fn gradient(&self, w: &[f64], out: &mut [f64]) {
        let nf = w.len() as f64;
        match self {
            Self::Kl => {
                for (o, &wi) in out.iter_mut().zip(w) {
                    *o = (nf * wi.max(f64::MIN_POSITIVE)).ln() + 1.0;
                }
            }
            Self::ChiSquared => {
                for (o, &wi) in out.iter_mut().zip(w) {
                    *o = 2.0 * (wi - 1.0 / nf);
                }
            }
            Self::Cbps => {
                for (o, &wi) in out.iter_mut().zip(w) {
                    *o = cbps_h(wi.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)) / nf;
                }
            }
            Self::Custom(cf) => {
                for (o, &wi) in out.iter_mut().zip(w) {
                    *o = cf.deriv(nf * wi);
                }
            }
        }
    }

    /// Restricted conjugate and its maximiser. `warm` is an optional starting
    /// multiplier from a nearby previous call.
    pub fn conjugate_solution(&self, z: &[f64], warm: Option<f64>) -> Result<ConjugateSolution> {
        if z.is_empty() {
            return Err(Error::validation("conjugate needs a non-empty vector"));
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("conjugate argument {i} is not finite")));
        }
        if z.len() == 1 {
            return Ok(ConjugateSolution {
                value: z[0] - self.value(&[1.0]),
                argmax: vec![1.0],
                multiplier: 0.0,
            });
        }
        match self {
            Self::Kl => {
                let mut argmax = vec![0.0; z.len()];
                numeric::softmax_into(z, &mut argmax);
                Ok(ConjugateSolution {
                    value: log_mean_exp(z),
                    argmax,
                    multiplier: 0.0,
                })
            }
            Self::ChiSquared => Ok(chi2_conjugate(z)),
            Self::Cbps => cbps_conjugate(z, warm),
            Self::Custom(_) => self.projected_ascent(z),
        }
    }

    /// Projected-gradient ascent of `zᵀw - D(w)` over the simplex with
    /// backtracking; stops when the objective improves by less than `1e-10`
    /// over 50 iterations.
    fn projected_ascent(&self, z: &[f64]) -> Result<ConjugateSolution> {
        let n = z.len();
        let objective = |w: &[f64]| numeric::dot(z, w) - self.value(w);
        let mut w = vec![1.0 / n as f64; n];
        let mut f = objective(&w);
        let mut grad = vec![0.0; n];
        let mut cand = vec![0.0; n];
        let mut step = 1.0;
        let mut history = vec![f];
        for it in 0..PGA_MAX_ITERS {
            self.gradient(&w, &mut grad);
            for (g, &zi) in grad.iter_mut().zip(z) {
                *g = (zi - *g).clamp(-1e12, 1e12);
            }
            let mut accepted = false;
            let mut t = step;
            while t > 1e-20 {
                for ((c, &wi), &g) in cand.iter_mut().zip(&w).zip(&grad) {
                    *c = wi + t * g;
                }
                project_simplex(&mut cand);
                let fc = objective(&cand);
                let ascent: f64 = grad.iter().zip(cand.iter().zip(&w)).map(|(g, (c, wi))| g * (c - wi)).sum();
                if fc.is_finite() && fc >= f + 1e-4 * ascent {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            std::mem::swap(&mut w, &mut cand);
            f = objective(&w);
            step = (2.0 * t).min(1e6);
            history.push(f);
            if it >= PGA_WINDOW && f - history[history.len() - 1 - PGA_WINDOW] < PGA_IMPROVEMENT_TOL {
                return Ok(ConjugateSolution {
                    value: f,
                    argmax: w,
                    multiplier: 0.0,
                });
            }
        }
        let window = history.len().min(PGA_WINDOW + 1);
        let improvement = f - history[history.len() - window];
        if improvement < PGA_IMPROVEMENT_TOL || history.len() < PGA_MAX_ITERS {
            return Ok(ConjugateSolution {
                value: f,
                argmax: w,
                multiplier: 0.0,
            });
        }
        Err(Error::solver(
            "projected-gradient conjugate did not converge",
            format!("iterations={PGA_MAX_ITERS} objective={f} recent_improvement={improvement}"),
        ))
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &mut [f64]) {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in s.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Exact maximiser of `zᵀw - Σ(w_i - 1/n)²` on the simplex:
/// `w_i = max(0, 1/n + (z_i - μ)/2)` with `μ` fixed by `Σ w = 1`.
fn chi2_conjugate(z: &[f64]) -> ConjugateSolution {
    let n = z.len();
    let nf = n as f64;
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut mu = sorted[0] + 2.0 / nf - 2.0;
    let mut cum = 0.0;
    for (m, &zm) in sorted.iter().enumerate() {
        cum += zm;
        let size = (m + 1) as f64;
        let cand = (cum + 2.0 * size / nf - 2.0) / size;
        if zm > cand - 2.0 / nf {
            mu = cand;
        } else {
            break;
        }
    }
    let argmax: Vec<f64> = z.iter().map(|&zi| (1.0 / nf + 0.5 * (zi - mu)).max(0.0)).collect();
    let value = numeric::dot(z, &argmax) - argmax.iter().map(|w| (w - 1.0 / nf).powi(2)).sum::<f64>();
    ConjugateSolution {
        value,
        argmax,
        multiplier: mu,
    }
}

/// `h(s) = logit(s) / s²`, so that `f'(n s) = h(s) / n` for the CBPS generator.
#[inline]
fn cbps_h(s: f64) -> f64 {
    ((s / (1.0 - s)).ln()) / (s * s)
}

/// Solves `h(s) = a` for `s` in `(0, 1)`; `h` is strictly increasing.
///
/// Works in log-odds `u` where `h = u (1 + e^{-u})²`.
fn cbps_h_inverse(a: f64) -> f64 {
    numeric::sigmoid(cbps_h_inverse_logodds(a))
}

/// Log-odds of [`cbps_h_inverse`], which keeps precision when `s` is close to one.
fn cbps_h_inverse_logodds(a: f64) -> f64 {
    let g = |u: f64| u * (1.0 + (-u).exp()).powi(2) - a;
    let (mut lo, mut hi) = (-340.0_f64, 800.0_f64);
    if g(hi) <= 0.0 {
        return hi;
    }
    // Newton from a reasonable start, safeguarded by the bracket.
    let mut u = if a >= 0.0 { a.min(700.0).max(0.0) } else { -0.5 * (-a).ln().max(0.0) };
    for _ in 0..200 {
        let e = (-u).exp();
        let val = u * (1.0 + e).powi(2) - a;
        if val > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let deriv = (1.0 + e) * (1.0 + e - 2.0 * u * e);
        let mut next = u - val / deriv;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 1e-15 * (1.0 + u.abs()) || hi - lo < 1e-14 {
            u = next;
            break;
        }
        u = next;
    }
    u
}

/// KKT solution for CBPS: `h(w_i) = n (z_i - μ)` with `Σ w_i = 1`.
fn cbps_conjugate(z: &[f64], warm: Option<f64>) -> Result<ConjugateSolution> {
    let n = z.len();
    let nf = n as f64;
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let zmin = z.iter().copied().fold(f64::INFINITY, f64::min);
    let h_uniform = cbps_h(1.0 / nf) / nf;
    // Σ w(μ) is decreasing in μ; these bound the root.
    let (mut lo, mut hi) = (zmin - h_uniform, zmax - h_uniform);
    let mut w = vec![0.0; n];
    let fill = |mu: f64, w: &mut [f64]| -> (f64, f64) {
        let mut sum = 0.0;
        let mut dsum = 0.0;
        for (wi, &zi) in w.iter_mut().zip(z) {
            let s = cbps_h_inverse(nf * (zi - mu));
            *wi = s;
            sum += s;
            // ds/dμ = -n s³ / g(s), with g(s) = 2 log((1-s)/s) + 1/(1-s) > 0.
            if s > 0.0 && s < 1.0 {
                let gs = 2.0 * ((1.0 - s) / s).ln() + 1.0 / (1.0 - s);
                dsum -= nf * s * s * s / gs;
            }
        }
        (sum - 1.0, dsum)
    };
    let mut mu = match warm {
        Some(m) if m > lo && m < hi => m,
        _ => 0.5 * (lo + hi),
    };
    let mut converged = hi - lo <= 0.0;
    for _ in 0..300 {
        let (resid, d) = fill(mu, &mut w);
        if resid.abs() < 1e-15 {
            converged = true;
            break;
        }
        if resid > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let mut next = if d < 0.0 { mu - resid / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) <= 1e-15 * (1.0 + mu.abs()) {
            mu = next;
            converged = true;
            break;
        }
        mu = next;
    }
    if !converged {
        let (resid, _) = fill(mu, &mut w);
        if resid.abs() > 1e-9 {
            return Err(Error::solver(
                "cbps conjugate multiplier search did not converge",
                format!("mu={mu} bracket=[{lo}, {hi}] residual={resid}"),
            ));
        }
    }
    fill(mu, &mut w);
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    let value = numeric::dot(z, &w) - DivergenceSpec::Cbps.value(&w);
    Ok(ConjugateSolution {
        value,
        argmax: w,
        multiplier: mu,
    })
}

//! Continuation descent for the balancing objectives.
//!
//! The objectives contain `max_j |r_j|` (and for the flexible program a max
//! over the sign `z`), so they are only piecewise smooth. Each stage
//! minimises a log-sum-exp surrogate at temperature `τ` by L-BFGS with an
//! Armijo backtracking search, warm-started from the previous stage; `τ`
//! then shrinks until `tau_min`. The exact objective is evaluated at every
//! iterate and the best point seen is returned, so the reported trace of
//! best exact values is nonincreasing.

use crate::error::{Error, Result};

pub(crate) trait Objective {
    fn dim(&self) -> usize;

    /// Exact objective and surrogate at `theta`.
    fn values(&mut self, theta: &[f64], tau: f64) -> Result<(f64, f64)>;

    /// Exact objective, surrogate, and surrogate gradient into `grad`.
    fn gradient(&mut self, theta: &[f64], tau: f64, grad: &mut [f64]) -> Result<(f64, f64)>;
}

#[derive(Debug, Clone)]
pub(crate) struct DescentConfig {
    pub max_iters: usize,
    pub grad_tolerance: f64,
    pub initial_step: f64,
    pub tau0: f64,
    pub tau_min: f64,
    /// Stop (at `tau_min`) when the exact objective improves by less than
    /// `improvement_tol · (1 + |f|)` over this many iterations.
    pub window: usize,
    pub improvement_tol: f64,
}

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MEMORY: usize = 10;
const STAGE_SHRINK: f64 = 0.1;
const STAGE_ACCURACY: f64 = 1e-3;

#[derive(Debug, Clone)]
pub(crate) struct DescentOutcome {
    pub theta: Vec<f64>,
    /// Best exact value after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Limited-memory inverse Hessian approximation.
struct Lbfgs {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
}

impl Lbfgs {
    fn new() -> Self {
        Self {
            s: Vec::new(),
            y: Vec::new(),
            rho: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() || !sy.is_finite() {
            return;
        }
        if self.s.len() == MEMORY {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
        self.rho.push(1.0 / sy);
    }

    /// `−H g` by the two-loop recursion, or `None` without curvature pairs.
    fn direction(&self, grad: &[f64]) -> Option<Vec<f64>> {
        let m = self.s.len();
        if m == 0 {
            return None;
        }
        let mut q = grad.to_vec();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let last = m - 1;
        let gamma = dot(&self.s[last], &self.y[last]) / dot(&self.y[last], &self.y[last]);
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
        for i in 0..m {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        Some(q)
    }
}

struct Point {
    theta: Vec<f64>,
    grad: Vec<f64>,
    exact: f64,
    smooth: f64,
}

fn evaluate<O: Objective>(obj: &mut O, theta: Vec<f64>, tau: f64) -> Result<Point> {
    let mut grad = vec![0.0; theta.len()];
    let (exact, smooth) = obj.gradient(&theta, tau, &mut grad)?;
    if !exact.is_finite() || !smooth.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::solver(
            "objective or gradient is not finite",
            format!("value={exact} surrogate={smooth} tau={tau}"),
        ));
    }
    Ok(Point {
        theta,
        grad,
        exact,
        smooth,
    })
}

/// Armijo search along `dir` on the surrogate. Returns the new point.
fn line_search<O: Objective>(obj: &mut O, at: &Point, dir: &[f64], t0: f64, tau: f64) -> Result<Option<Point>> {
    let slope = dot(&at.grad, dir);
    if !(slope < 0.0) {
        return Ok(None);
    }
    let scale = 1.0 + inf_norm(&at.theta);
    let dnorm = inf_norm(dir);
    let mut t = t0;
    let mut cand = vec![0.0; at.theta.len()];
    while t * dnorm > 1e-15 * scale {
        for ((c, th), d) in cand.iter_mut().zip(&at.theta).zip(dir) {
            *c = th + t * d;
        }
        let (_, fs) = obj.values(&cand, tau)?;
        if fs.is_finite() && fs <= at.smooth + ARMIJO_C * t * slope {
            return evaluate(obj, cand, tau).map(Some);
        }
        t *= BACKTRACK;
    }
    Ok(None)
}

pub(crate) fn minimize<O: Objective>(obj: &mut O, init: Vec<f64>, cfg: &DescentConfig) -> Result<DescentOutcome> {
    debug_assert_eq!(init.len(), obj.dim());
    let mut tau = cfg.tau0.max(cfg.tau_min);
    let mut cur = evaluate(obj, init, tau)?;
    let mut best = (cur.theta.clone(), cur.exact);
    let mut trace = vec![cur.exact];
    let mut memory = Lbfgs::new();
    let mut stage_trace = vec![cur.smooth];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        iterations += 1;
        let gnorm = inf_norm(&cur.grad);
        // Intermediate stages only need accuracy on the scale of their own
        // smoothing error.
        let slack = if tau > cfg.tau_min { STAGE_ACCURACY * tau } else { 0.0 };
        let stalled = stage_trace.len() > cfg.window && {
            let old = stage_trace[stage_trace.len() - 1 - cfg.window];
            old - cur.smooth <= cfg.improvement_tol * (1.0 + cur.smooth.abs()) + slack
        };
        let mut next = None;
        if gnorm > cfg.grad_tolerance && !stalled {
            if let Some(dir) = memory.direction(&cur.grad) {
                next = line_search(obj, &cur, &dir, 1.0, tau)?;
            }
            if next.is_none() {
                memory.clear();
                let dir: Vec<f64> = cur.grad.iter().map(|g| -g).collect();
                next = line_search(obj, &cur, &dir, cfg.initial_step, tau)?;
            }
        }
        match next {
            Some(p) => {
                let s: Vec<f64> = p.theta.iter().zip(&cur.theta).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = p.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
                memory.push(s, y);
                cur = p;
                if cur.exact < best.1 {
                    best = (cur.theta.clone(), cur.exact);
                }
                trace.push(best.1);
                stage_trace.push(cur.smooth);
            }
            None => {
                if tau <= cfg.tau_min {
                    converged = true;
                    break;
                }
                tau = (tau * STAGE_SHRINK).max(cfg.tau_min);
                memory.clear();
                cur = evaluate(obj, cur.theta, tau)?;
                stage_trace = vec![cur.smooth];
            }
        }
    }

    Ok(DescentOutcome {
        theta: best.0,
        trace,
        iterations,
        converged,
    })
}

//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use flexbal::{BalanceProblem, DivergenceSpec, Matrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_row_major(n, d, uniform_vec(rng, n * d, lo, hi))
}

/// A problem with covariates in `[-1, 1]`, a constant last column, and outcomes
/// from a coefficient vector of ℓ1 norm `k_true`.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize, k_true: f64, rho: f64) -> BalanceProblem {
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut r = uniform_vec(rng, d - 1, -1.0, 1.0);
        r.push(1.0);
        rows.push(r);
    }
    let x = Matrix::from_rows(&rows);
    let raw = uniform_vec(rng, d, -1.0, 1.0);
    let l1: f64 = raw.iter().map(|v| v.abs()).sum();
    let v: Vec<f64> = raw.iter().map(|c| c * k_true / l1).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
    let mut target = uniform_vec(rng, d - 1, -0.3, 0.3);
    target.push(1.0);
    BalanceProblem::new(x, y, Arc::from(target), k_true, rho, 0.05).unwrap()
}

/// `sup_w zᵀw − D(w)` over the simplex by exact pairwise coordinate ascent:
/// mass moves between two coordinates at a time, each move maximised by
/// golden-section search. Uses only divergence values.
pub fn brute_conjugate(spec: &DivergenceSpec, z: &[f64]) -> f64 {
    let n = z.len();
    let mut w = vec![1.0 / n as f64; n];
    let value = |w: &[f64]| -> f64 {
        let lin: f64 = w.iter().zip(z).map(|(a, b)| a * b).sum();
        let d = spec.value(w);
        if d.is_finite() {
            lin - d
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut best = value(&w);
    for _ in 0..5000 {
        let before = best;
        for i in 0..n {
            for j in i + 1..n {
                let s = w[i] + w[j];
                if s <= 0.0 {
                    continue;
                }
                let mut trial = w.clone();
                let mut eval = |t: f64| {
                    trial[i] = t;
                    trial[j] = s - t;
                    value(&trial)
                };
                let t = golden_max(&mut eval, 0.0, s);
                let v = eval(t);
                if v > best {
                    best = v;
                    w[i] = t;
                    w[j] = s - t;
                }
            }
        }
        if best - before <= 1e-15 * (1.0 + best.abs()) {
            break;
        }
    }
    best
}

fn golden_max(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // The end points are candidates too when the optimum sits on the boundary.
    [lo, hi, mid]
        .into_iter()
        .max_by(|x, y| f(*x).partial_cmp(&f(*y)).unwrap_or(std::cmp::Ordering::Less))
        .unwrap_or(mid)
}

/// `max cᵀx` subject to `A x = b`, `x ≥ 0`, by enumerating every basis.
/// `None` when infeasible. Intended for at most a handful of variables.
pub fn vertex_max(a_full: &DMatrix<f64>, b_full: &DVector<f64>, c: &[f64]) -> Option<f64> {
    // Keep a maximal set of independent rows; the rest are checked at the end.
    let mut keep: Vec<usize> = Vec::new();
    for r in 0..a_full.nrows() {
        let mut trial = keep.clone();
        trial.push(r);
        let sub = a_full.select_rows(trial.iter());
        if sub.rank(1e-10) == trial.len() {
            keep = trial;
        }
    }
    let a = a_full.select_rows(keep.iter());
    let b = b_full.select_rows(keep.iter());
    let (a, b) = (&a, &b);
    let (m, nv) = (a.nrows(), a.ncols());
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..m).collect();
    if m > nv {
        return None;
    }
    loop {
        let basis = DMatrix::from_fn(m, m, |r, k| a[(r, idx[k])]);
        if let Some(sol) = basis.clone().lu().solve(b) {
            let residual = (&basis * &sol - b).amax();
            let mut x = DVector::zeros(nv);
            for (k, &j) in idx.iter().enumerate() {
                x[j] = sol[k];
            }
            let full_residual = (a_full * &x - b_full).amax();
            if residual <= 1e-9 && full_residual <= 1e-9 && sol.iter().all(|v| *v >= -1e-10) {
                let val: f64 = idx.iter().zip(sol.iter()).map(|(&j, v)| c[j] * v.max(0.0)).sum();
                best = Some(best.map_or(val, |bv: f64| bv.max(val)));
            }
        }
        // Next combination in lexicographic order.
        let mut k = m;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < nv - m + k {
                idx[k] += 1;
                for l in k + 1..m {
                    idx[l] = idx[l - 1] + 1;
                }
                break;
            }
        }
    }
}

/// `β_z` of a problem by vertex enumeration over `(u, w, slack)`.
pub fn beta_by_vertices(problem: &BalanceProblem, z: i8) -> Option<f64> {
    let (n, d) = (problem.n(), problem.d());
    let nv = 2 * d + 1;
    let m = n + 1;
    let mut a = DMatrix::zeros(m, nv);
    let mut b = DVector::zeros(m);
    for i in 0..n {
        for j in 0..d {
            let v = problem.x().get(i, j);
            a[(i, j)] = v;
            a[(i, d + j)] = -v;
        }
        b[i] = problem.y()[i];
    }
    for j in 0..nv {
        a[(n, j)] = 1.0;
    }
    b[n] = problem.k();
    let norm = problem.target().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let zf = f64::from(z);
    let mut c = vec![0.0; nv];
    for j in 0..d {
        c[j] = -zf * problem.target()[j] / norm;
        c[d + j] = zf * problem.target()[j] / norm;
    }
    vertex_max(&a, &b, &c).map(|best| (problem.conc_radius() * problem.k() / norm + best).max(0.0))
}

/// Central differences of `f` at `x` with a step relative to each coordinate.
pub fn central_gradient(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let step = h * (1.0 + x[i].abs());
        p[i] = x[i] + step;
        let up = f(&p);
        p[i] = x[i] - step;
        let down = f(&p);
        p[i] = x[i];
        g[i] = (up - down) / (2.0 * step);
    }
    g
}

/// Largest entrywise error relative to the larger gradient norm.
pub fn relative_gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
        / scale
}

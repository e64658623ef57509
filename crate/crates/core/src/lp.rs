//! Dense revised simplex for small linear programs.
//!
//! Problems are stated as
//!
//! ```text
//! maximise   cᵀx
//! subject to A_eq x = b_eq
//!            A_le x ≤ b_le
//!            0 ≤ x_j ≤ u_j   (u_j may be +∞)
//! ```
//!
//! Finite upper bounds become extra `≤` rows. A two-phase method is used:
//! phase one drives artificial variables out of the basis, phase two
//! optimises the real objective. The basis inverse is kept explicitly and
//! updated by product-form pivots, with periodic refactorisation. Pricing is
//! Dantzig's rule. After a run of degenerate pivots the leaving row is chosen
//! by the lexicographic rule on the rows of `[x_B | B⁻¹]`, which behaves like an
//! infinitesimal perturbation of the right-hand side; Bland's rule is the
//! last resort if that run persists. Clamping tiny negative basic values
//! during pivots can leave the final basis marginally infeasible; a dual
//! simplex pass repairs that before the point is read.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const HARRIS_TOL: f64 = 1e-9;
/// Tied rows with a pivot below this fraction of the largest tied pivot are skipped.
const TIE_PIVOT_FLOOR: f64 = 1e-3;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN_FOR_LEXICO: usize = 50;
const DEGENERATE_RUN_FOR_BLAND: usize = 20_000;
const REPAIR_ROUNDS: usize = 3;
/// Phase one stops once the artificial mass is at noise level.
const PHASE_ONE_TOL: f64 = 1e-9;
/// Negative basic values below this (relative to the right-hand side) are repaired.
const REPAIR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// A linear program in the form documented at module level.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub le_rows: Vec<Vec<f64>>,
    pub le_rhs: Vec<f64>,
    /// Optional per-variable upper bounds; empty means all `+∞`.
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest violation of any constraint at `x`.
    pub max_residual: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) -> &mut Self {
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let bad_row = self.eq_rows.iter().chain(&self.le_rows).any(|r| r.len() != n);
        if bad_row || (!self.upper.is_empty() && self.upper.len() != n) {
            return Err(Error::validation("linear program rows must match the variable count"));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.eq_rows.iter().chain(&self.le_rows).flatten().all(|v| v.is_finite())
            && self.eq_rhs.iter().chain(&self.le_rhs).all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("linear program data must be finite"));
        }
        Ok(())
    }

    /// Drops exact copies of constraint rows. Repeated `≤` rows keep the
    /// tightest right-hand side. Copies make vertices degenerate, which can
    /// stall the simplex method, and never change the feasible set.
    fn without_duplicate_rows(&self) -> LinearProgram {
        fn key(row: &[f64]) -> Vec<u64> {
            row.iter().map(|&v| if v == 0.0 { 0 } else { v.to_bits() }).collect()
        }
        let mut out = LinearProgram {
            objective: self.objective.clone(),
            upper: self.upper.clone(),
            ..Default::default()
        };
        let mut seen_eq = HashMap::new();
        for (row, &b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            let mut k = key(row);
            k.push(if b == 0.0 { 0 } else { b.to_bits() });
            seen_eq.entry(k).or_insert_with(|| {
                out.add_eq(row.clone(), b);
            });
        }
        let mut seen_le: HashMap<Vec<u64>, usize> = HashMap::new();
        for (row, &b) in self.le_rows.iter().zip(&self.le_rhs) {
            match seen_le.get(&key(row)) {
                Some(&i) => out.le_rhs[i] = out.le_rhs[i].min(b),
                None => {
                    seen_le.insert(key(row), out.le_rows.len());
                    out.add_le(row.clone(), b);
                }
            }
        }
        out
    }

    /// Maximum constraint violation of `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, &b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dot(row, x) - b).abs());
        }
        for (row, &b) in self.le_rows.iter().zip(&self.le_rhs) {
            worst = worst.max(dot(row, x) - b);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(-xj);
            if let Some(&u) = self.upper.get(j) {
                if u.is_finite() {
                    worst = worst.max(xj - u);
                }
            }
        }
        worst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves a linear program. Infeasible and unbounded programs are reported
/// through [`LpSolution::status`]; numerical breakdown is an error.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let mut sf = StandardForm::build(&lp.without_duplicate_rows());
    let iter_cap = 50 * (sf.rows + sf.cols) + 1000;

    // Phase one: minimise the sum of artificials (maximise its negative).
    let mut phase1 = vec![0.0; sf.cols];
    for j in sf.artificial_start..sf.cols {
        phase1[j] = -1.0;
    }
    let mut iters = sf.run(&phase1, iter_cap, true)?;
    sf.refactor()?;
    let infeas = sf.artificial_mass();
    if infeas > FEAS_TOL * (1.0 + sf.rhs_scale) {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: vec![0.0; lp.num_vars()],
            objective: f64::NAN,
            max_residual: infeas,
            iterations: iters,
        });
    }
    sf.drive_out_artificials()?;

    let mut phase2 = vec![0.0; sf.cols];
    phase2[..lp.num_vars()].copy_from_slice(&lp.objective);
    match sf.run_feasible(&phase2, iter_cap) {
        Ok(k) => iters += k,
        Err(SimplexStop::Unbounded) => {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: vec![0.0; lp.num_vars()],
                objective: f64::INFINITY,
                max_residual: f64::NAN,
                iterations: iters,
            })
        }
        Err(e) => return Err(e.into()),
    }
    // Fresh factorisation plus one refinement step before reading the point.
    sf.refactor()?;
    sf.refine();
    let x = sf.primal(lp.num_vars());
    let max_residual = lp.residual(&x);
    if max_residual > FEAS_TOL * (1.0 + sf.rhs_scale) {
        return Err(Error::solver(
            "simplex returned a point violating the constraints",
            format!("max_residual={max_residual:e} iterations={iters} basis={:?}", sf.basis),
        ));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: dot(&lp.objective, &x),
        x,
        max_residual,
        iterations: iters,
    })
}

#[derive(Debug, Clone, Copy)]
enum LeavingRule {
    Harris,
    Lexicographic,
    Bland,
}

#[derive(Debug)]
enum SimplexStop {
    Unbounded,
    IterationCap(usize),
    Singular(String),
}

impl From<SimplexStop> for Error {
    fn from(s: SimplexStop) -> Self {
        match s {
            SimplexStop::Unbounded => Error::Lp {
                status: LpStatus::Unbounded,
            },
            SimplexStop::IterationCap(n) => {
                Error::solver("simplex iteration cap exceeded", format!("iterations={n}"))
            }
            SimplexStop::Singular(msg) => Error::solver("basis became singular", msg),
        }
    }
}

/// `A x = b, x ≥ 0, b ≥ 0` with slacks and one artificial per row.
struct StandardForm {
    rows: usize,
    cols: usize,
    /// Column-major constraint matrix.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    artificial_start: usize,
    basis: Vec<usize>,
    /// Row-major explicit inverse of the basis matrix.
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots_since_refactor: usize,
    rhs_scale: f64,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut le_rows: Vec<(Vec<f64>, f64)> = lp.le_rows.iter().cloned().zip(lp.le_rhs.iter().copied()).collect();
        for (j, &u) in lp.upper.iter().enumerate() {
            if u.is_finite() {
                let mut r = vec![0.0; n];
                r[j] = 1.0;
                le_rows.push((r, u));
            }
        }
        let m_eq = lp.eq_rows.len();
        let m_le = le_rows.len();
        let rows = m_eq + m_le;
        let artificial_start = n + m_le;
        let cols = artificial_start + rows;
        let mut a = vec![vec![0.0; rows]; cols];
        let mut b = vec![0.0; rows];
        for (i, (row, &rhs)) in lp.eq_rows.iter().zip(&lp.eq_rhs).enumerate() {
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                a[j][i] = sign * row[j];
            }
            b[i] = sign * rhs;
        }
        for (k, (row, rhs)) in le_rows.iter().enumerate() {
            let i = m_eq + k;
            let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                a[j][i] = sign * row[j];
            }
            a[n + k][i] = sign;
            b[i] = sign * rhs;
        }
        for i in 0..rows {
            a[artificial_start + i][i] = 1.0;
        }
        // A `≤` row with nonnegative right-hand side starts on its slack.
        let basis: Vec<usize> = (0..rows)
            .map(|i| {
                if i >= m_eq && a[n + i - m_eq][i] > 0.0 {
                    n + i - m_eq
                } else {
                    artificial_start + i
                }
            })
            .collect();
        let mut binv = vec![0.0; rows * rows];
        for i in 0..rows {
            binv[i * rows + i] = 1.0;
        }
        let rhs_scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        StandardForm {
            rows,
            cols,
            a,
            xb: b.clone(),
            b,
            artificial_start,
            basis,
            binv,
            pivots_since_refactor: 0,
            rhs_scale,
        }
    }

    /// `B⁻¹ a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.rows;
        let col = &self.a[j];
        let mut out = vec![0.0; m];
        for (k, &ak) in col.iter().enumerate() {
            if ak != 0.0 {
                for i in 0..m {
                    out[i] += self.binv[i * m + k] * ak;
                }
            }
        }
        out
    }

    /// Rebuilds `B⁻¹` by Gauss-Jordan elimination with partial pivoting.
    fn refactor(&mut self) -> std::result::Result<(), SimplexStop> {
        self.factorize()?;
        for v in &mut self.xb {
            *v = v.max(0.0);
        }
        Ok(())
    }

    /// Rebuilds `B⁻¹` and sets `x_B = B⁻¹ b` without clamping.
    fn factorize(&mut self) -> std::result::Result<(), SimplexStop> {
        let m = self.rows;
        let mut bmat = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat[i * m + c] = self.a[j][i];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (p, pv) = (c..m)
                .map(|r| (r, bmat[r * m + c].abs()))
                .fold((c, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv < 1e-12 {
                return Err(SimplexStop::Singular(format!("refactor pivot {pv:e} at column {c}")));
            }
            if p != c {
                for k in 0..m {
                    bmat.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = bmat[c * m + c];
            for k in 0..m {
                bmat[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = bmat[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            bmat[r * m + k] -= f * bmat[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        for i in 0..m {
            self.xb[i] = (0..m).map(|k| self.binv[i * m + k] * self.b[k]).sum::<f64>();
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// One step of iterative refinement on `B x_B = b`.
    fn refine(&mut self) {
        let m = self.rows;
        let mut r = self.b.clone();
        for (c, &j) in self.basis.iter().enumerate() {
            let v = self.xb[c];
            if v != 0.0 {
                for (ri, aij) in r.iter_mut().zip(&self.a[j]) {
                    *ri -= aij * v;
                }
            }
        }
        for i in 0..m {
            let corr: f64 = (0..m).map(|k| self.binv[i * m + k] * r[k]).sum();
            self.xb[i] = (self.xb[i] + corr).max(0.0);
        }
    }

    fn pivot(&mut self, row: usize, entering: usize, d: &[f64]) -> std::result::Result<(), SimplexStop> {
        self.pivot_with(row, entering, d, true)
    }

    /// Basis change; `clamp` keeps `x_B` nonnegative, as primal steps require.
    fn pivot_with(&mut self, row: usize, entering: usize, d: &[f64], clamp: bool) -> std::result::Result<(), SimplexStop> {
        let floor = if clamp { 0.0 } else { f64::NEG_INFINITY };
        let m = self.rows;
        let piv = d[row];
        let theta = self.xb[row] / piv;
        for i in 0..m {
            if i != row {
                self.xb[i] = (self.xb[i] - theta * d[i]).max(floor);
            }
        }
        self.xb[row] = theta.max(floor);
        for k in 0..m {
            self.binv[row * m + k] /= piv;
        }
        for i in 0..m {
            if i != row && d[i] != 0.0 {
                let f = d[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[row * m + k];
                }
            }
        }
        self.basis[row] = entering;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            if clamp {
                self.refactor()?;
            } else {
                self.factorize()?;
            }
        }
        Ok(())
    }

    /// Primal simplex for `max costᵀx` from the current feasible basis.
    /// In phase two, artificial columns may not enter.
    fn run(&mut self, cost: &[f64], cap: usize, phase_one: bool) -> std::result::Result<usize, SimplexStop> {
        let m = self.rows;
        let mut degenerate_run = 0usize;
        let mut in_basis = vec![false; self.cols];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        for it in 0..cap {
            // Duals y = c_Bᵀ B⁻¹.
            let mut y = vec![0.0; m];
            for (r, &j) in self.basis.iter().enumerate() {
                let cb = cost[j];
                if cb != 0.0 {
                    for k in 0..m {
                        y[k] += cb * self.binv[r * m + k];
                    }
                }
            }
            if phase_one && self.artificial_mass() <= PHASE_ONE_TOL * (1.0 + self.rhs_scale) {
                return Ok(it);
            }
            let bland = degenerate_run >= DEGENERATE_RUN_FOR_BLAND;
            let rule = if bland {
                LeavingRule::Bland
            } else if degenerate_run >= DEGENERATE_RUN_FOR_LEXICO {
                LeavingRule::Lexicographic
            } else {
                LeavingRule::Harris
            };
            let limit = if phase_one { self.cols } else { self.artificial_start };
            let mut rejected = vec![false; limit];
            let (q, d, r, ratio) = loop {
                let mut entering = None;
                let mut best = PIVOT_TOL;
                for j in 0..limit {
                    if in_basis[j] || rejected[j] {
                        continue;
                    }
                    let rc = cost[j] - dot(&y, &self.a[j]);
                    if rc > best {
                        entering = Some(j);
                        if bland {
                            break;
                        }
                        best = rc;
                    }
                }
                let Some(q) = entering else {
                    return Ok(it);
                };
                let d = self.ftran(q);
                match self.ratio_test(&d, rule) {
                    Some((r, ratio)) => break (q, d, r, ratio),
                    // Only entries at noise level bound the step: the column is
                    // numerically ambiguous rather than a genuine ray.
                    None if d.iter().any(|&v| v > 1e-12) => rejected[q] = true,
                    None if phase_one => rejected[q] = true,
                    None => return Err(SimplexStop::Unbounded),
                }
            };
            degenerate_run = if ratio <= 1e-12 { degenerate_run + 1 } else { 0 };
            in_basis[self.basis[r]] = false;
            in_basis[q] = true;
            self.pivot(r, q, &d)?;
        }
        Err(SimplexStop::IterationCap(cap))
    }

    /// Dual simplex from a phase-two basis that is optimal for `cost` but may
    /// be slightly primal infeasible.
    fn dual_cleanup(&mut self, cost: &[f64], cap: usize) -> std::result::Result<usize, SimplexStop> {
        let m = self.rows;
        let tol = REPAIR_TOL * (1.0 + self.rhs_scale);
        let limit = self.artificial_start;
        let mut in_basis = vec![false; self.cols];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        for it in 0..cap {
            let Some((r, _)) = self
                .xb
                .iter()
                .enumerate()
                .filter(|(_, &v)| v < -tol)
                .min_by(|a, b| a.1.total_cmp(b.1))
            else {
                for v in &mut self.xb {
                    *v = v.max(0.0);
                }
                return Ok(it);
            };
            let mut y = vec![0.0; m];
            for (i, &j) in self.basis.iter().enumerate() {
                let cb = cost[j];
                if cb != 0.0 {
                    for k in 0..m {
                        y[k] += cb * self.binv[i * m + k];
                    }
                }
            }
            let rho = &self.binv[r * m..(r + 1) * m];
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..limit {
                if in_basis[j] {
                    continue;
                }
                let alpha = dot(rho, &self.a[j]);
                if alpha >= -PIVOT_TOL {
                    continue;
                }
                let rc = (cost[j] - dot(&y, &self.a[j])).min(0.0);
                let ratio = rc / alpha;
                let better = match entering {
                    None => true,
                    Some((_, best, best_alpha)) => {
                        ratio < best - 1e-12 || (ratio <= best + 1e-12 && alpha.abs() > best_alpha.abs())
                    }
                };
                if better {
                    entering = Some((j, ratio, alpha));
                }
            }
            // No repairing column: leave the point to the final residual check.
            let Some((q, _, _)) = entering else {
                for v in &mut self.xb {
                    *v = v.max(0.0);
                }
                return Ok(it);
            };
            let d = self.ftran(q);
            in_basis[self.basis[r]] = false;
            in_basis[q] = true;
            self.pivot_with(r, q, &d, false)?;
        }
        Err(SimplexStop::IterationCap(cap))
    }

    /// Phase-two primal simplex, then repair of any infeasibility hidden by
    /// clamping, repeated until the unclamped basis is feasible.
    fn run_feasible(&mut self, cost: &[f64], cap: usize) -> std::result::Result<usize, SimplexStop> {
        let mut iters = self.run(cost, cap, false)?;
        for _ in 0..REPAIR_ROUNDS {
            self.factorize()?;
            let repairs = self.dual_cleanup(cost, cap)?;
            if repairs == 0 {
                break;
            }
            iters += repairs + self.run(cost, cap, false)?;
        }
        Ok(iters)
    }

    /// Sum of the basic artificial variables.
    fn artificial_mass(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(&j, _)| j >= self.artificial_start)
            .map(|(_, &v)| v)
            .sum()
    }

    /// Leaving row for an entering column with `d = B⁻¹ a_q`.
    fn ratio_test(&self, d: &[f64], rule: LeavingRule) -> Option<(usize, f64)> {
        match rule {
            LeavingRule::Harris => self.ratio_test_harris(d),
            LeavingRule::Lexicographic => self.ratio_test_lexico(d),
            LeavingRule::Bland => self.ratio_test_bland(d),
        }
    }

    /// Harris' two-pass test: the largest pivot among rows whose ratio is
    /// within a small feasibility tolerance of the minimum.
    fn ratio_test_harris(&self, d: &[f64]) -> Option<(usize, f64)> {
        let bound = d
            .iter()
            .zip(&self.xb)
            .filter(|(&di, _)| di > PIVOT_TOL)
            .map(|(&di, &x)| (x + HARRIS_TOL) / di)
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        (0..d.len())
            .filter(|&i| d[i] > PIVOT_TOL && self.xb[i] / d[i] <= bound)
            .max_by(|&i, &j| d[i].total_cmp(&d[j]))
            .map(|i| (i, self.xb[i] / d[i]))
    }

    /// Rows attaining the minimum ratio, ignoring pivots far smaller than the
    /// largest tied one.
    fn min_ratio_ties(&self, d: &[f64]) -> Vec<usize> {
        let min = (0..d.len())
            .filter(|&i| d[i] > PIVOT_TOL)
            .map(|i| self.xb[i] / d[i])
            .fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Vec::new();
        }
        let tol = 1e-12 * (1.0 + min.abs());
        let tied: Vec<usize> = (0..d.len())
            .filter(|&i| d[i] > PIVOT_TOL && self.xb[i] / d[i] <= min + tol)
            .collect();
        let largest = tied.iter().map(|&i| d[i]).fold(0.0, f64::max);
        tied.into_iter().filter(|&i| d[i] >= TIE_PIVOT_FLOOR * largest).collect()
    }

    /// Among tied rows, the lexicographically smallest row of `B⁻¹ / d_i`.
    fn ratio_test_lexico(&self, d: &[f64]) -> Option<(usize, f64)> {
        let m = self.rows;
        let row = |i: usize, k: usize| self.binv[i * m + k] / d[i];
        let mut best: Option<usize> = None;
        for i in self.min_ratio_ties(d) {
            let Some(b) = best else {
                best = Some(i);
                continue;
            };
            let mut order = std::cmp::Ordering::Equal;
            for k in 0..m {
                let (x, y) = (row(i, k), row(b, k));
                if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                    order = x.total_cmp(&y);
                    break;
                }
            }
            if order.then(self.basis[i].cmp(&self.basis[b])).is_lt() {
                best = Some(i);
            }
        }
        best.map(|i| (i, self.xb[i] / d[i]))
    }

    /// Among tied rows, the one whose basic variable has the lowest index.
    fn ratio_test_bland(&self, d: &[f64]) -> Option<(usize, f64)> {
        self.min_ratio_ties(d)
            .into_iter()
            .min_by_key(|&i| self.basis[i])
            .map(|i| (i, self.xb[i] / d[i]))
    }

    /// Pivots zero-valued artificials out of the basis where a real column can replace them.
    fn drive_out_artificials(&mut self) -> Result<()> {
        for r in 0..self.rows {
            if self.basis[r] < self.artificial_start {
                continue;
            }
            let m = self.rows;
            let mut choice = None;
            for j in 0..self.artificial_start {
                if self.basis.contains(&j) {
                    continue;
                }
                let alpha: f64 = (0..m).map(|k| self.binv[r * m + k] * self.a[j][k]).sum();
                if alpha.abs() > 1e-7 {
                    choice = Some(j);
                    break;
                }
            }
            if let Some(j) = choice {
                let d = self.ftran(j);
                self.pivot(r, j, &d).map_err(Error::from)?;
            }
            // Otherwise the row is redundant; the artificial stays at zero and
            // is barred from re-entering in phase two.
        }
        Ok(())
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < n {
                x[j] = self.xb[r];
            }
        }
        x
    }
}

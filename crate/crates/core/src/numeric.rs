//! Small numeric kernels shared across the crate.
//!
//! Reductions run left to right so results are reproducible bit for bit.

use serde::{Deserialize, Serialize};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major storage. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            assert_eq!(r.len(), d, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: n, cols: d, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// `out = Xᵀ w`, accumulated row by row.
    pub fn tr_mul_vec(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += wi * x;
            }
        }
    }

    /// `out = X v`.
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    /// Column means, i.e. `Xᵀ u` for the uniform vector.
    pub fn column_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += x;
            }
        }
        let n = self.rows as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies selected rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_row_major(idx.len(), self.cols, data)
    }

    /// Copies selected columns into a new matrix.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Matrix::from_row_major(self.rows, idx.len(), data)
    }

    /// Appends a column holding `value` in every row.
    pub fn with_constant_column(&self, value: f64) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * (self.cols + 1));
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.push(value);
        }
        Matrix::from_row_major(self.rows, self.cols + 1, data)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `log Σ exp(v_i)`, shifted by the maximum.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    let s: f64 = v.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// `log (1/n) Σ exp(v_i)`.
pub fn log_mean_exp(v: &[f64]) -> f64 {
    log_sum_exp(v) - (v.len() as f64).ln()
}

/// Softmax into `out`; also returns the log-normaliser.
pub fn softmax_into(v: &[f64], out: &mut [f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
    m + s.ln()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    softmax_into(v, &mut out);
    out
}

/// Smooth maximum of two values, `τ log(e^{a/τ} + e^{b/τ})`, with the weights
/// on `a` and `b`. With `τ ≤ 0` it is the plain maximum, splitting ties evenly.
pub fn smooth_max2(a: f64, b: f64, tau: f64) -> (f64, f64, f64) {
    if tau <= 0.0 {
        return if a > b {
            (a, 1.0, 0.0)
        } else if b > a {
            (b, 0.0, 1.0)
        } else {
            (a, 0.5, 0.5)
        };
    }
    let m = a.max(b);
    let ea = ((a - m) / tau).exp();
    let eb = ((b - m) / tau).exp();
    let s = ea + eb;
    (m + tau * s.ln(), ea / s, eb / s)
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maximum absolute entry with the lowest index on ties. Returns `(value, index)`.
pub fn max_abs(v: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (j, &x) in v.iter().enumerate() {
        if x.abs() > best.0 {
            best = (x.abs(), j);
        }
    }
    best
}

pub fn norm_l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    max_abs(v).0.max(0.0)
}

/// Median of a slice (average of the middle pair for even lengths). NaN on empty input.
pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Smooth upper bound on `max_j |r_j|`: `τ log Σ_j (e^{r_j/τ} + e^{-r_j/τ})`.
///
/// Exceeds the true maximum by at most `τ log(2d)`. Writes `∂/∂r_j` into `grad` when given.
/// With `τ ≤ 0` this is the exact maximum, and `grad` receives the subgradient
/// `sign(r_j) e_j` at the lowest maximising index.
pub fn smooth_max_abs(r: &[f64], tau: f64, grad: Option<&mut [f64]>) -> f64 {
    let (m, jmax) = max_abs(r);
    let m = m.max(0.0);
    if tau <= 0.0 {
        if let Some(g) = grad {
            g.iter_mut().for_each(|v| *v = 0.0);
            if !r.is_empty() {
                g[jmax] = if r[jmax] < 0.0 { -1.0 } else { 1.0 };
            }
        }
        return m;
    }
    let mut s = 0.0;
    for &x in r {
        s += ((x - m) / tau).exp() + ((-x - m) / tau).exp();
    }
    if let Some(g) = grad {
        for (gj, &x) in g.iter_mut().zip(r) {
            *gj = (((x - m) / tau).exp() - ((-x - m) / tau).exp()) / s;
        }
    }
    m + tau * s.ln()
}

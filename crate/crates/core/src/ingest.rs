//! Loading, standardising and expanding tabular data.
//!
//! Input is a CSV with a header row. Every covariate is numeric, the
//! treatment column holds `0`/`1`, and missing cells are errors.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, Matrix};

/// Which columns of a CSV play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Covariate columns; empty means every column except outcome and treatment.
    pub covariates: Vec<String>,
    pub outcome: String,
    pub treatment: String,
}

impl Schema {
    pub fn new(outcome: impl Into<String>, treatment: impl Into<String>) -> Self {
        Self {
            covariates: Vec::new(),
            outcome: outcome.into(),
            treatment: treatment.into(),
        }
    }
}

/// Observed data: covariates, the realised outcome, and the treatment flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDataset {
    pub names: Vec<String>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub treatment: Vec<u8>,
}

impl RawDataset {
    pub fn new(names: Vec<String>, x: Matrix, y: Vec<f64>, treatment: Vec<u8>) -> Result<Self> {
        if names.len() != x.cols() {
            return Err(Error::Dimension {
                context: "column names",
                expected: x.cols(),
                got: names.len(),
            });
        }
        if y.len() != x.rows() || treatment.len() != x.rows() {
            return Err(Error::Dimension {
                context: "rows",
                expected: x.rows(),
                got: y.len().min(treatment.len()),
            });
        }
        if treatment.iter().any(|&t| t > 1) {
            return Err(Error::validation("treatment must be 0 or 1"));
        }
        Ok(Self { names, x, y, treatment })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Covariates and outcomes of the rows with treatment `t`.
    pub fn group(&self, t: u8) -> (Matrix, Vec<f64>) {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.treatment[i] == t).collect();
        let y = idx.iter().map(|&i| self.y[i]).collect();
        (self.x.select_rows(&idx), y)
    }

    fn with_x(&self, names: Vec<String>, x: Matrix) -> Self {
        Self {
            names,
            x,
            y: self.y.clone(),
            treatment: self.treatment.clone(),
        }
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Err(Error::Data {
            row,
            column: column.to_string(),
            message: "missing value".into(),
        });
    }
    let v: f64 = s.parse().map_err(|_| Error::Data {
        row,
        column: column.to_string(),
        message: format!("`{s}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Data {
            row,
            column: column.to_string(),
            message: format!("`{s}` is not finite"),
        });
    }
    Ok(v)
}

/// Reads a CSV according to `schema`. Row numbers in errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Data {
            row: 0,
            column: name.to_string(),
            message: "column not found in header".into(),
        })
    };
    let yi = find(&schema.outcome)?;
    let ti = find(&schema.treatment)?;
    let cov: Vec<usize> = if schema.covariates.is_empty() {
        (0..headers.len()).filter(|&j| j != yi && j != ti).collect()
    } else {
        schema.covariates.iter().map(|c| find(c)).collect::<Result<_>>()?
    };
    let mut seen = HashSet::new();
    if let Some(&dup) = cov.iter().find(|j| !seen.insert(**j)) {
        return Err(Error::validation(format!("covariate `{}` listed twice", headers[dup])));
    }
    if cov.is_empty() {
        return Err(Error::validation("no covariate columns"));
    }

    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut t = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != headers.len() {
            return Err(Error::Data {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for &j in &cov {
            data.push(parse_cell(&rec[j], row, &headers[j])?);
        }
        y.push(parse_cell(&rec[yi], row, &headers[yi])?);
        let tv = parse_cell(&rec[ti], row, &headers[ti])?;
        if tv != 0.0 && tv != 1.0 {
            return Err(Error::Data {
                row,
                column: headers[ti].clone(),
                message: format!("treatment must be 0 or 1, got {tv}"),
            });
        }
        t.push(tv as u8);
    }
    let n = y.len();
    let names: Vec<String> = cov.iter().map(|&j| headers[j].clone()).collect();
    let x = Matrix::from_row_major(n, names.len(), data);
    info!("loaded {n} rows, {} covariates", names.len());
    for (j, name) in names.iter().enumerate() {
        let col = x.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        info!("  {name}: min {lo}, max {hi}");
    }
    RawDataset::new(names, x, y, t)
}

/// Writes covariates, outcome and treatment with a header row.
pub fn write_csv(ds: &RawDataset, path: impl AsRef<Path>, outcome: &str, treatment: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header = ds.names.clone();
    header.push(outcome.to_string());
    header.push(treatment.to_string());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(ds.y[i].to_string());
        rec.push(ds.treatment[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Name given to the appended constant covariate.
pub const CONSTANT_NAME: &str = "const";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Constant columns are passed through unchanged.
    pub constant: bool,
}

/// Record of a min/max standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub columns: Vec<ColumnTransform>,
    pub constant_appended: bool,
}

impl Transform {
    /// Standardises one vector on the original scale, such as a published
    /// covariate mean, appending the constant when the data got one.
    pub fn apply_vector(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.columns.len() {
            return Err(Error::Dimension {
                context: "vector to standardise",
                expected: self.columns.len(),
                got: v.len(),
            });
        }
        let mut out: Vec<f64> = self
            .columns
            .iter()
            .zip(v)
            .map(|(c, &x)| if c.constant { x } else { 2.0 * (x - c.min) / (c.max - c.min) - 1.0 })
            .collect();
        if self.constant_appended {
            out.push(1.0);
        }
        Ok(out)
    }

    /// Maps standardised data back to the original scale, dropping an appended constant.
    pub fn inverse(&self, ds: &RawDataset) -> Result<RawDataset> {
        let d = self.columns.len();
        if ds.d() != d + usize::from(self.constant_appended) {
            return Err(Error::Dimension {
                context: "standardised columns",
                expected: d + usize::from(self.constant_appended),
                got: ds.d(),
            });
        }
        let mut x = Matrix::zeros(ds.n(), d);
        for i in 0..ds.n() {
            for (j, c) in self.columns.iter().enumerate() {
                let v = ds.x.get(i, j);
                let back = if c.constant {
                    v
                } else {
                    c.min + (v + 1.0) * 0.5 * (c.max - c.min)
                };
                x.set(i, j, back);
            }
        }
        Ok(ds.with_x(self.columns.iter().map(|c| c.name.clone()).collect(), x))
    }
}

fn has_unit_constant(x: &Matrix) -> bool {
    (0..x.cols()).any(|j| (0..x.rows()).all(|i| x.get(i, j) == 1.0))
}

/// Maps every non-constant covariate affinely onto `[-1, 1]` using the
/// combined sample's min and max, then appends a constant covariate equal to
/// one unless such a column already exists.
pub fn standardize(ds: &RawDataset) -> (RawDataset, Transform) {
    let (n, d) = (ds.n(), ds.d());
    let mut columns = Vec::with_capacity(d);
    for j in 0..d {
        let col = ds.x.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let constant = !(hi > lo);
        if constant {
            info!("column `{}` is constant and passed through", ds.names[j]);
        }
        columns.push(ColumnTransform {
            name: ds.names[j].clone(),
            min: lo,
            max: hi,
            constant,
        });
    }
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        for (j, c) in columns.iter().enumerate() {
            let v = ds.x.get(i, j);
            let s = if c.constant {
                v
            } else {
                (2.0 * (v - c.min) / (c.max - c.min) - 1.0).clamp(-1.0, 1.0)
            };
            x.set(i, j, s);
        }
    }
    let mut names = ds.names.clone();
    let constant_appended = !has_unit_constant(&x);
    if constant_appended {
        x = x.with_constant_column(1.0);
        names.push(CONSTANT_NAME.to_string());
    }
    (
        ds.with_x(names, x),
        Transform {
            columns,
            constant_appended,
        },
    )
}

/// Drops covariates whose fraction of exact zeros exceeds `threshold`.
/// Returns the filtered data and the dropped names.
pub fn drop_sparse_columns(ds: &RawDataset, threshold: f64) -> (RawDataset, Vec<String>) {
    let n = ds.n().max(1) as f64;
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..ds.d() {
        let zeros = (0..ds.n()).filter(|&i| ds.x.get(i, j) == 0.0).count() as f64;
        if zeros / n > threshold {
            dropped.push(ds.names[j].clone());
        } else {
            keep.push(j);
        }
    }
    let names = keep.iter().map(|&j| ds.names[j].clone()).collect();
    (ds.with_x(names, ds.x.select_cols(&keep)), dropped)
}

/// Where the target mean comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSource {
    /// Average over every row of the dataset.
    Combined,
    /// A published mean over `n` samples from the target population.
    External { mean: Vec<f64>, n: usize },
}

/// Target vector and the sample size behind it.
pub fn build_target(ds: &RawDataset, source: &TargetSource) -> Result<(Arc<[f64]>, usize)> {
    match source {
        TargetSource::Combined => {
            if ds.n() == 0 {
                return Err(Error::validation("cannot average an empty dataset"));
            }
            Ok((Arc::from(ds.x.column_means()), ds.n()))
        }
        TargetSource::External { mean, n } => {
            if mean.len() != ds.d() {
                return Err(Error::Dimension {
                    context: "external target",
                    expected: ds.d(),
                    got: mean.len(),
                });
            }
            if *n == 0 {
                return Err(Error::validation("external target needs n >= 1"));
            }
            Ok((Arc::from(mean.clone()), *n))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance over at most 2000 seeded-subsampled rows.
    MedianHeuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffConfig {
    pub out_dim: usize,
    pub bandwidth: Bandwidth,
    pub seed: u64,
}

const MEDIAN_SUBSAMPLE: usize = 2000;

/// A fixed random Fourier feature map `x ↦ √(2/D) cos(Ω x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffMap {
    pub omega: Matrix,
    pub offsets: Vec<f64>,
    pub bandwidth: f64,
}

impl RffMap {
    /// Explicit map; `omega` is `D × p`.
    pub fn from_parts(omega: Matrix, offsets: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if omega.rows() != offsets.len() || omega.rows() == 0 {
            return Err(Error::validation("RFF map needs one offset per feature"));
        }
        Ok(Self {
            omega,
            offsets,
            bandwidth,
        })
    }

    /// Draws `ω_r ~ N(0, I / bw²)` and `b_r ~ U[0, 2π)`.
    pub fn sample(p: usize, out_dim: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        if out_dim == 0 {
            return Err(Error::validation("out_dim must be >= 1"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::validation(format!("bandwidth must be > 0, got {bandwidth}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut omega = Matrix::zeros(out_dim, p);
        for r in 0..out_dim {
            for v in omega.row_mut(r) {
                let g: f64 = rng.sample(StandardNormal);
                *v = g / bandwidth;
            }
        }
        let offsets = (0..out_dim).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Self::from_parts(omega, offsets, bandwidth)
    }

    pub fn out_dim(&self) -> usize {
        self.offsets.len()
    }

    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) {
        let scale = (2.0 / self.out_dim() as f64).sqrt();
        for (r, o) in out.iter_mut().enumerate() {
            *o = scale * (numeric::dot(self.omega.row(r), x) + self.offsets[r]).cos();
        }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let dd = self.out_dim();
        let mut data = vec![0.0; x.rows() * dd];
        data.par_chunks_mut(dd).enumerate().for_each(|(i, out)| self.apply_row(x.row(i), out));
        Matrix::from_row_major(x.rows(), dd, data)
    }
}

/// Median pairwise Euclidean distance over a seeded subsample of rows.
pub fn median_heuristic(x: &Matrix, seed: u64) -> f64 {
    let n = x.rows();
    let mut idx: Vec<usize> = (0..n).collect();
    if n > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Partial Fisher–Yates.
        for i in 0..MEDIAN_SUBSAMPLE {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        idx.truncate(MEDIAN_SUBSAMPLE);
    }
    let mut dists = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
            dists.push(d2.sqrt());
        }
    }
    numeric::median(&dists)
}

fn constant_columns(x: &Matrix) -> Vec<bool> {
    (0..x.cols())
        .map(|j| {
            let first = x.get(0, j);
            (0..x.rows()).all(|i| x.get(i, j) == first)
        })
        .collect()
}

/// Replaces the non-constant covariates by `out_dim` random Fourier features.
/// A constant covariate equal to one is kept (or added) as the last column.
pub fn rff_expand(ds: &RawDataset, cfg: &RffConfig) -> Result<(RawDataset, RffMap)> {
    if ds.n() == 0 {
        return Err(Error::validation("cannot expand an empty dataset"));
    }
    let keep: Vec<usize> = constant_columns(&ds.x)
        .iter()
        .enumerate()
        .filter(|(_, c)| !**c)
        .map(|(j, _)| j)
        .collect();
    let base = ds.x.select_cols(&keep);
    let bandwidth = match cfg.bandwidth {
        Bandwidth::Fixed(b) => b,
        Bandwidth::MedianHeuristic => {
            let m = median_heuristic(&base, cfg.seed);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let map = RffMap::sample(base.cols(), cfg.out_dim, bandwidth, cfg.seed)?;
    let feats = map.apply(&base).with_constant_column(1.0);
    let mut names: Vec<String> = (0..cfg.out_dim).map(|r| format!("rff{r}")).collect();
    names.push(CONSTANT_NAME.to_string());
    info!("expanded {} covariates into {} features, bandwidth {bandwidth}", keep.len(), cfg.out_dim);
    Ok((ds.with_x(names, feats), map))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> RawDataset {
        let x = Matrix::from_rows(&[vec![-2.0, 5.0], vec![0.0, 5.0], vec![2.0, 5.0]]);
        RawDataset::new(vec!["a".into(), "b".into()], x, vec![1.0, 2.0, 3.0], vec![1, 0, 1]).unwrap()
    }

    #[test]
    fn standardize_halves_symmetric_column_and_flags_constant() {
        let (s, t) = standardize(&toy());
        assert_eq!(s.x.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(s.x.column(1), vec![5.0; 3]);
        assert!(t.columns[1].constant && !t.columns[0].constant);
        assert!(t.constant_appended);
        assert_eq!(s.names.last().unwrap(), CONSTANT_NAME);
        let back = t.inverse(&s).unwrap();
        assert_eq!(t.apply_vector(&[0.0, 5.0]).unwrap(), vec![0.0, 5.0, 1.0]);
        assert_eq!(back.x, toy().x);
    }

    #[test]
    fn standardize_is_idempotent() {
        let (s, _) = standardize(&toy());
        let (s2, t2) = standardize(&s);
        assert!(!t2.constant_appended);
        for (a, b) in s.x.as_slice().iter().zip(s2.x.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn groups_and_targets() {
        let ds = toy();
        let (x1, y1) = ds.group(1);
        assert_eq!(x1.rows(), 2);
        assert_eq!(y1, vec![1.0, 3.0]);
        let (m, n) = build_target(&ds, &TargetSource::Combined).unwrap();
        assert_eq!(&*m, &[0.0, 5.0]);
        assert_eq!(n, 3);
        let (m2, n2) = build_target(
            &ds,
            &TargetSource::External {
                mean: vec![0.0, 5.0],
                n: 3,
            },
        )
        .unwrap();
        assert_eq!((m, n), (m2, n2));
        assert!(build_target(&ds, &TargetSource::External { mean: vec![1.0], n: 3 }).is_err());
    }

    #[test]
    fn rff_zero_input_with_zero_offsets() {
        let omega = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.1, 0.1]]);
        let map = RffMap::from_parts(omega, vec![0.0; 3], 1.0).unwrap();
        let f = map.apply(&Matrix::zeros(2, 2));
        assert!(f.as_slice().iter().all(|v| (v - (2.0f64 / 3.0).sqrt()).abs() < 1e-15));
    }

    #[test]
    fn sparse_filter() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0, 2.0]]);
        let ds = RawDataset::new(vec!["s".into(), "d".into()], x, vec![0.0; 3], vec![0; 3]).unwrap();
        let (f, dropped) = drop_sparse_columns(&ds, 0.5);
        assert_eq!(dropped, vec!["s".to_string()]);
        assert_eq!(f.names, vec!["d".to_string()]);
    }
}

//! Simulation designs.
//!
//! * `Subgroup`: race (±10) is the only relevant covariate; the treated
//!   group is 95% white and the control group 5% white, `Y(1) = ±1` by race,
//!   `Y(0) = 0`.
//! * `Celebrity`: 5% of each group have all-zero covariates and treatment
//!   effect 1; everyone else has `Uniform(−10, 10)` covariates and effect
//!   `−0.05/0.95`. `Y(0) = 0`.
//! * `LinearSparse`: `Uniform(−1, 1)` covariates, exactly linear outcomes with
//!   sparse coefficients of ℓ1 norm `k_true`, and logistic assignment with
//!   propensities in `[γ, 1 − γ]`.
//!
//! All true effects are zero in the first two designs.
//!
//! Randomness comes from ChaCha8 seeded with `seed`. Covariate column `j`
//! is drawn from stream `j` over all rows (treated first, then control), so a
//! column does not depend on how many other columns there are. Auxiliary draws
//! use streams counted down from `u64::MAX`.

use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{RawDataset, CONSTANT_NAME};
use crate::numeric::{self, Matrix};
use crate::problem::{hoeffding_radius, BalanceProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    Subgroup,
    Celebrity,
    LinearSparse,
}

impl std::str::FromStr for SimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subgroup" => Ok(Self::Subgroup),
            "celebrity" => Ok(Self::Celebrity),
            "linear" | "linear_sparse" => Ok(Self::LinearSparse),
            other => Err(Error::validation(format!("unknown simulation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub kind: SimKind,
    /// Total sample size over both groups (`LinearSparse`: before assignment).
    pub n: usize,
    /// Covariates, not counting the appended constant.
    pub d: usize,
    pub seed: u64,
    /// Share of `n` placed in the treated group (`Subgroup`, `Celebrity`).
    pub treated_fraction: f64,
    /// Append a covariate equal to one.
    pub add_constant: bool,
    /// Subgroup: share of the treated group that is black (and of the control group that is white).
    pub minority_fraction: f64,
    pub race_encoding: f64,
    /// Celebrity: share of each group that are celebrities.
    pub celebrity_fraction: f64,
    pub celebrity_range: f64,
    /// LinearSparse parameters.
    pub k_true: f64,
    pub support: usize,
    pub overlap: f64,
    pub confounding: f64,
}

impl SimSpec {
    pub fn new(kind: SimKind, n: usize, d: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            d,
            seed,
            treated_fraction: 0.5,
            add_constant: true,
            minority_fraction: 0.05,
            race_encoding: 10.0,
            celebrity_fraction: 0.05,
            celebrity_range: 10.0,
            k_true: 3.0,
            support: 3,
            overlap: 0.1,
            confounding: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 4 || self.d == 0 {
            return Err(Error::validation("simulation needs n >= 4 and d >= 1"));
        }
        for (name, f) in [
            ("treated_fraction", self.treated_fraction),
            ("minority_fraction", self.minority_fraction),
            ("celebrity_fraction", self.celebrity_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::validation(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        if !(self.overlap > 0.0 && self.overlap < 0.5) {
            return Err(Error::validation("overlap must lie in (0, 1/2)"));
        }
        if !(self.k_true > 0.0) {
            return Err(Error::validation("k_true must be > 0"));
        }
        Ok(())
    }

    fn columns(&self) -> usize {
        self.d + usize::from(self.add_constant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupData {
    pub x: Matrix,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub mu1: f64,
    pub mu0: f64,
    pub ate: f64,
    pub v_star: Option<Vec<f64>>,
    pub u_star: Option<Vec<f64>>,
    /// Population covariate mean.
    pub population_mean: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDataset {
    pub spec: SimSpec,
    pub treated: GroupData,
    pub control: GroupData,
    /// Combined-sample covariate mean, shared by both groups' problems.
    pub target: Arc<[f64]>,
    pub n_total: usize,
    /// Bound on `|X_ij|` used for the concentration radius.
    pub covariate_bound: f64,
    pub truth: SimTruth,
    /// Assignment probabilities of all rows (treated first), when random.
    pub propensity: Option<Vec<f64>>,
}

impl SimDataset {
    /// Hoeffding radius scaled to the covariate range.
    pub fn conc_radius(&self, alpha: f64) -> f64 {
        self.covariate_bound * hoeffding_radius(self.target.len(), self.n_total, alpha)
    }

    fn problem(&self, g: &GroupData, k: f64, alpha: f64) -> Result<BalanceProblem> {
        BalanceProblem::new(g.x.clone(), g.y.clone(), self.target.clone(), k, self.conc_radius(alpha), alpha)
    }

    pub fn treated_problem(&self, k: f64, alpha: f64) -> Result<BalanceProblem> {
        self.problem(&self.treated, k, alpha)
    }

    pub fn control_problem(&self, k: f64, alpha: f64) -> Result<BalanceProblem> {
        self.problem(&self.control, k, alpha)
    }

    /// Both problems, sharing one target allocation.
    pub fn into_problems(&self, k1: f64, k0: f64, alpha: f64) -> Result<(BalanceProblem, BalanceProblem)> {
        Ok((self.treated_problem(k1, alpha)?, self.control_problem(k0, alpha)?))
    }

    /// Observed data in the ingest layout, without the appended constant.
    pub fn to_raw(&self) -> Result<RawDataset> {
        let cols: Vec<usize> = (0..self.spec.d).collect();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut t = Vec::new();
        for (g, flag) in [(&self.treated, 1u8), (&self.control, 0u8)] {
            let x = g.x.select_cols(&cols);
            for i in 0..x.rows() {
                rows.push(x.row(i).to_vec());
            }
            y.extend_from_slice(&g.y);
            t.extend(std::iter::repeat_n(flag, g.y.len()));
        }
        let names = (0..self.spec.d).map(|j| format!("x{j}")).collect();
        RawDataset::new(names, Matrix::from_rows(&rows), y, t)
    }
}

fn column_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_COEF_V: u64 = u64::MAX;
const STREAM_COEF_U: u64 = u64::MAX - 1;
const STREAM_ASSIGN: u64 = u64::MAX - 2;

fn split_groups(n: usize, treated_fraction: f64) -> Result<(usize, usize)> {
    let n1 = (n as f64 * treated_fraction).round() as usize;
    let n0 = n - n1;
    if n1 < 2 || n0 < 2 {
        return Err(Error::validation(format!("groups too small: {n1} treated, {n0} control")));
    }
    Ok((n1, n0))
}

fn minority_count(n_g: usize, fraction: f64, what: &str) -> Result<usize> {
    let m = (n_g as f64 * fraction).round() as usize;
    if m == 0 || m == n_g {
        return Err(Error::validation(format!(
            "group of {n_g} is too small for an exact {fraction} {what} share"
        )));
    }
    Ok(m)
}

/// Fills row-major storage column by column, one stream per column.
fn fill_columns(rows: usize, cols: usize, seed: u64, mut draw: impl FnMut(usize, usize, &mut ChaCha8Rng) -> f64) -> Matrix {
    let mut x = Matrix::zeros(rows, cols);
    for j in 0..cols {
        let mut rng = column_rng(seed, j as u64);
        for i in 0..rows {
            let v = draw(i, j, &mut rng);
            x.set(i, j, v);
        }
    }
    x
}

fn finish(
    spec: &SimSpec,
    all_x: Matrix,
    all_y: Vec<f64>,
    treated_rows: Vec<usize>,
    control_rows: Vec<usize>,
    covariate_bound: f64,
    truth: SimTruth,
    propensity: Option<Vec<f64>>,
) -> SimDataset {
    let all_x = if spec.add_constant { all_x.with_constant_column(1.0) } else { all_x };
    let target: Arc<[f64]> = Arc::from(all_x.column_means());
    let group = |idx: &[usize]| GroupData {
        x: all_x.select_rows(idx),
        y: idx.iter().map(|&i| all_y[i]).collect(),
    };
    SimDataset {
        spec: spec.clone(),
        treated: group(&treated_rows),
        control: group(&control_rows),
        target,
        n_total: all_x.rows(),
        covariate_bound: covariate_bound.max(1.0),
        truth,
        propensity,
    }
}

pub fn gen_subgroup(spec: &SimSpec) -> Result<SimDataset> {
    spec.validate()?;
    let (n1, n0) = split_groups(spec.n, spec.treated_fraction)?;
    let black_treated = minority_count(n1, spec.minority_fraction, "minority")?;
    let white_control = minority_count(n0, spec.minority_fraction, "minority")?;
    let white_treated = n1 - black_treated;
    let enc = spec.race_encoding;
    // Rows: treated white, treated black, control white, control black.
    let is_white = |i: usize| i < white_treated || (i >= n1 && i < n1 + white_control);
    let x = fill_columns(spec.n, spec.d, spec.seed, |i, j, rng| {
        if j == 0 {
            if is_white(i) {
                enc
            } else {
                -enc
            }
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    // Observed outcomes: Y(1) = ±1 for the treated, Y(0) = 0 for controls.
    let y: Vec<f64> = (0..spec.n)
        .map(|i| if i >= n1 { 0.0 } else if is_white(i) { 1.0 } else { -1.0 })
        .collect();
    let truth = SimTruth {
        mu1: 0.0,
        mu0: 0.0,
        ate: 0.0,
        v_star: None,
        u_star: None,
        population_mean: None,
    };
    Ok(finish(spec, x, y, (0..n1).collect(), (n1..spec.n).collect(), enc, truth, None))
}

/// Effect for the general population that makes the overall effect zero.
fn celebrity_general_effect(fraction: f64) -> f64 {
    -fraction / (1.0 - fraction)
}

pub fn gen_celebrity(spec: &SimSpec) -> Result<SimDataset> {
    spec.validate()?;
    let (n1, n0) = split_groups(spec.n, spec.treated_fraction)?;
    let c1 = minority_count(n1, spec.celebrity_fraction, "celebrity")?;
    let c0 = minority_count(n0, spec.celebrity_fraction, "celebrity")?;
    // Within each group the celebrities come first.
    let is_celeb = |i: usize| i < c1 || (i >= n1 && i < n1 + c0);
    let r = spec.celebrity_range;
    let x = fill_columns(spec.n, spec.d, spec.seed, |i, _, rng| {
        let v = rng.random_range(-r..r);
        if is_celeb(i) {
            0.0
        } else {
            v
        }
    });
    let general = celebrity_general_effect(spec.celebrity_fraction);
    let y: Vec<f64> = (0..spec.n)
        .map(|i| {
            if i >= n1 {
                0.0
            } else if is_celeb(i) {
                1.0
            } else {
                general
            }
        })
        .collect();
    let truth = SimTruth {
        mu1: 0.0,
        mu0: 0.0,
        ate: 0.0,
        v_star: None,
        u_star: None,
        population_mean: None,
    };
    Ok(finish(spec, x, y, (0..n1).collect(), (n1..spec.n).collect(), r, truth, None))
}

/// Sparse vector over `cols` entries with `support` nonzeros, random signs,
/// and ℓ1 norm exactly `k`.
fn sparse_coefficients(cols: usize, support: usize, k: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = support.clamp(1, cols);
    let idx = index::sample(rng, cols, s).into_vec();
    let raw: Vec<f64> = (0..s).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut v = vec![0.0; cols];
    for (&j, &m) in idx.iter().zip(&raw) {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        v[j] = sign * k * m / total;
    }
    // Put any rounding residue on the largest entry so the ℓ1 norm is exact.
    let (_, jmax) = numeric::max_abs(&v);
    let rest: f64 = v.iter().enumerate().filter(|(j, _)| *j != jmax).map(|(_, x)| x.abs()).sum();
    v[jmax] = v[jmax].signum() * (k - rest);
    v
}

pub fn gen_linear_sparse(spec: &SimSpec) -> Result<SimDataset> {
    spec.validate()?;
    let cols = spec.columns();
    let v_star = sparse_coefficients(cols, spec.support, spec.k_true, &mut column_rng(spec.seed, STREAM_COEF_V));
    let u_star = sparse_coefficients(cols, spec.support, spec.k_true, &mut column_rng(spec.seed, STREAM_COEF_U));
    let x = fill_columns(spec.n, spec.d, spec.seed, |_, _, rng| rng.random_range(-1.0..1.0));
    let mut pop_mean = vec![0.0; spec.d];
    if spec.add_constant {
        pop_mean.push(1.0);
    }
    let full = if spec.add_constant { x.with_constant_column(1.0) } else { x.clone() };

    // Assignment depends on the first few covariates.
    let confounders = spec.support.clamp(1, spec.d);
    let mut arng = column_rng(spec.seed, STREAM_ASSIGN);
    let mut propensity = Vec::with_capacity(spec.n);
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for i in 0..spec.n {
        let score: f64 = full.row(i)[..confounders].iter().sum::<f64>() * spec.confounding;
        let p = spec.overlap + (1.0 - 2.0 * spec.overlap) * numeric::sigmoid(score);
        propensity.push(p);
        if arng.random::<f64>() < p {
            treated.push(i);
        } else {
            control.push(i);
        }
    }
    if treated.len() < 2 || control.len() < 2 {
        return Err(Error::validation("assignment left a group with fewer than two rows"));
    }
    let y: Vec<f64> = (0..spec.n)
        .map(|i| {
            let coef = if treated.binary_search(&i).is_ok() { &v_star } else { &u_star };
            numeric::dot(coef, full.row(i))
        })
        .collect();
    let mu1 = numeric::dot(&v_star, &pop_mean);
    let mu0 = numeric::dot(&u_star, &pop_mean);
    let truth = SimTruth {
        mu1,
        mu0,
        ate: mu1 - mu0,
        v_star: Some(v_star),
        u_star: Some(u_star),
        population_mean: Some(pop_mean),
    };
    // Reorder the propensities to match the treated-then-control layout.
    let prop = treated.iter().chain(&control).map(|&i| propensity[i]).collect();
    Ok(finish(spec, x, y, treated, control, 1.0, truth, Some(prop)))
}

pub fn generate(spec: &SimSpec) -> Result<SimDataset> {
    match spec.kind {
        SimKind::Subgroup => gen_subgroup(spec),
        SimKind::Celebrity => gen_celebrity(spec),
        SimKind::LinearSparse => gen_linear_sparse(spec),
    }
}

/// Names of the covariate columns, including the constant when present.
pub fn column_names(spec: &SimSpec) -> Vec<String> {
    let mut names: Vec<String> = (0..spec.d).map(|j| format!("x{j}")).collect();
    if spec.add_constant {
        names.push(CONSTANT_NAME.to_string());
    }
    names
}

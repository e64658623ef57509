use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use flexbal::beta::InfeasiblePolicy;
use flexbal::inference::{
    coverage_study, derive_seed, estimate_asymmetric, estimate_fbal, estimate_plain, median_errors, replicate_design,
    Baseline, EstimateReport, ReplicateConfig,
};
use flexbal::ingest::{
    build_target, drop_sparse_columns, load_csv, rff_expand, standardize, Bandwidth, RawDataset, RffConfig, RffMap,
    Schema, TargetSource, Transform,
};
use flexbal::lasso::{choose_k, KChoice, LassoConfig};
use flexbal::problem::hoeffding_radius;
use flexbal::simgen::{generate, SimKind, SimSpec};
use flexbal::{numeric, BalanceProblem, Centering, DivergenceSpec, FbalConfig, Matrix, PlainBalanceConfig, SimplexWeights};

use crate::args::{
    BalanceArgs, CenteringName, CoverageArgs, DataArgs, DivergenceName, GroupName, Method, PrepareArgs,
    ReplicateArgs, SimArgs, SimName, SimulateArgs,
};
use crate::error::{CliError, CliResult};
use crate::output::Run;

fn sim_kind(name: SimName) -> SimKind {
    match name {
        SimName::Subgroup => SimKind::Subgroup,
        SimName::Celebrity => SimKind::Celebrity,
        SimName::Linear => SimKind::LinearSparse,
    }
}

fn sim_spec(name: SimName, args: &SimArgs) -> SimSpec {
    SimSpec {
        k_true: args.k_true,
        ..SimSpec::new(sim_kind(name), args.n, args.d, args.seed)
    }
}

fn divergence(name: DivergenceName) -> DivergenceSpec {
    match name {
        DivergenceName::Kl => DivergenceSpec::Kl,
        DivergenceName::Chi2 => DivergenceSpec::ChiSquared,
        DivergenceName::Cbps => DivergenceSpec::Cbps,
    }
}

fn policy(strict: bool) -> InfeasiblePolicy {
    if strict {
        InfeasiblePolicy::Error
    } else {
        InfeasiblePolicy::MinimalResidualBand
    }
}

struct Prepared {
    data: RawDataset,
    transform: Option<Transform>,
    dropped: Vec<String>,
    rff: Option<RffMap>,
}

fn prepare_dataset(path: &Path, args: &DataArgs) -> CliResult<Prepared> {
    let mut schema = Schema::new(args.outcome.clone(), args.treatment.clone());
    schema.covariates = args.covariates.clone();
    let mut data = load_csv(path, &schema)?;
    let mut dropped = Vec::new();
    if let Some(threshold) = args.drop_sparse {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(CliError::usage("--drop-sparse must lie in [0, 1]"));
        }
        (data, dropped) = drop_sparse_columns(&data, threshold);
    }
    let mut transform = None;
    if !args.no_standardize {
        let (std_data, t) = standardize(&data);
        data = std_data;
        transform = Some(t);
    }
    let mut rff = None;
    if let Some(out_dim) = args.rff {
        let bandwidth = match args.bandwidth {
            Some(b) if b > 0.0 => Bandwidth::Fixed(b),
            Some(_) => return Err(CliError::usage("--bandwidth must be > 0")),
            None => Bandwidth::MedianHeuristic,
        };
        let cfg = RffConfig {
            out_dim,
            bandwidth,
            seed: args.rff_seed,
        };
        let (expanded, map) = rff_expand(&data, &cfg)?;
        data = expanded;
        rff = Some(map);
    } else if args.bandwidth.is_some() {
        return Err(CliError::usage("--bandwidth needs --rff"));
    }
    Ok(Prepared {
        data,
        transform,
        dropped,
        rff,
    })
}

#[derive(Debug, Deserialize)]
struct ExternalTarget {
    mean: Vec<f64>,
    n: usize,
}

struct GroupInput {
    group: GroupName,
    x: Matrix,
    y: Vec<f64>,
    /// Row of each unit in the source data.
    rows: Vec<usize>,
}

struct Inputs {
    treated: GroupInput,
    control: GroupInput,
    target: Arc<[f64]>,
    conc_radius: f64,
    truth: Option<Truth>,
}

#[derive(Debug, Serialize)]
struct Truth {
    mu1: f64,
    mu0: f64,
    ate: f64,
}

fn inputs_from_sim(name: SimName, args: &SimArgs, alpha: f64) -> CliResult<Inputs> {
    let ds = generate(&sim_spec(name, args))?;
    let n1 = ds.treated.y.len();
    let n0 = ds.control.y.len();
    Ok(Inputs {
        conc_radius: ds.conc_radius(alpha),
        target: ds.target.clone(),
        truth: Some(Truth {
            mu1: ds.truth.mu1,
            mu0: ds.truth.mu0,
            ate: ds.truth.ate,
        }),
        treated: GroupInput {
            group: GroupName::Treated,
            x: ds.treated.x,
            y: ds.treated.y,
            rows: (0..n1).collect(),
        },
        control: GroupInput {
            group: GroupName::Control,
            x: ds.control.x,
            y: ds.control.y,
            rows: (n1..n1 + n0).collect(),
        },
    })
}

fn inputs_from_data(run: &mut Run, args: &BalanceArgs, path: &Path) -> CliResult<Inputs> {
    run.input(path)?;
    let prepared = prepare_dataset(path, &args.data_args)?;
    let data = &prepared.data;
    let source = match &args.target {
        None => TargetSource::Combined,
        Some(target_path) => {
            if prepared.rff.is_some() {
                return Err(CliError::usage("an external target cannot be combined with --rff"));
            }
            run.input(target_path)?;
            let ext: ExternalTarget = serde_json::from_str(&fs::read_to_string(target_path).map_err(|e| CliError::file(target_path, e))?)?;
            let mean = match &prepared.transform {
                Some(t) => t.apply_vector(&ext.mean)?,
                None => ext.mean,
            };
            TargetSource::External { mean, n: ext.n }
        }
    };
    let (target, n_target) = build_target(data, &source)?;
    // Hoeffding's radius is stated for covariates in [-1, 1]; scale it to the data.
    let bound = numeric::norm_inf(data.x.as_slice()).max(numeric::norm_inf(&target));
    let conc_radius = bound * hoeffding_radius(data.d(), n_target, args.alpha);
    let group = |flag: u8, name: GroupName| {
        let rows: Vec<usize> = (0..data.n()).filter(|&i| data.treatment[i] == flag).collect();
        let (x, y) = data.group(flag);
        GroupInput {
            group: name,
            x,
            y,
            rows,
        }
    };
    Ok(Inputs {
        treated: group(1, GroupName::Treated),
        control: group(0, GroupName::Control),
        target,
        conc_radius,
        truth: None,
    })
}

#[derive(Debug, Serialize)]
struct GroupOutput {
    group: GroupName,
    n: usize,
    k: f64,
    k_choice: Option<KChoice>,
    conc_radius: f64,
    report: EstimateReport,
}

#[derive(Debug, Serialize)]
struct AteOutput {
    ate_hat: f64,
    radius: f64,
    interval: (f64, f64),
}

#[derive(Debug, Serialize)]
struct BalanceOutput {
    method: Method,
    divergence: String,
    lambda: Option<f64>,
    alpha: f64,
    groups: Vec<GroupOutput>,
    ate: Option<AteOutput>,
    truth: Option<Truth>,
}

/// Weights of one group; asymmetric solves carry the lower and upper solutions.
enum Weights {
    Single(SimplexWeights),
    Pair(SimplexWeights, SimplexWeights),
}

fn validate_balance(args: &BalanceArgs) -> CliResult<()> {
    let fbal = args.method == Method::Fbal;
    if fbal && args.lambda.is_some() {
        return Err(CliError::usage(
            "--lambda applies to the baselines; use --fixed-lambda to hold λ fixed in the flexible program",
        ));
    }
    if !fbal && (args.fixed_lambda.is_some() || args.fixed_delta.is_some() || args.asymmetric) {
        return Err(CliError::usage(
            "--fixed-lambda, --fixed-delta and --asymmetric apply only to --method fbal",
        ));
    }
    if args.asymmetric && args.group == GroupName::Ate {
        return Err(CliError::usage("--asymmetric needs --group treated or --group control"));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::usage("--alpha must lie in (0, 1)"));
    }
    if args.data.is_some() && args.sim.is_some() {
        return Err(CliError::usage("--data and --sim are mutually exclusive"));
    }
    Ok(())
}

fn fbal_config(args: &BalanceArgs) -> FbalConfig {
    let mut cfg = FbalConfig::new(divergence(args.divergence));
    cfg.fixed_lambda = args.fixed_lambda;
    cfg.fixed_delta = args.fixed_delta;
    cfg.infeasible_policy = policy(args.strict_lp);
    cfg.centering = match args.centering {
        CenteringName::Raw => Centering::Raw,
        CenteringName::Centred => Centering::Centred,
    };
    cfg
}

fn baseline(method: Method) -> Option<Baseline> {
    match method {
        Method::Ebal => Some(Baseline::Ebal),
        Method::Sbw => Some(Baseline::Sbw),
        Method::Ncbps => Some(Baseline::Ncbps),
        Method::Fbal => None,
    }
}

fn solve_group(
    args: &BalanceArgs,
    input: GroupInput,
    target: &Arc<[f64]>,
    conc_radius: f64,
) -> CliResult<(GroupOutput, Weights, Vec<usize>)> {
    let k_choice = match args.k {
        Some(_) => None,
        None => Some(choose_k(&input.x, &input.y, &LassoConfig::default())?),
    };
    let k = args.k.or(k_choice.as_ref().map(|c| c.k)).unwrap_or_default();
    let n = input.y.len();
    let problem = BalanceProblem::new(input.x, input.y, target.clone(), k, conc_radius, args.alpha)?;
    info!("solving {:?} group: n = {n}, d = {}, k = {k}", input.group, problem.d());
    let (report, weights) = match baseline(args.method) {
        Some(b) => {
            let plain = PlainBalanceConfig::new(b.divergence(), args.lambda.unwrap_or(1.0));
            let mut certify = FbalConfig::new(b.divergence());
            certify.infeasible_policy = policy(args.strict_lp);
            let (report, res) = estimate_plain(&problem, &plain, &certify)?;
            (report, Weights::Single(res.weights))
        }
        None if args.asymmetric => {
            let (report, iv) = estimate_asymmetric(&problem, &fbal_config(args))?;
            (report, Weights::Pair(iv.plus.weights, iv.minus.weights))
        }
        None => {
            let (report, sol) = estimate_fbal(&problem, &fbal_config(args))?;
            (report, Weights::Single(sol.weights))
        }
    };
    let out = GroupOutput {
        group: input.group,
        n,
        k,
        k_choice,
        conc_radius,
        report,
    };
    Ok((out, weights, input.rows))
}

pub fn balance(run: &mut Run, args: &BalanceArgs) -> CliResult<()> {
    validate_balance(args)?;
    let inputs = match (&args.data, args.sim) {
        (Some(path), None) => inputs_from_data(run, args, path)?,
        (None, Some(name)) => {
            run.seed(args.sim_args.seed);
            inputs_from_sim(name, &args.sim_args, args.alpha)?
        }
        _ => return Err(CliError::usage("exactly one of --data or --sim is required")),
    };
    let Inputs {
        treated,
        control,
        target,
        conc_radius,
        truth,
    } = inputs;
    let selected = match args.group {
        GroupName::Treated => vec![treated],
        GroupName::Control => vec![control],
        GroupName::Ate => vec![treated, control],
    };
    let mut groups = Vec::new();
    let mut weights = Vec::new();
    for input in selected {
        if input.y.is_empty() {
            return Err(CliError::Core(flexbal::Error::Data {
                row: 0,
                column: args.data_args.treatment.clone(),
                message: format!("no units in the {:?} group", input.group).to_lowercase(),
            }));
        }
        let (out, w, rows) = solve_group(args, input, &target, conc_radius)?;
        weights.push((out.group, w, rows));
        groups.push(out);
    }
    let ate = match groups.as_slice() {
        [t, c] => {
            let ate_hat = t.report.mu_hat - c.report.mu_hat;
            let radius = t.report.radius + c.report.radius;
            Some(AteOutput {
                ate_hat,
                radius,
                interval: (ate_hat - radius, ate_hat + radius),
            })
        }
        _ => None,
    };
    let output = BalanceOutput {
        method: args.method,
        divergence: match baseline(args.method) {
            Some(b) => b.divergence().name().to_string(),
            None => divergence(args.divergence).name().to_string(),
        },
        lambda: baseline(args.method).map(|_| args.lambda.unwrap_or(1.0)),
        alpha: args.alpha,
        groups,
        ate,
        truth,
    };
    run.write_json("report.json", &output)?;
    write_weights(run, &weights)?;
    Ok(())
}

fn write_weights(run: &mut Run, weights: &[(GroupName, Weights, Vec<usize>)]) -> CliResult<()> {
    let mut w = run.csv_writer("weights.csv")?;
    let pair = weights.iter().any(|(_, w, _)| matches!(w, Weights::Pair(..)));
    if pair {
        w.write_record(["group", "row", "weight_lower", "weight_upper"])?;
    } else {
        w.write_record(["group", "row", "weight"])?;
    }
    for (group, ws, rows) in weights {
        let name = match group {
            GroupName::Treated => "treated",
            GroupName::Control => "control",
            GroupName::Ate => "ate",
        };
        match ws {
            Weights::Single(s) => {
                for (row, v) in rows.iter().zip(s.as_slice()) {
                    w.write_record([name.to_string(), row.to_string(), v.to_string()])?;
                }
            }
            Weights::Pair(lo, hi) => {
                for ((row, a), b) in rows.iter().zip(lo.as_slice()).zip(hi.as_slice()) {
                    w.write_record([name.to_string(), row.to_string(), a.to_string(), b.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn replicate(run: &mut Run, args: &ReplicateArgs) -> CliResult<()> {
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be >= 1"));
    }
    if args.lambda_grid.is_empty() {
        return Err(CliError::usage("--lambda-grid must not be empty"));
    }
    let template = sim_spec(args.sim, &args.sim_args);
    run.seed(template.seed);
    let mut cfg = ReplicateConfig::new(args.reps);
    cfg.lambda_grid = args.lambda_grid.clone();
    cfg.alpha = args.alpha;
    cfg.fbal.infeasible_policy = policy(args.strict_lp);
    for r in 0..args.reps {
        run.seed(derive_seed(template.seed, r as u64));
    }
    let rows = replicate_design(&template, &cfg)?;
    let mut w = run.csv_writer("replicate.csv")?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut s = run.csv_writer("replicate_summary.csv")?;
    s.write_record(["method", "lambda", "median_abs_error"])?;
    for (method, lambda, med) in median_errors(&rows) {
        s.write_record([method, lambda.map(|l| l.to_string()).unwrap_or_default(), med.to_string()])?;
    }
    s.flush()?;
    Ok(())
}

pub fn coverage(run: &mut Run, args: &CoverageArgs) -> CliResult<()> {
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be >= 1"));
    }
    let template = SimSpec {
        k_true: args.k_true,
        ..SimSpec::new(SimKind::LinearSparse, args.n, args.d, args.seed)
    };
    run.seed(template.seed);
    let cfg = FbalConfig::new(divergence(args.divergence));
    let summary = coverage_study(&template, args.reps, args.alpha, &cfg)?;
    run.write_json("coverage.json", &summary)?;
    Ok(())
}

pub fn simulate(run: &mut Run, args: &SimulateArgs) -> CliResult<()> {
    let spec = sim_spec(args.sim, &args.sim_args);
    run.seed(spec.seed);
    let ds = generate(&spec)?;
    let raw = ds.to_raw()?;
    let path = run.path("data.csv");
    flexbal::ingest::write_csv(&raw, path, "y", "t")?;
    #[derive(Serialize)]
    struct SimRecord<'a> {
        spec: &'a SimSpec,
        truth: &'a flexbal::simgen::SimTruth,
    }
    run.write_json(
        "truth.json",
        &SimRecord {
            spec: &ds.spec,
            truth: &ds.truth,
        },
    )?;
    Ok(())
}

pub fn prepare(run: &mut Run, args: &PrepareArgs) -> CliResult<()> {
    run.input(&args.data)?;
    let prepared = prepare_dataset(&args.data, &args.data_args)?;
    let path: PathBuf = run.path("prepared.csv");
    flexbal::ingest::write_csv(&prepared.data, path, &args.data_args.outcome, &args.data_args.treatment)?;
    #[derive(Serialize)]
    struct Record<'a> {
        transform: &'a Option<Transform>,
        dropped: &'a [String],
        rff: &'a Option<RffMap>,
    }
    run.write_json(
        "transform.json",
        &Record {
            transform: &prepared.transform,
            dropped: &prepared.dropped,
            rff: &prepared.rff,
        },
    )?;
    Ok(())
}

//! Command-line front end. Every subcommand reads a [`RunConfig`] (file
//! and/or flags, flags win), calls the library and writes plain files.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::bench::{self, Backend, BenchConfig, SimSpec};
use crate::cv::{make_folds, make_folds_stratified, Criterion, FoldPlan, Utility};
use crate::error::{Result, RidgeError};
use crate::family::Family;
use crate::io::{self, BlockRole, BlockSource, CoefBlock, FitArtifact, MethodName, RunConfig, Table};
use crate::iwls::IwlsControl;
use crate::model::{mean_response, RidgeProblem};
use crate::penalty::PenaltyConfig;
use crate::perf::{double_cv, DoubleCvConfig};
use crate::tune::{tune_preferential, tune_problem, MethodSpec, TuneMethod, TuneResult};

#[derive(Debug, Parser)]
#[command(name = "blockridge", version, about = "Multi-penalty ridge regression for blocks of covariates")]
pub struct Cli {
    /// Threads for fold-level parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tune the block penalties.
    Tune(RunArgs),
    /// Tune (unless --lambdas is given), fit and save an artifact.
    Fit(FitArgs),
    /// Linear predictors and response-scale predictions for new samples.
    Predict(PredictArgs),
    /// Double cross-validation of the whole tuning pipeline.
    Perf(RunArgs),
    /// Time the naive, Woodbury-only and Gram-cached backends.
    Bench(BenchArgs),
    /// Write a synthetic data set and a matching configuration file.
    Simulate(SimArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Penalized block as name=path; repeatable.
    #[arg(long = "block", value_name = "NAME=PATH")]
    pub blocks: Vec<String>,
    /// Unpenalized covariates file.
    #[arg(long)]
    pub unpenalized: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub outer_folds: Option<usize>,
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    /// Comma-separated names of blocks tuned first.
    #[arg(long, value_delimiter = ',')]
    pub preferred: Option<Vec<String>>,
    /// Two comma-separated block names.
    #[arg(long, value_delimiter = ',')]
    pub paired: Option<Vec<String>>,
    #[arg(long)]
    pub global_iters: Option<usize>,
    #[arg(long)]
    pub local_iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct FitArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Fixed penalties in block order; skips tuning.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Args, Clone)]
pub struct PredictArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long = "block", value_name = "NAME=PATH", required = true)]
    pub blocks: Vec<String>,
    #[arg(long)]
    pub unpenalized: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Columns per block, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "5000,5000")]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub budget: usize,
    #[arg(long, value_delimiter = ',', default_value = "naive,woodbury-only,gram-cached")]
    pub backends: Vec<String>,
    /// Seconds per backend before extrapolating.
    #[arg(long)]
    pub time_cap: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SimArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "200,50")]
    pub p: Vec<usize>,
    #[arg(long, default_value = "logistic")]
    pub family: String,
    /// True penalty per block.
    #[arg(long, value_delimiter = ',', default_value = "100,1")]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 0.3)]
    pub censoring: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_block(spec: &str) -> Result<(String, PathBuf)> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| RidgeError::Config(format!("block '{spec}' is not of the form NAME=PATH")))?;
    Ok((name.to_string(), PathBuf::from(path)))
}

/// Merge a configuration file (if any) with flag overrides.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !args.blocks.is_empty() {
        cfg.blocks.retain(|b| b.role == BlockRole::Unpenalized);
        for s in &args.blocks {
            let (name, path) = parse_block(s)?;
            cfg.blocks.push(BlockSource { name, path, role: BlockRole::Penalized });
        }
    }
    if let Some(p) = &args.unpenalized {
        cfg.blocks.retain(|b| b.role == BlockRole::Penalized);
        cfg.blocks.push(BlockSource { name: "unpenalized".into(), path: p.clone(), role: BlockRole::Unpenalized });
    }
    if let Some(r) = &args.response {
        cfg.response = Some(r.clone());
    }
    if let Some(f) = &args.family {
        cfg.family = Some(Family::parse(f)?);
    }
    if let Some(s) = args.seed {
        cfg.folds.seed = s;
        cfg.tuner.seed = s;
    }
    if let Some(k) = args.folds {
        cfg.folds.k = k;
    }
    if let Some(r) = args.repeats {
        cfg.folds.repeats = r;
    }
    if let Some(k) = args.outer_folds {
        cfg.folds.outer = k;
    }
    if let Some(c) = &args.criterion {
        cfg.criterion = Some(Criterion::parse(c)?);
    }
    if let Some(m) = &args.method {
        cfg.method = MethodName::parse(m)?;
    }
    if let Some(p) = &args.preferred {
        cfg.preferred = p.clone();
    }
    if let Some(p) = &args.paired {
        cfg.paired = Some(p.clone());
    }
    if let Some(g) = args.global_iters {
        cfg.tuner.global_iters = g;
    }
    if let Some(l) = args.local_iters {
        cfg.tuner.local_iters = l;
    }
    if let Some(o) = &args.out {
        cfg.output = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_criterion(family: Family) -> Criterion {
    match family {
        Family::Linear => Criterion::Mse,
        _ => Criterion::Cvl,
    }
}

fn fold_plan(cfg: &RunConfig, problem: &RidgeProblem) -> Result<FoldPlan> {
    if cfg.folds.stratified {
        make_folds(&problem.response, cfg.folds.k, cfg.folds.repeats, cfg.folds.seed)
    } else {
        make_folds_stratified(&vec![0; problem.n()], cfg.folds.k, cfg.folds.repeats, cfg.folds.seed)
    }
}

pub fn tune_method(cfg: &RunConfig, problem: &RidgeProblem) -> Result<TuneMethod> {
    Ok(match cfg.method {
        MethodName::Cv => {
            let c = cfg.criterion.unwrap_or(default_criterion(problem.family()));
            TuneMethod::Cv { plan: std::sync::Arc::new(fold_plan(cfg, problem)?), utility: Utility::Builtin(c) }
        }
        MethodName::Ml => TuneMethod::Ml,
        MethodName::Vb => TuneMethod::Elbo,
    })
}

/// Tune as configured: preferential when preferred blocks are named.
pub fn run_tuning(cfg: &RunConfig, problem: &RidgeProblem) -> Result<TuneResult> {
    let method = tune_method(cfg, problem)?;
    let iwls = IwlsControl::default();
    let pref = cfg.preferred_indices()?;
    if pref.is_empty() {
        tune_problem(problem, &method, &cfg.tuner, None, &iwls)
    } else {
        let r = tune_preferential(problem, &method, &cfg.tuner, &pref, &iwls)?;
        let mut stage2 = r.stage2;
        // keep the full history: stage-one entries padded with the preferred
        // blocks' final values
        let mut trace = Vec::new();
        for t in r.stage1.trace {
            let mut lambdas = r.penalties.lambdas.clone();
            for (j, &p) in pref.iter().enumerate() {
                lambdas[p] = t.lambdas[j];
            }
            trace.push(crate::tune::TraceEntry { lambdas, cross: None, ..t });
        }
        trace.append(&mut stage2.trace);
        stage2.evaluations = trace.len();
        stage2.trace = trace;
        Ok(stage2)
    }
}

pub fn load_problem(cfg: &RunConfig) -> Result<(io::Ingested, RidgeProblem)> {
    let data = io::ingest(cfg)?;
    let problem = RidgeProblem::new(data.design.clone(), data.response.clone())?;
    Ok((data, problem))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| RidgeError::Io { path: dir.display().to_string(), source: e })?;
    }
    fs::write(path, text).map_err(|e| RidgeError::Io { path: path.display().to_string(), source: e })
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| RidgeError::Parse(e.to_string()))
}

fn cmd_tune(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let (data, problem) = load_problem(&cfg)?;
    let r = run_tuning(&cfg, &problem)?;
    write(&cfg.output.join("penalties.json"), &json(&r.penalties)?)?;
    write(&cfg.output.join("trace.tsv"), &io::trace_tsv(data.design.names(), &r.trace))?;
    for (name, l) in data.design.names().iter().zip(&r.penalties.lambdas) {
        println!("{name}\t{l}");
    }
    Ok(())
}

/// Fit at `penalties` and package the result.
pub fn build_artifact(
    cfg: &RunConfig,
    data: &io::Ingested,
    problem: &RidgeProblem,
    penalties: &PenaltyConfig,
    trace: Vec<crate::tune::TraceEntry>,
) -> Result<FitArtifact> {
    let fit = problem.fit(penalties, &IwlsControl::default())?;
    let beta = fit.coefficients()?;
    let design = &data.design;
    let p1 = design.unpenalized_cols();
    let unpenalized = (p1 > 0).then(|| CoefBlock {
        name: "unpenalized".into(),
        columns: design.unpenalized_names().to_vec(),
        values: beta.rows(0, p1).iter().copied().collect(),
    });
    let mut off = p1;
    let blocks = (0..design.num_blocks())
        .map(|b| {
            let p = design.block(b).ncols();
            let c = CoefBlock {
                name: design.names()[b].clone(),
                columns: design.column_names(b).to_vec(),
                values: beta.rows(off, p).iter().copied().collect(),
            };
            off += p;
            c
        })
        .collect();
    Ok(FitArtifact {
        format_version: io::ARTIFACT_VERSION,
        fingerprint: cfg.fingerprint()?,
        family: problem.family(),
        penalties: penalties.clone(),
        unpenalized,
        blocks,
        sample_ids: data.ids.clone(),
        eta: fit.state.eta.iter().copied().collect(),
        baseline: fit.state.baseline.clone(),
        converged: fit.state.converged,
        trace,
    })
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let cfg = resolve_config(&args.run)?;
    let (data, problem) = load_problem(&cfg)?;
    let (penalties, trace) = match &args.lambdas {
        Some(l) => {
            let mut p = PenaltyConfig::new(l.clone())?;
            p.fixed = vec![true; p.lambdas.len()];
            if p.num_blocks() != data.design.num_blocks() {
                return Err(RidgeError::Config(format!(
                    "{} lambdas for {} blocks",
                    p.num_blocks(),
                    data.design.num_blocks()
                )));
            }
            (p, Vec::new())
        }
        None => {
            let r = run_tuning(&cfg, &problem)?;
            (r.penalties, r.trace)
        }
    };
    let artifact = build_artifact(&cfg, &data, &problem, &penalties, trace)?;
    let path = cfg.output.join("fit.json");
    write(&path, "")?;
    artifact.save(&path)?;
    write(&cfg.output.join("trace.tsv"), &io::trace_tsv(data.design.names(), &artifact.trace))?;
    println!("{}", path.display());
    Ok(())
}

/// Predictions table: id, η and the response-scale value.
pub fn predict_table(args: &PredictArgs) -> Result<String> {
    let artifact = FitArtifact::load(&args.artifact)?;
    let mut tables = Vec::new();
    for s in &args.blocks {
        let (name, path) = parse_block(s)?;
        tables.push((name, io::read_table(&path)?));
    }
    let unpen = args.unpenalized.as_deref().map(io::read_table).transpose()?;
    let ids = tables
        .first()
        .map(|(_, t): &(String, Table)| t.ids.clone())
        .ok_or_else(|| RidgeError::Config("no new data".into()))?;
    let eta = artifact.predict(&ids, &tables, unpen.as_ref())?;
    let scale = mean_response(artifact.family, &eta);
    let label = match artifact.family {
        Family::Linear => "mean",
        Family::Logistic => "probability",
        Family::Cox => "relative_risk",
    };
    let mut out = format!("id\teta\t{label}\n");
    for (i, id) in ids.iter().enumerate() {
        out.push_str(&format!("{id}\t{}\t{}\n", eta[i], scale[i]));
    }
    Ok(out)
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let table = predict_table(args)?;
    match &args.out {
        Some(p) => write(p, &table),
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

pub fn perf_config(cfg: &RunConfig, family: Family) -> Result<DoubleCvConfig> {
    let criterion = cfg.criterion.unwrap_or(default_criterion(family));
    let method = match cfg.method {
        MethodName::Cv => MethodSpec::Cv { k: cfg.folds.k, repeats: cfg.folds.repeats, utility: Utility::Builtin(criterion) },
        MethodName::Ml => MethodSpec::Ml,
        MethodName::Vb => MethodSpec::Elbo,
    };
    let pref = cfg.preferred_indices()?;
    // CVL is not defined on a single test set; report AUC / c-index / MSE
    let reported = match (criterion, family) {
        (Criterion::Cvl, Family::Logistic) => Criterion::Auc,
        (Criterion::Cvl, Family::Cox) => Criterion::Cindex,
        (Criterion::Cvl, Family::Linear) => Criterion::Mse,
        (c, _) => c,
    };
    Ok(DoubleCvConfig {
        outer_k: cfg.folds.outer,
        seed: cfg.folds.seed,
        criterion: reported,
        method,
        tuner: cfg.tuner,
        preferred: (!pref.is_empty()).then_some(pref),
        fixed: None,
    })
}

fn cmd_perf(args: &RunArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let (_, problem) = load_problem(&cfg)?;
    let dcfg = perf_config(&cfg, problem.family())?;
    let report = double_cv(&problem, &dcfg, &IwlsControl::default())?;
    let table = report.to_table();
    write(&cfg.output.join("perf.tsv"), &table)?;
    write(&cfg.output.join("perf.json"), &json(&report)?)?;
    print!("{table}");
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let spec = SimSpec {
        n: args.n,
        block_sizes: args.p.clone(),
        family: Family::Logistic,
        lambdas: vec![1.0; args.p.len()],
        censoring: 0.0,
        seed: args.seed,
    };
    let sim = bench::simulate(&spec)?;
    let backends = args.backends.iter().map(|b| Backend::parse(b)).collect::<Result<Vec<_>>>()?;
    let cfg = BenchConfig {
        budget: args.budget,
        backends,
        seed: args.seed,
        time_cap: args.time_cap.map(Duration::from_secs_f64),
        ..Default::default()
    };
    let report = bench::benchmark(&sim.design, &cfg)?;
    if let Some(p) = &args.out {
        write(p, &json(&report)?)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

/// Write blocks, response, true coefficients and a `config.toml` to `dir`.
pub fn write_simulation(spec: &SimSpec, dir: &Path) -> Result<PathBuf> {
    let sim = bench::simulate(spec)?;
    fs::create_dir_all(dir).map_err(|e| RidgeError::Io { path: dir.display().to_string(), source: e })?;
    let ids: Vec<String> = (0..spec.n).map(|i| format!("s{:04}", i + 1)).collect();
    let mut cfg = RunConfig { family: Some(spec.family), output: PathBuf::from("out"), ..Default::default() };
    for (b, name) in spec.block_names().iter().enumerate() {
        let cols: Vec<String> = (0..spec.block_sizes[b]).map(|j| format!("{name}_{}", j + 1)).collect();
        let file = format!("{name}.csv");
        io::write_table(&dir.join(&file), &ids, &cols, sim.design.block(b))?;
        let beta = DMatrix::from_column_slice(cols.len(), 1, sim.beta[b].as_slice());
        io::write_table(&dir.join(format!("{name}_beta.csv")), &cols, &["beta".into()], &beta)?;
        cfg.blocks.push(BlockSource { name: name.clone(), path: file.into(), role: BlockRole::Penalized });
    }
    let (cols, resp) = match spec.family {
        Family::Cox => (
            vec!["time".to_string(), "status".to_string()],
            DMatrix::from_columns(&[sim.response.time.clone().expect("cox time"), sim.response.y.clone()]),
        ),
        _ => (vec!["y".to_string()], DMatrix::from_columns(std::slice::from_ref(&sim.response.y))),
    };
    io::write_table(&dir.join("response.csv"), &ids, &cols, &resp)?;
    cfg.response = Some("response.csv".into());
    let path = dir.join("config.toml");
    write(&path, &cfg.to_toml()?)?;
    Ok(path)
}

fn cmd_simulate(args: &SimArgs) -> Result<()> {
    let spec = SimSpec {
        n: args.n,
        block_sizes: args.p.clone(),
        family: Family::parse(&args.family)?,
        lambdas: args.lambdas.clone(),
        censoring: args.censoring,
        seed: args.seed,
    };
    let path = write_simulation(&spec, &args.out)?;
    println!("{}", path.display());
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Tune(a) => cmd_tune(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Perf(a) => cmd_perf(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

/// Single-line error report.
pub fn error_line(kind: &str, message: &str) -> String {
    format!("error kind={kind} message={}", message.replace(['\n', '\r'], " "))
}

/// Parse `argv`, run, and return the exit code: 0 on success, 2 for bad
/// input or configuration, 3 for numerical failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return 2;
        }
    };
    let result = match cli.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(RidgeError::Config(format!("cannot start {w} workers: {e}"))),
        },
        None => execute(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}

//! The `audit` command line.
//!
//! Exit codes: 0 when a run completes (whatever the verdict), 2 on usage
//! errors, 3 on data or validation errors, 4 when the scorer cannot be
//! reached.

pub mod scorer;

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use shiftaudit::distance::{
    calibrate_epsilon, convergence_study, estimate_nn_distance, mean_shift, wasserstein1, Calibration, ConvergenceRow,
    DistanceConfig, DistanceEstimate, PairPool,
};
use shiftaudit::io::{read_paired_scores, write_json, write_records_csv, ScoreRecord, ScoreValue};
use shiftaudit::ks::{repeated_ks_audit, KsTrace};
use shiftaudit::score::into_batches;
use shiftaudit::sim::{epsilon_sweep, run_experiment, run_ks_baseline, summarize, ExperimentSpec, SweepPoint};
use shiftaudit::{run_audit_stream, AuditError, AuditTrace, NetConfig, ScorePair, TestConfig, Verdict};
use thiserror::Error;

use scorer::{fetch_scores, ScorerConfig, ScorerError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(#[from] AuditError),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::File { .. } => 3,
            CliError::Scorer(ScorerError::ContractViolation(_)) => 3,
            CliError::Scorer(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "audit", version, about = "Anytime-valid audits of behavioral shifts between two models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sequential test of "distance <= epsilon" on a paired score file.
    Run(RunArgs),
    /// The exact test (epsilon pinned to 0).
    Exact(TestArgs),
    /// Estimate the distance between two acceptable variants and emit it as
    /// a tolerance.
    Calibrate(DistanceArgs),
    /// Distance estimate, convergence study and summary diagnostics.
    Distance(DistanceArgs),
    /// Repeated Kolmogorov-Smirnov test on the same stream (scalar scores).
    BaselineKs(KsArgs),
    /// Run a simulated experiment and write its records.
    Simulate(SimulateArgs),
    /// Detection rate over a tolerance grid on simulated folds.
    Sweep(SweepArgs),
    /// Score model outputs with an external scorer.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Paired score records, one JSON object per line; `-` reads stdin.
    #[arg(long)]
    pub scores: String,
    /// Test configuration (TOML, same keys as the flags).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Betting network configuration (TOML).
    #[arg(long)]
    pub net_config: Option<PathBuf>,
    /// Where to write the verdict and full trace as JSON.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub test: TestArgs,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    /// Paired score records; both sides are treated as draws to compare.
    #[arg(long)]
    pub scores: String,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    /// Pairs per repeat; defaults to every full batch in the file.
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub net_config: Option<PathBuf>,
    /// Training sizes for the convergence study (distance only).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Where to write the result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KsArgs {
    #[arg(long)]
    pub scores: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4000)]
    pub max_samples: usize,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment spec (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory for `records.csv`, `summary.json` and, with the KS
    /// baseline enabled, `ks_records.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Tolerances to sweep; defaults to the spec's `epsilons`.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Model outputs, one JSON object per line with keys `prompt_id`,
    /// `output_a` and `output_b`.
    #[arg(long)]
    pub input: String,
    #[arg(long)]
    pub endpoint: String,
    /// Where to write the paired score records; `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
    #[arg(long, default_value_t = 30.0)]
    pub timeout_secs: f64,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 32)]
    pub chunk_size: usize,
}

/// What `--trace-out` receives for `run` and `exact`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TestConfig,
    pub trace: AuditTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub alpha: f64,
    pub trace: KsTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub dim: usize,
    pub mean_shift: f64,
    pub wasserstein1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub estimate: DistanceEstimate,
    pub convergence: Vec<ConvergenceRow>,
    pub diagnostics: Vec<Diagnostics>,
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_test(&a.test, a.epsilon, stdout),
        Command::Exact(a) => cmd_test(&a, Some(0.0), stdout),
        Command::Calibrate(a) => cmd_calibrate(&a, stdout),
        Command::Distance(a) => cmd_distance(&a, stdout),
        Command::BaselineKs(a) => cmd_ks(&a, stdout),
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Sweep(a) => cmd_sweep(&a, stdout),
        Command::Score(a) => cmd_score(&a, stdout),
    }
}

fn file_err(path: &Path, e: impl ToString) -> CliError {
    CliError::File { path: path.to_path_buf(), message: e.to_string() }
}

fn open_input(source: &str) -> Result<Box<dyn BufRead>> {
    if source == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(source).map_err(|e| file_err(Path::new(source), e))?;
    Ok(Box::new(BufReader::new(f)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| file_err(path, e))?))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    write_json(&mut w, value)?;
    w.flush().map_err(|e| file_err(path, e))
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    toml::from_str(&text).map_err(|e| file_err(path, e.message()))
}

fn say(stdout: &mut dyn Write, line: String) -> Result<()> {
    writeln!(stdout, "{line}").map_err(|e| file_err(Path::new("<stdout>"), e))
}

/// Config file first, then the network file, then individual flags.
pub fn build_config(args: &TestArgs, epsilon: Option<f64>) -> Result<TestConfig> {
    let mut cfg: TestConfig = match &args.config {
        Some(p) => read_toml(p)?,
        None => TestConfig::default(),
    };
    if let Some(p) = &args.net_config {
        cfg.net = read_toml::<NetConfig>(p)?;
    }
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.epsilon = epsilon.unwrap_or(cfg.epsilon);
    cfg.batch_size = args.batch_size.unwrap_or(cfg.batch_size);
    cfg.max_samples = args.max_samples.unwrap_or(cfg.max_samples);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    if cfg.batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be positive".into()));
    }
    Ok(cfg)
}

pub fn verdict_line(v: &Verdict, alpha: f64, epsilon: f64) -> String {
    let threshold = (1.0 / alpha).ln();
    match v.outcome {
        shiftaudit::Outcome::RejectedAt { round, samples_seen } => format!(
            "REJECTED at round {round} after {samples_seen} samples: log-wealth {:.4} >= {threshold:.4} (alpha {alpha}, epsilon {epsilon})",
            v.final_log_wealth
        ),
        shiftaudit::Outcome::NotRejected { samples_seen } => format!(
            "NOT-REJECTED after {samples_seen} samples: log-wealth {:.4} < {threshold:.4} (alpha {alpha}, epsilon {epsilon})",
            v.final_log_wealth
        ),
    }
}

fn cmd_test(args: &TestArgs, epsilon: Option<f64>, stdout: &mut dyn Write) -> Result<()> {
    let cfg = build_config(args, epsilon)?;
    let mut reader = read_paired_scores(open_input(&args.scores)?, cfg.batch_size);
    // The first record fixes the score dimension.
    let first = reader.next();
    let cfg = match reader.dim() {
        Some(d) => cfg.with_dim(d),
        None => cfg,
    };
    let trace = run_audit_stream(first.into_iter().chain(reader), &cfg)?;
    say(stdout, verdict_line(&trace.verdict, cfg.alpha, cfg.epsilon))?;
    if let Some(p) = &args.trace_out {
        write_json_file(p, &RunReport { config: cfg, trace })?;
    }
    Ok(())
}

fn read_all_pairs(source: &str, batch_size: usize) -> Result<Vec<ScorePair>> {
    let mut pairs = Vec::new();
    for batch in read_paired_scores(open_input(source)?, batch_size) {
        pairs.extend(batch?.pairs);
    }
    Ok(pairs)
}

fn distance_setup(args: &DistanceArgs) -> Result<(PairPool, DistanceConfig, Vec<ScorePair>)> {
    if args.batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be positive".into()));
    }
    let pairs = read_all_pairs(&args.scores, args.batch_size)?;
    let d = pairs.first().map(ScorePair::dim).ok_or(AuditError::EmptyInput("no score records"))?;
    let net = match &args.net_config {
        Some(p) => read_toml::<NetConfig>(p)?,
        None => NetConfig::default(),
    }
    .with_input_dim(d);
    let max_samples = args.max_samples.unwrap_or(pairs.len() / args.batch_size * args.batch_size);
    let cfg = DistanceConfig { batch_size: args.batch_size, max_samples, repeats: args.repeats, seed: args.seed, net };
    Ok((PairPool::new(pairs.clone(), args.seed), cfg, pairs))
}

fn cmd_calibrate(args: &DistanceArgs, stdout: &mut dyn Write) -> Result<()> {
    let (pool, cfg, _) = distance_setup(args)?;
    let cal: Calibration = calibrate_epsilon(&pool, &cfg)?;
    let e = &cal.estimate;
    say(
        stdout,
        format!(
            "epsilon = {:.6} (estimate {:.6} +- {:.6} over {} repeats, b = {}, N = {})",
            cal.epsilon, e.value, e.std_across_repeats, e.repeats, e.batch_size, e.sample_budget
        ),
    )?;
    if let Some(p) = &args.out {
        write_json_file(p, &cal)?;
    }
    Ok(())
}

fn cmd_distance(args: &DistanceArgs, stdout: &mut dyn Write) -> Result<()> {
    let (pool, cfg, pairs) = distance_setup(args)?;
    let estimate = estimate_nn_distance(&pool, &cfg)?;
    let convergence = convergence_study(&pool, &args.sizes, &cfg)?;
    let diagnostics = (0..pairs[0].dim())
        .map(|k| {
            let a: Vec<f64> = pairs.iter().map(|p| p.a[k]).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.b[k]).collect();
            Ok(Diagnostics { dim: k, mean_shift: mean_shift(&a, &b)?, wasserstein1: wasserstein1(&a, &b)? })
        })
        .collect::<std::result::Result<Vec<_>, AuditError>>()?;
    let diag: Vec<String> =
        diagnostics.iter().map(|d| format!("dim {}: shift {:+.4}, W1 {:.4}", d.dim, d.mean_shift, d.wasserstein1)).collect();
    say(
        stdout,
        format!(
            "distance {:.6} +- {:.6} (b = {}, N = {}, {} repeats); {}",
            estimate.value,
            estimate.std_across_repeats,
            estimate.batch_size,
            estimate.sample_budget,
            estimate.repeats,
            diag.join("; ")
        ),
    )?;
    if let Some(p) = &args.out {
        write_json_file(p, &DistanceReport { estimate, convergence, diagnostics })?;
    }
    Ok(())
}

fn cmd_ks(args: &KsArgs, stdout: &mut dyn Write) -> Result<()> {
    if args.batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be positive".into()));
    }
    let mut pairs = Vec::new();
    for batch in read_paired_scores(open_input(&args.scores)?, args.batch_size) {
        pairs.extend(batch?.pairs);
        if pairs.len() >= args.max_samples {
            break;
        }
    }
    pairs.truncate(args.max_samples);
    let trace = repeated_ks_audit(into_batches(pairs, args.batch_size), args.alpha)?;
    let p = trace.rounds.last().map_or(1.0, |r| r.p_value);
    say(stdout, format!("{} (repeated KS, last p-value {p:.4e}, alpha {})", trace.verdict.label(), args.alpha))?;
    if let Some(path) = &args.trace_out {
        write_json_file(path, &KsReport { alpha: args.alpha, trace })?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec = ExperimentSpec::from_toml(&fs::read_to_string(&args.spec).map_err(|e| file_err(&args.spec, e))?)?;
    let records = run_experiment(&spec)?;
    fs::create_dir_all(&args.out).map_err(|e| file_err(&args.out, e))?;
    let csv_path = args.out.join("records.csv");
    let mut w = create(&csv_path)?;
    write_records_csv(&mut w, &records)?;
    w.flush().map_err(|e| file_err(&csv_path, e))?;
    let summary = summarize(&records);
    write_json_file(&args.out.join("summary.json"), &summary)?;
    if spec.ks_baseline {
        let ks = run_ks_baseline(&spec)?;
        let path = args.out.join("ks_records.csv");
        let mut w = create(&path)?;
        write_records_csv(&mut w, &ks)?;
        w.flush().map_err(|e| file_err(&path, e))?;
    }
    let cells: Vec<String> = summary
        .iter()
        .map(|c| format!("eps {} sigma {}: {}/{}", c.epsilon, c.sigma, c.rate.rejected, c.rate.total))
        .collect();
    say(stdout, format!("{}: {} records; rejected {}", spec.name, records.len(), cells.join(", ")))
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut spec = ExperimentSpec::from_toml(&fs::read_to_string(&args.spec).map_err(|e| file_err(&args.spec, e))?)?;
    if !args.epsilons.is_empty() {
        spec.epsilons = args.epsilons.clone();
    }
    let sweep: Vec<SweepPoint> = epsilon_sweep(&spec)?;
    let parts: Vec<String> = sweep.iter().map(|p| format!("eps {}: {:.3}", p.epsilon, p.rate.rate)).collect();
    say(stdout, format!("{}: detection rate {}", spec.name, parts.join(", ")))?;
    if let Some(p) = &args.out {
        write_json_file(p, &sweep)?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct OutputRecord {
    prompt_id: String,
    output_a: String,
    output_b: String,
}

fn cmd_score(args: &ScoreArgs, stdout: &mut dyn Write) -> Result<()> {
    if !(args.timeout_secs > 0.0 && args.timeout_secs.is_finite()) {
        return Err(CliError::Usage("--timeout-secs must be positive".into()));
    }
    let mut records = Vec::new();
    for (i, line) in open_input(&args.input)?.lines().enumerate() {
        let line = line.map_err(|e| file_err(Path::new(&args.input), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: OutputRecord = serde_json::from_str(&line)
            .map_err(|e| AuditError::Parse { line: i + 1, message: e.to_string() })?;
        records.push(rec);
    }
    let cfg = ScorerConfig {
        timeout: Duration::from_secs_f64(args.timeout_secs),
        retries: args.retries,
        concurrency: args.concurrency,
        chunk_size: args.chunk_size,
        ..Default::default()
    };
    let texts_a: Vec<String> = records.iter().map(|r| r.output_a.clone()).collect();
    let texts_b: Vec<String> = records.iter().map(|r| r.output_b.clone()).collect();
    let scores_a = fetch_scores(&args.endpoint, &texts_a, &cfg)?;
    let scores_b = fetch_scores(&args.endpoint, &texts_b, &cfg)?;

    let mut out: Box<dyn Write> = if args.out == "-" { Box::new(&mut *stdout) } else { Box::new(create(Path::new(&args.out))?) };
    for ((rec, a), b) in records.iter().zip(&scores_a).zip(&scores_b) {
        let line = ScoreRecord {
            prompt_id: rec.prompt_id.clone(),
            score_a: ScoreValue::from_vec(a),
            score_b: ScoreValue::from_vec(b),
        };
        let json = serde_json::to_string(&line).map_err(|e| AuditError::Io(e.to_string()))?;
        writeln!(out, "{json}").map_err(|e| file_err(Path::new(&args.out), e))?;
    }
    out.flush().map_err(|e| file_err(Path::new(&args.out), e))?;
    drop(out);
    if args.out != "-" {
        say(stdout, format!("scored {} prompts into {}", records.len(), args.out))?;
    }
    Ok(())
}

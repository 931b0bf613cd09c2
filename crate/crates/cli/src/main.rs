//! `scalper`: generate data, train, backtest and compare policies.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid config, 3 data error,
//! 4 checkpoint mismatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use scalper_core::agent::{train, AgentError, TRAIN_LOG_HEADER};
use scalper_core::config::{ConfigError, RunConfig};
use scalper_core::env::{EnvError, PreparedDay};
use scalper_core::eval::{
    backtest, write_metrics_csv, write_net_value_csv, BaselineKind, EvalError, MetricsRow,
    NetValueSeries, Policy,
};
use scalper_core::marketdata::{generate_synthetic, load_csv, write_csv, DataError, Pattern, SyntheticSpec};
use scalper_core::neural::{Checkpoint, NeuralError};
use scalper_core::parallel;

#[derive(Parser)]
#[command(name = "scalper", version, about = "Intraday trading agent: data, training, backtests")]
struct Cli {
    /// Flat JSON run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the `out_dir` key.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides any config key, e.g. `--set epochs=2` (value parsed as JSON when possible).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset.
    Generate(GenerateArgs),
    /// Train on `train_data`; writes checkpoint.json and train_log.csv.
    Train,
    /// Backtest a checkpoint or a baseline on `test_data`.
    Backtest(BacktestArgs),
    /// Backtest several policies on `test_data` into one report.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// flat, trend, v-shape, sine, or random (geometric random walk).
    #[arg(long, default_value = "random")]
    pattern: String,
    #[arg(long, default_value_t = 1)]
    days: usize,
    #[arg(long, default_value_t = 240)]
    minutes: usize,
    #[arg(long, default_value_t = 100.0)]
    initial_price: f64,
    #[arg(long, default_value_t = 0.05)]
    tick_size: f64,
    #[arg(long, default_value_t = 0.0005)]
    volatility: f64,
    #[arg(long, default_value_t = 0.02)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.01)]
    drift: f64,
    #[arg(long)]
    pivot: Option<usize>,
    #[arg(long, default_value_t = 20.0)]
    base_depth: f64,
    /// Output CSV; defaults to `<out>/synthetic.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BacktestArgs {
    /// Checkpoint written by `train`.
    checkpoint: Option<PathBuf>,
    /// bah, mv or tsm.
    #[arg(long, conflicts_with = "checkpoint")]
    baseline: Option<String>,
    /// Uniform random actions seeded by `seed`.
    #[arg(long, conflicts_with_all = ["checkpoint", "baseline"])]
    random: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated: bah, mv, tsm, random, or checkpoint paths.
    #[arg(long, value_delimiter = ',', required = true)]
    policies: Vec<String>,
}

enum CliError {
    Config(String),
    Data(String),
    Checkpoint(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Other(_) => 1,
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Checkpoint(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Data(m) | Self::Checkpoint(m) | Self::Other(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config(m) => Self::Config(m),
            EnvError::Data(d) => d.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Config(m) => Self::Config(m),
            AgentError::Env(env) => env.into(),
            AgentError::EmptyDataset => Self::Data(e.to_string()),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Mismatch(m) => Self::Checkpoint(m),
            EvalError::Neural(n) => Self::Checkpoint(n.to_string()),
            EvalError::Env(env) => env.into(),
            EvalError::EmptyDataset => Self::Data(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut doc: Value = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?
        }
        None => Value::Object(Default::default()),
    };
    let map = doc
        .as_object_mut()
        .ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
    for kv in &cli.overrides {
        let (key, raw) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{kv}` is not KEY=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(key.to_string(), value);
    }
    if let Some(seed) = cli.seed {
        map.insert("seed".into(), seed.into());
    }
    if let Some(out) = &cli.out {
        map.insert("out_dir".into(), out.to_string_lossy().into_owned().into());
    }
    Ok(RunConfig::from_json(&doc.to_string())?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn echo_config(cfg: &RunConfig) -> Result<(), CliError> {
    write_file(&cfg.out_dir.join("config.json"), cfg.echo().as_bytes())
}

fn load_days(cfg: &RunConfig, key: &'static str, path: &Option<PathBuf>) -> Result<Vec<PreparedDay>, CliError> {
    let path = path
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("`{key}` is required for this command")))?;
    let days = load_csv(path)?;
    if days.is_empty() {
        return Err(CliError::Data(format!("{}: no trading days", path.display())));
    }
    Ok(PreparedDay::prepare_all(&days, cfg.warmup)?)
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Result<(), CliError> {
    let pattern = match args.pattern.as_str() {
        "random" | "none" => None,
        other => Some(other.parse::<Pattern>().map_err(CliError::Config)?),
    };
    let spec = SyntheticSpec {
        days: args.days,
        minutes_per_day: args.minutes,
        initial_price: args.initial_price,
        tick_size: args.tick_size,
        volatility: args.volatility,
        pattern,
        amplitude: args.amplitude,
        drift: args.drift,
        pivot: args.pivot,
        base_depth: args.base_depth,
        ..SyntheticSpec::default()
    };
    let days = generate_synthetic(&spec, cli.seed.unwrap_or(0)).map_err(|e| match e {
        DataError::InvalidSpec(m) => CliError::Config(m),
        other => other.into(),
    })?;
    let path = args.output.clone().unwrap_or_else(|| {
        cli.out.clone().unwrap_or_else(|| PathBuf::from("out")).join("synthetic.csv")
    });
    let mut buf = Vec::new();
    write_csv(&days, &mut buf).map_err(|e| io_err(&path, e))?;
    write_file(&path, &buf)?;
    println!("wrote {} days to {}", days.len(), path.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let days = load_days(cfg, "train_data", &cfg.train_data)?;
    echo_config(cfg)?;
    let outcome = train(&days, &cfg.env_config(), &cfg.train_config(), &cfg.net_config())?;
    let mut echo: Value = serde_json::from_str(&cfg.echo()).map_err(|e| CliError::Other(e.to_string()))?;
    // where the files land is not part of the model
    if let Some(map) = echo.as_object_mut() {
        map.remove("out_dir");
    }
    let ckpt = Checkpoint {
        seed: cfg.seed,
        config: echo,
        params: outcome.params,
    };
    let json = ckpt.to_json().map_err(|e| CliError::Other(e.to_string()))?;
    write_file(&cfg.out_dir.join("checkpoint.json"), json.as_bytes())?;
    let mut log = String::from(TRAIN_LOG_HEADER);
    log.push('\n');
    for row in &outcome.log {
        log.push_str(&row.to_csv_line());
        log.push('\n');
    }
    write_file(&cfg.out_dir.join("train_log.csv"), log.as_bytes())?;
    if let Some(last) = outcome.log.last() {
        println!(
            "trained {} epochs, {} transitions, {} gradient steps; last epoch loss_q {} train_tr {}",
            last.epoch, outcome.transitions_stored, outcome.gradient_steps, last.loss_q, last.train_tr
        );
    }
    println!("wrote {}", cfg.out_dir.join("checkpoint.json").display());
    Ok(())
}

/// A policy plus the label used for its metrics row and net-value file.
fn resolve_policy(cfg: &RunConfig, spec: &str) -> Result<(String, Policy), CliError> {
    match spec {
        "random" => Ok(("random".into(), Policy::Random { seed: cfg.seed })),
        "bah" | "mv" | "tsm" => {
            let kind: BaselineKind = spec.parse().map_err(CliError::Config)?;
            Ok((kind.label().into(), Policy::Baseline(kind, cfg.baseline_params())))
        }
        path => {
            let path = Path::new(path);
            let ckpt = Checkpoint::load(path).map_err(|e| match e {
                NeuralError::Io(io) => CliError::Other(format!("{}: {io}", path.display())),
                other => CliError::Checkpoint(format!("{}: {other}", path.display())),
            })?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "checkpoint".into());
            Ok((label, Policy::Network(Box::new(ckpt.params))))
        }
    }
}

fn write_reports(cfg: &RunConfig, results: &[(String, NetValueSeries)]) -> Result<Vec<u8>, CliError> {
    let rows: Vec<MetricsRow> = results
        .iter()
        .map(|(label, series)| MetricsRow {
            asset: cfg.asset.clone(),
            policy: label.clone(),
            report: series.metrics(cfg.dd_mode),
        })
        .collect();
    let mut metrics = Vec::new();
    write_metrics_csv(&rows, &mut metrics).map_err(|e| CliError::Other(e.to_string()))?;
    write_file(&cfg.out_dir.join("metrics.csv"), &metrics)?;
    for (label, series) in results {
        let mut buf = Vec::new();
        write_net_value_csv(&series.points, &mut buf).map_err(|e| CliError::Other(e.to_string()))?;
        write_file(&cfg.out_dir.join(format!("net_value_{label}.csv")), &buf)?;
    }
    Ok(metrics)
}

fn run_policies(cfg: &RunConfig, specs: &[String]) -> Result<(), CliError> {
    let days = load_days(cfg, "test_data", &cfg.test_data)?;
    let policies = specs
        .iter()
        .map(|s| resolve_policy(cfg, s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = std::collections::HashSet::new();
    if let Some((dup, _)) = policies.iter().find(|(label, _)| !seen.insert(label.clone())) {
        return Err(CliError::Config(format!("policy label `{dup}` appears twice")));
    }
    echo_config(cfg)?;
    let env_cfg = cfg.env_config();
    // workers only compute; files are written afterwards in input order
    let results = parallel::map(&policies, |(label, policy)| {
        backtest(policy, &days, &env_cfg).map(|s| (label.clone(), s))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let metrics = write_reports(cfg, &results)?;
    std::io::stdout()
        .write_all(&metrics)
        .map_err(|e| CliError::Other(e.to_string()))?;
    Ok(())
}

fn cmd_backtest(cfg: &RunConfig, args: &BacktestArgs) -> Result<(), CliError> {
    let spec = match (&args.checkpoint, &args.baseline, args.random) {
        (Some(path), None, false) => path.to_string_lossy().into_owned(),
        (None, Some(kind), false) => {
            let kind: BaselineKind = kind.parse().map_err(CliError::Config)?;
            kind.label().to_string()
        }
        (None, None, true) => "random".to_string(),
        _ => {
            return Err(CliError::Config(
                "backtest needs exactly one of a checkpoint path, --baseline or --random".into(),
            ))
        }
    };
    run_policies(cfg, &[spec])
}

fn cmd_compare(cfg: &RunConfig, args: &CompareArgs) -> Result<(), CliError> {
    if args.policies.len() < 2 {
        return Err(CliError::Config("compare needs at least two policies".into()));
    }
    run_policies(cfg, &args.policies)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(cli, args),
        Command::Train => cmd_train(&load_config(cli)?),
        Command::Backtest(args) => cmd_backtest(&load_config(cli)?, args),
        Command::Compare(args) => cmd_compare(&load_config(cli)?, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

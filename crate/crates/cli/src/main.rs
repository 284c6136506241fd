//! `vapal` — run active-learning simulations from the command line.
//!
//! Subcommands:
//! - `run`: one strategy over a dataset, writing a results CSV and a
//!   manifest sufficient to reproduce it.
//! - `compare`: several strategies on the same dataset and seeds, emitting
//!   a long-format CSV (`strategy,round,mean_f1,sd_f1`).
//! - `gen-data`: synthetic Gaussian-blob datasets as JSONL.
//!
//! Exit codes: 0 on success, 2 for usage errors, 1 for runtime failures.
//! `VAPAL_OUT_DIR` sets the default output directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vapal::data_io::{
    load_dataset, synthetic_blobs, write_atomic, write_comparison, write_dataset, write_results,
    BlobConfig, ComparisonRow, Dataset,
};
use vapal::simulation::{
    full_supervision_reference, run_simulation, summarize, SeedSelection, SimConfig,
};
use vapal::{ModelConfig, Strategy, TrainConfig, VatConfig};

#[derive(Parser)]
#[command(
    name = "vapal",
    version,
    about = "Pool-based active-learning simulations with virtual adversarial perturbation acquisition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one acquisition strategy and write results + manifest
    Run(RunArgs),
    /// Run several strategies on one dataset and emit plot-ready aggregates
    Compare(CompareArgs),
    /// Generate a synthetic blob dataset (JSONL)
    GenData(GenDataArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct DataSourceArgs {
    /// JSONL dataset to load
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// Use the built-in synthetic blob benchmark (4 classes, d=32, 2000-point pool)
    #[arg(long)]
    synthetic: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyName {
    Rand,
    Entropy,
    Badge,
    Vapal,
    LdsVec,
    LdrClass,
}

impl StrategyName {
    fn build(self, vat: VatConfig, prt: f64) -> Strategy {
        match self {
            StrategyName::Rand => Strategy::Rand,
            StrategyName::Entropy => Strategy::Entropy,
            StrategyName::Badge => Strategy::Badge,
            StrategyName::Vapal => Strategy::Vapal(vat),
            StrategyName::LdsVec => Strategy::LdsVec(vat),
            StrategyName::LdrClass => Strategy::LdrClass { vat, prt },
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SeedSelectionArg {
    /// Uniform random first round
    Random,
    /// Use the strategy itself with a freshly initialized head
    StrategyColdStart,
}

impl From<SeedSelectionArg> for SeedSelection {
    fn from(value: SeedSelectionArg) -> Self {
        match value {
            SeedSelectionArg::Random => SeedSelection::Random,
            SeedSelectionArg::StrategyColdStart => SeedSelection::StrategyColdStart,
        }
    }
}

#[derive(Args)]
struct SimArgs {
    /// Acquisition rounds
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    /// Examples labeled per round
    #[arg(long, default_value_t = 20)]
    query_size: usize,
    /// Independent runs with different seeds
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Global seed every run derives from
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Power iterations for the virtual adversarial perturbation
    #[arg(long, default_value_t = 10)]
    power_iters: usize,
    /// Perturbation radius ε
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Gradient probe radius ξ
    #[arg(long, default_value_t = 10.0)]
    xi: f64,
    /// Percentile threshold for ldr-class
    #[arg(long, default_value_t = 90.0)]
    prt: f64,
    /// How round one selects examples
    #[arg(long, value_enum, default_value_t = SeedSelectionArg::Random)]
    seed_selection: SeedSelectionArg,
}

impl SimArgs {
    fn vat_config(&self) -> VatConfig {
        VatConfig {
            power_iters: self.power_iters,
            epsilon: self.epsilon,
            xi: self.xi,
            seed: self.seed,
        }
    }

    fn sim_config(&self, strategy: Strategy, dataset: &Dataset) -> SimConfig {
        SimConfig {
            strategy,
            rounds: self.rounds,
            query_size: self.query_size,
            seed_selection: self.seed_selection.into(),
            model_cfg: ModelConfig::new(dataset.dim, dataset.num_classes),
            train_cfg: TrainConfig::default(),
            global_seed: self.seed,
            num_runs: self.runs,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: DataSourceArgs,
    /// Acquisition strategy
    #[arg(long, value_enum)]
    strategy: StrategyName,
    #[command(flatten)]
    sim: SimArgs,
    /// Results CSV path (default: $VAPAL_OUT_DIR/results.csv)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: DataSourceArgs,
    /// Strategies to compare
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "vapal,rand,entropy,badge"
    )]
    strategies: Vec<StrategyName>,
    /// Also report the fully supervised reference as a `full` row (round 0)
    #[arg(long)]
    with_full: bool,
    #[command(flatten)]
    sim: SimArgs,
    /// Comparison CSV path (default: $VAPAL_OUT_DIR/compare.csv)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    /// Output JSONL path (default: $VAPAL_OUT_DIR/blobs.jsonl)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Number of classes
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Feature dimension
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Points generated per class (80/20 train/test split)
    #[arg(long, default_value_t = 625)]
    per_class: usize,
    /// Scale of the Gaussian class centers
    #[arg(long, default_value_t = 1.0)]
    center_scale: f64,
    /// Per-point noise standard deviation
    #[arg(long, default_value_t = 1.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum DatasetSource {
    Path(String),
    Synthetic(BlobConfig),
}

/// Everything needed to reproduce an output file exactly, written next to
/// it as `<stem>.manifest.json`.
#[derive(Serialize)]
struct Manifest {
    artifact_version: String,
    command: String,
    dataset: DatasetSource,
    /// Fully resolved simulation configs, one per strategy.
    sims: Vec<SimConfig>,
    /// The resolved VAT parameters and percentile flag, echoed even for
    /// strategies that ignore them.
    vat: VatConfig,
    prt: f64,
    with_full: bool,
    out: String,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::GenData(args) => cmd_gen_data(args),
    }
}

fn resolve_source(source: &DataSourceArgs) -> Result<(Dataset, DatasetSource)> {
    match &source.dataset {
        Some(path) => {
            let dataset = load_dataset(path)
                .with_context(|| format!("loading dataset {}", path.display()))?;
            Ok((dataset, DatasetSource::Path(path.display().to_string())))
        }
        None => {
            let cfg = BlobConfig::default();
            let dataset = synthetic_blobs(&cfg)?;
            Ok((dataset, DatasetSource::Synthetic(cfg)))
        }
    }
}

fn default_out(file_name: &str) -> PathBuf {
    let dir = std::env::var_os("VAPAL_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| ".".into());
    dir.join(file_name)
}

fn prepare_out(out: Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
    let path = out.unwrap_or_else(|| default_out(default_name));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating output directory {}", parent.display()))?;
        }
    }
    Ok(path)
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn write_manifest(manifest: &Manifest, out: &Path) -> Result<()> {
    let path = manifest_path(out);
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (dataset, source) = resolve_source(&args.source)?;
    let vat = args.sim.vat_config();
    let strategy = args.strategy.build(vat.clone(), args.sim.prt);
    let cfg = args.sim.sim_config(strategy, &dataset);
    let out = prepare_out(args.out, "results.csv")?;

    eprintln!(
        "running {} on {} ({} train / {} test, d={}, C={})",
        cfg.strategy.name(),
        dataset.name,
        dataset.train.len(),
        dataset.test.len(),
        dataset.dim,
        dataset.num_classes
    );
    let records = run_simulation(&cfg, &dataset)?;
    write_results(&records, &out)?;
    write_manifest(
        &Manifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "run".into(),
            dataset: source,
            sims: vec![cfg],
            vat,
            prt: args.sim.prt,
            with_full: false,
            out: out.display().to_string(),
        },
        &out,
    )?;

    for row in summarize(&records) {
        println!("round {:>3}  mean_f1 {:.4}  sd {:.4}", row.round, row.mean_f1, row.sd_f1);
    }
    println!("wrote {} and {}", out.display(), manifest_path(&out).display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let (dataset, source) = resolve_source(&args.source)?;
    let vat = args.sim.vat_config();
    let out = prepare_out(args.out, "compare.csv")?;

    let mut sims = Vec::new();
    let mut rows: Vec<ComparisonRow> = Vec::new();
    for name in &args.strategies {
        let strategy = name.build(vat.clone(), args.sim.prt);
        let cfg = args.sim.sim_config(strategy, &dataset);
        eprintln!("running {} ...", cfg.strategy.name());
        let records = run_simulation(&cfg, &dataset)?;
        for summary in summarize(&records) {
            rows.push(ComparisonRow {
                strategy: cfg.strategy.name().to_string(),
                round: summary.round,
                mean_f1: summary.mean_f1,
                sd_f1: summary.sd_f1,
            });
        }
        sims.push(cfg);
    }
    if args.with_full {
        // fully supervised reference: train on the whole pool, reported as
        // round 0
        let cfg = args.sim.sim_config(Strategy::Rand, &dataset);
        let scores = full_supervision_reference(&cfg, &dataset)?;
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
        rows.push(ComparisonRow { strategy: "full".into(), round: 0, mean_f1: mean, sd_f1: sd });
    }
    write_comparison(&rows, &out)?;
    write_manifest(
        &Manifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "compare".into(),
            dataset: source,
            sims,
            vat,
            prt: args.sim.prt,
            with_full: args.with_full,
            out: out.display().to_string(),
        },
        &out,
    )?;

    for row in &rows {
        println!(
            "{:<10} round {:>3}  mean_f1 {:.4}  sd {:.4}",
            row.strategy, row.round, row.mean_f1, row.sd_f1
        );
    }
    println!("wrote {} and {}", out.display(), manifest_path(&out).display());
    Ok(())
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let cfg = BlobConfig {
        num_classes: args.classes,
        dim: args.dim,
        per_class_count: args.per_class,
        center_scale: args.center_scale,
        noise_sigma: args.noise_sigma,
        seed: args.seed,
    };
    let dataset = synthetic_blobs(&cfg)?;
    let out = prepare_out(args.out, "blobs.jsonl")?;
    write_dataset(&dataset, &out)?;
    println!(
        "wrote {} ({} train / {} test, d={}, C={})",
        out.display(),
        dataset.train.len(),
        dataset.test.len(),
        dataset.dim,
        dataset.num_classes
    );
    Ok(())
}

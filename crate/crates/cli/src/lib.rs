//! Command-line driver: dataset generation, single training runs, gradient
//! checks and the multi-run experiments, with CSV reports.

pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use compolang::dataset::DatasetSplit;
use compolang::experiments::{self, ExperimentReport, SplitPlan};
use compolang::language::Branching;
use compolang::nn::{grad_check, save_params, Architecture, GradCheckDims};
use compolang::optim::OptimizerSpec;
use compolang::trainer::{train, CurriculumPolicy};

pub use config::{Overrides, RunConfig};
pub use report::write_report;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

/// Largest relative error `grad-check` accepts.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Parser)]
#[command(name = "compolang", version, about = "Compositional interpretation experiments with recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a world and write its train/dev/test split as JSONL
    Gen(GenArgs),
    /// Train one model and report its test accuracy
    Train(TrainArgs),
    /// Compare analytic gradients with central differences
    GradCheck(GradCheckArgs),
    /// Branching x curriculum x complexity accuracy grid
    ExpTable4(Table4Args),
    /// Accuracy as a function of the share of complexity-3 data in training
    ExpTable5(Table5Args),
    /// Zero-recursion training repeated over many seeds
    ExpSeedSweep(SeedSweepArgs),
    /// Train up to complexity 3, test on complexity 4
    ExpLengthGen(RunsArgs),
    /// Elman network trained with SGD on complexity-2 data
    ExpRnnBaseline(RunsArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    branching: Option<Branching>,
    #[arg(long)]
    max_complexity: Option<usize>,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    branching: Option<Branching>,
    #[arg(long)]
    max_complexity: Option<usize>,
    /// Train on a JSONL dataset instead of sampling one
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run result as JSON; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the best-dev parameters here
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Per-epoch CSV trace
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    /// Architecture to check; both when omitted
    #[arg(long)]
    arch: Option<Architecture>,
    /// Number of seeds, starting at --seed
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
}

#[derive(Debug, Args)]
struct Table4Args {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    branchings: Option<Vec<Branching>>,
    #[arg(long, value_delimiter = ',')]
    curricula: Option<Vec<CurriculumPolicy>>,
    #[arg(long, value_delimiter = ',')]
    complexities: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Table5Args {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SeedSweepArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    n_seeds: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunsArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    let config = matches!(e.downcast_ref::<CliError>(), Some(CliError::Config(_)))
        || matches!(e.downcast_ref::<compolang::Error>(), Some(compolang::Error::Config(_)));
    if config {
        EXIT_CONFIG
    } else {
        EXIT_FAILURE
    }
}

fn dispatch(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Gen(args) => gen(args),
        Command::Train(args) => train_cmd(args),
        Command::GradCheck(args) => grad_check_cmd(args),
        Command::ExpTable4(args) => {
            let mut config = RunConfig::resolve(&args.common)?;
            if let Some(runs) = args.runs {
                config.runs = runs;
            }
            if let Some(b) = args.branchings {
                config.grid.branchings = b;
            }
            if let Some(c) = args.curricula {
                config.grid.curricula = c;
            }
            if let Some(n) = args.complexities {
                config.grid.complexities = n;
            }
            config.validate()?;
            let report =
                experiments::exp_branching_grid(&config.settings, &config.grid, config.runs, config.master_seed())?;
            finish(report, &config, &args.out)
        }
        Command::ExpTable5(args) => {
            let mut config = RunConfig::resolve(&args.common)?;
            if let Some(runs) = args.runs {
                config.runs = runs;
            }
            if let Some(f) = args.fractions {
                config.fractions = f;
            }
            config.validate()?;
            let report =
                experiments::exp_recursion_sweep(&config.settings, &config.fractions, config.runs, config.master_seed())?;
            finish(report, &config, &args.out)
        }
        Command::ExpSeedSweep(args) => {
            let mut config = RunConfig::resolve(&args.common)?;
            if let Some(n) = args.n_seeds {
                config.n_seeds = n;
            }
            config.validate()?;
            let report = experiments::exp_seed_sweep(&config.settings, config.n_seeds, config.master_seed())?;
            let histogram = report.correct_histogram();
            let code = finish(report, &config, &args.out)?;
            println!("test-correct histogram (count: runs)");
            for (count, runs) in histogram.iter().enumerate().filter(|(_, &r)| r > 0) {
                println!("{count:>4}: {runs}");
            }
            Ok(code)
        }
        Command::ExpLengthGen(args) => {
            let mut config = RunConfig::resolve(&args.common)?;
            if let Some(runs) = args.runs {
                config.runs = runs;
            }
            config.validate()?;
            let report = experiments::exp_length_generalization(&config.settings, config.runs, config.master_seed())?;
            finish(report, &config, &args.out)
        }
        Command::ExpRnnBaseline(args) => {
            let mut config = RunConfig::resolve(&args.common)?;
            if let Some(runs) = args.runs {
                config.runs = runs;
            }
            // An explicit --optimizer or --lr wins; otherwise the baseline
            // uses plain SGD.
            let t = &mut config.settings.train;
            t.architecture = Architecture::VanillaRnn;
            if args.common.optimizer.is_none() && args.common.lr.is_none() {
                t.optimizer = OptimizerSpec::default_sgd();
            }
            config.validate()?;
            let report = experiments::exp_rnn_baseline(&config.settings, config.runs, config.master_seed())?;
            finish(report, &config, &args.out)
        }
    }
}

/// Embeds the run configuration in the report, writes it and prints a
/// summary.
fn finish(mut report: ExperimentReport, config: &RunConfig, out: &Path) -> anyhow::Result<i32> {
    report.config = serde_json::json!({ "run_config": config, "experiment": report.config });
    write_report(&report, out)?;
    print!("{}", report::summary(&report));
    println!("wrote {} ({:.1}s)", out.display(), report.wall_clock_seconds);
    Ok(0)
}

fn apply_shape(config: &mut RunConfig, branching: Option<Branching>, max_complexity: Option<usize>) -> anyhow::Result<()> {
    if let Some(b) = branching {
        config.branching = b;
    }
    if let Some(n) = max_complexity {
        config.max_complexity = n;
    }
    config.validate()?;
    Ok(())
}

fn sample_split(config: &RunConfig) -> anyhow::Result<DatasetSplit> {
    let plan = SplitPlan::Standard { max_complexity: config.max_complexity };
    Ok(experiments::build_data(&config.settings, config.branching, plan, config.master_seed())?)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn gen(args: GenArgs) -> anyhow::Result<i32> {
    let mut config = RunConfig::resolve(&args.common)?;
    apply_shape(&mut config, args.branching, args.max_complexity)?;
    let split = sample_split(&config)?;
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            split.write_jsonl(&mut out)?;
            out.flush()?;
            eprintln!(
                "wrote {} records ({} train, {} dev, {} test) to {}",
                split.len(),
                split.train.len(),
                split.dev.len(),
                split.test.len(),
                path.display()
            );
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            split.write_jsonl(&mut out)?;
            out.flush()?;
        }
    }
    Ok(0)
}

fn train_cmd(args: TrainArgs) -> anyhow::Result<i32> {
    let mut config = RunConfig::resolve(&args.common)?;
    apply_shape(&mut config, args.branching, args.max_complexity)?;
    let split = match &args.data {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            DatasetSplit::read_jsonl(BufReader::new(file), &config.settings.lexicon)
                .with_context(|| format!("cannot read {}", path.display()))?
        }
        None => sample_split(&config)?,
    };
    let train_config = compolang::trainer::TrainConfig { seed: config.master_seed(), ..config.settings.train.clone() };
    let model = train(&train_config, &split, &mut ())?;
    let result = &model.result;
    eprintln!(
        "test accuracy {} ({}/{}), best dev {} at epoch {}, stopped at epoch {}",
        result.test_accuracy,
        result.test_correct,
        result.test_size,
        result.best_dev_accuracy,
        result.best_epoch,
        result.stopping_epoch
    );
    if let Some(path) = &args.checkpoint {
        let mut out = create(path)?;
        save_params(&model.params, &mut out)?;
        out.flush()?;
    }
    if let Some(path) = &args.trace {
        let mut out = create(path)?;
        result.write_trace_csv(&mut out)?;
        out.flush()?;
    }
    let record = serde_json::json!({ "run_config": config, "result": result });
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            serde_json::to_writer_pretty(&mut out, &record)?;
            writeln!(out)?;
            out.flush()?;
        }
        None => println!("{}", serde_json::to_string_pretty(&record)?),
    }
    Ok(0)
}

fn grad_check_cmd(args: GradCheckArgs) -> anyhow::Result<i32> {
    let archs = match args.arch {
        Some(a) => vec![a],
        None => vec![Architecture::Lstm, Architecture::VanillaRnn],
    };
    if args.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()).into());
    }
    let mut worst: f64 = 0.0;
    for arch in archs {
        for seed in args.seed..args.seed + args.seeds {
            let err = grad_check(arch, GradCheckDims::default(), seed, args.epsilon)?;
            println!("{arch} seed {seed}: max relative error {err:e}");
            worst = worst.max(err);
        }
    }
    let ok = worst < GRAD_CHECK_TOLERANCE;
    println!("max relative error {worst:e} ({})", if ok { "ok" } else { "FAILED" });
    Ok(if ok { 0 } else { EXIT_FAILURE })
}

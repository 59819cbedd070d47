//! Multi-run studies: the branching × curriculum grid, the recursion-fraction
//! sweep, the zero-shot seed sweep, length generalization, and the Elman
//! baseline.
//!
//! Every run samples its own world model and split from a seed derived from
//! `(master_seed, run_index)`, so runs are independent and any subset can be
//! reproduced in isolation. Runs execute on a rayon pool; results are
//! gathered in job order, which keeps reports identical regardless of the
//! degree of parallelism.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_length_generalization_split, build_recursion_split, build_splits, DatasetSplit};
use crate::error::{Error, Result};
use crate::language::{sample_world_model, Branching, FunctionClass, Lexicon};
use crate::trainer::{train_run, CurriculumPolicy, TrainConfig};

/// Stream ids carved out of one run seed. Streams 0 and 1 belong to the
/// trainer (initialization and shuffling).
const WORLD_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;

/// Knobs shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Template for every run; `seed` is replaced per run.
    pub train: TrainConfig,
    pub lexicon: Lexicon,
    pub function_class: FunctionClass,
    pub train_fraction_at_max: f64,
    pub dev_test_ratio: f64,
    /// Dev share of the top training level in the length-generalization split.
    pub length_gen_dev_fraction: f64,
    /// Concurrent runs; `None` uses all available cores.
    pub parallel: Option<usize>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            train: TrainConfig::default(),
            lexicon: Lexicon::default(),
            function_class: FunctionClass::AnyTotal,
            train_fraction_at_max: 0.8,
            dev_test_ratio: 0.5,
            length_gen_dev_fraction: 0.1,
            parallel: None,
        }
    }
}

/// Seed of run `index` under `master`: a SplitMix64 finalizer over both.
pub fn run_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPlan {
    Standard { max_complexity: usize },
    Recursion { fraction: f64 },
    LengthGeneralization { train_complexity: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub test_correct: usize,
    pub test_size: usize,
    pub best_dev_accuracy: f64,
    pub stopping_epoch: usize,
}

impl RunSummary {
    pub fn is_perfect(&self) -> bool {
        self.test_correct == self.test_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    /// Values for the report's condition keys, in key order.
    pub condition: Vec<String>,
    pub runs: Vec<RunSummary>,
}

impl ConditionRow {
    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn mean_accuracy(&self) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.runs.iter().map(|r| r.accuracy).sum::<f64>() / self.runs.len() as f64
    }

    /// Fraction of runs with every test item correct.
    pub fn perfect_share(&self) -> f64 {
        if self.runs.is_empty() {
            return 0.0;
        }
        self.runs.iter().filter(|r| r.is_perfect()).count() as f64 / self.runs.len() as f64
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.accuracy).collect()
    }

    pub fn value(&self, keys: &[String], key: &str) -> Option<&str> {
        keys.iter().position(|k| k == key).map(|i| self.condition[i].as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub master_seed: u64,
    pub condition_keys: Vec<String>,
    pub rows: Vec<ConditionRow>,
    /// Resolved configuration that produced the report.
    pub config: serde_json::Value,
    /// Wall-clock duration; the only nondeterministic field.
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn row(&self, condition: &[&str]) -> Option<&ConditionRow> {
        self.rows.iter().find(|r| r.condition.iter().map(String::as_str).eq(condition.iter().copied()))
    }

    /// Histogram of per-run test-correct counts, indexed by count.
    pub fn correct_histogram(&self) -> Vec<usize> {
        let runs = self.rows.iter().flat_map(|r| &r.runs);
        let max = runs.clone().map(|r| r.test_correct).max().unwrap_or(0);
        let mut hist = vec![0; max + 1];
        for r in runs {
            hist[r.test_correct] += 1;
        }
        hist
    }
}

#[derive(Debug, Clone)]
struct Job {
    row: usize,
    run_index: usize,
    branching: Branching,
    plan: SplitPlan,
    config: TrainConfig,
}

/// Samples the world model and split of one run from its seed.
pub fn build_data(settings: &ExperimentSettings, branching: Branching, plan: SplitPlan, seed: u64) -> Result<DatasetSplit> {
    let mut world_rng = ChaCha8Rng::seed_from_u64(seed);
    world_rng.set_stream(WORLD_STREAM);
    let world = sample_world_model(
        settings.lexicon.names.len(),
        &settings.lexicon,
        &settings.function_class,
        &mut world_rng,
    )?;
    let mut split_rng = ChaCha8Rng::seed_from_u64(seed);
    split_rng.set_stream(SPLIT_STREAM);
    match plan {
        SplitPlan::Standard { max_complexity } => build_splits(
            &world,
            branching,
            max_complexity,
            settings.train_fraction_at_max,
            settings.dev_test_ratio,
            &mut split_rng,
        ),
        SplitPlan::Recursion { fraction } => build_recursion_split(&world, branching, fraction, &mut split_rng),
        SplitPlan::LengthGeneralization { train_complexity } => build_length_generalization_split(
            &world,
            branching,
            train_complexity,
            settings.length_gen_dev_fraction,
            &mut split_rng,
        ),
    }
}

/// Trains one run of an experiment from its seed.
pub fn run_one(
    settings: &ExperimentSettings,
    config: &TrainConfig,
    branching: Branching,
    plan: SplitPlan,
    run_index: usize,
    seed: u64,
) -> Result<RunSummary> {
    let data = build_data(settings, branching, plan, seed)?;
    let config = TrainConfig { seed, ..config.clone() };
    let result = train_run(&config, &data)?;
    Ok(RunSummary {
        run_index,
        seed,
        accuracy: result.test_accuracy,
        test_correct: result.test_correct,
        test_size: result.test_size,
        best_dev_accuracy: result.best_dev_accuracy,
        stopping_epoch: result.stopping_epoch,
    })
}

fn execute(
    experiment: &str,
    settings: &ExperimentSettings,
    master_seed: u64,
    condition_keys: Vec<String>,
    conditions: Vec<Vec<String>>,
    jobs: Vec<Job>,
    config: serde_json::Value,
) -> Result<ExperimentReport> {
    let started = Instant::now();
    let total = jobs.len();
    let work = || -> Vec<Result<(usize, RunSummary)>> {
        jobs.par_iter()
            .map(|job| {
                let seed = run_seed(master_seed, job.run_index as u64);
                let t = Instant::now();
                let summary = run_one(settings, &job.config, job.branching, job.plan, job.run_index, seed)?;
                log::info!(
                    "{experiment} [{}] run {} acc {:.3} ({}/{}) in {:.1}s",
                    conditions[job.row].join(","),
                    job.run_index,
                    summary.accuracy,
                    summary.test_correct,
                    summary.test_size,
                    t.elapsed().as_secs_f64()
                );
                Ok((job.row, summary))
            })
            .collect()
    };
    log::info!("{experiment}: {total} runs");
    let results = match settings.parallel {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut rows: Vec<ConditionRow> =
        conditions.into_iter().map(|condition| ConditionRow { condition, runs: Vec::new() }).collect();
    for result in results {
        let (row, summary) = result?;
        rows[row].runs.push(summary);
    }
    Ok(ExperimentReport {
        experiment: experiment.to_string(),
        master_seed,
        condition_keys,
        rows,
        config,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

fn snapshot(settings: &ExperimentSettings, extra: serde_json::Value) -> serde_json::Value {
    serde_json::json!({ "settings": settings, "experiment": extra })
}

fn keys(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Cells of the branching × curriculum × complexity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub branchings: Vec<Branching>,
    pub curricula: Vec<CurriculumPolicy>,
    pub complexities: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            branchings: Branching::ALL.to_vec(),
            curricula: CurriculumPolicy::ALL.to_vec(),
            complexities: (3..=7).collect(),
        }
    }
}

/// Test accuracy for every grid cell, `runs_per_cell` runs each. Run `i`
/// of every cell shares seed `run_seed(master_seed, i)` and hence its world.
pub fn exp_branching_grid(
    settings: &ExperimentSettings,
    grid: &GridSpec,
    runs_per_cell: usize,
    master_seed: u64,
) -> Result<ExperimentReport> {
    if runs_per_cell == 0 {
        return Err(Error::config("runs_per_cell must be at least 1"));
    }
    if grid.complexities.iter().any(|&n| n < 3) {
        return Err(Error::config("grid complexities must be at least 3"));
    }
    let mut conditions = Vec::new();
    let mut jobs = Vec::new();
    for &branching in &grid.branchings {
        for &curriculum in &grid.curricula {
            for &n in &grid.complexities {
                let row = conditions.len();
                conditions.push(vec![branching.to_string(), curriculum.to_string(), n.to_string()]);
                let config = TrainConfig { curriculum, ..settings.train.clone() };
                for run_index in 0..runs_per_cell {
                    jobs.push(Job {
                        row,
                        run_index,
                        branching,
                        plan: SplitPlan::Standard { max_complexity: n },
                        config: config.clone(),
                    });
                }
            }
        }
    }
    let extra = serde_json::json!({ "grid": grid, "runs_per_cell": runs_per_cell });
    execute(
        "branching_grid",
        settings,
        master_seed,
        keys(&["branching", "curriculum", "max_complexity"]),
        conditions,
        jobs,
        snapshot(settings, extra),
    )
}

/// Recursion-fraction sweep at complexity 3 (left branching, the
/// configured curriculum).
pub fn exp_recursion_sweep(
    settings: &ExperimentSettings,
    fractions: &[f64],
    runs: usize,
    master_seed: u64,
) -> Result<ExperimentReport> {
    if runs == 0 {
        return Err(Error::config("runs must be at least 1"));
    }
    if let Some(bad) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::config(format!("recursion fraction must lie in [0, 1), got {bad}")));
    }
    let mut conditions = Vec::new();
    let mut jobs = Vec::new();
    for &fraction in fractions {
        let row = conditions.len();
        conditions.push(vec![fraction.to_string()]);
        for run_index in 0..runs {
            jobs.push(Job {
                row,
                run_index,
                branching: Branching::Left,
                plan: SplitPlan::Recursion { fraction },
                config: settings.train.clone(),
            });
        }
    }
    let extra = serde_json::json!({ "fractions": fractions, "runs": runs });
    execute(
        "recursion_sweep",
        settings,
        master_seed,
        keys(&["fraction"]),
        conditions,
        jobs,
        snapshot(settings, extra),
    )
}

/// The zero-recursion condition repeated over `n_seeds` seeds; one row whose
/// runs give the distribution of test-correct counts.
pub fn exp_seed_sweep(settings: &ExperimentSettings, n_seeds: usize, master_seed: u64) -> Result<ExperimentReport> {
    if n_seeds == 0 {
        return Err(Error::config("n_seeds must be at least 1"));
    }
    let jobs = (0..n_seeds)
        .map(|run_index| Job {
            row: 0,
            run_index,
            branching: Branching::Left,
            plan: SplitPlan::Recursion { fraction: 0.0 },
            config: settings.train.clone(),
        })
        .collect();
    let extra = serde_json::json!({ "n_seeds": n_seeds, "fraction": 0.0 });
    execute(
        "seed_sweep",
        settings,
        master_seed,
        keys(&["fraction"]),
        vec![vec!["0".to_string()]],
        jobs,
        snapshot(settings, extra),
    )
}

/// Trains on every expression up to complexity 3 and tests on all of
/// complexity 4.
pub fn exp_length_generalization(settings: &ExperimentSettings, runs: usize, master_seed: u64) -> Result<ExperimentReport> {
    if runs == 0 {
        return Err(Error::config("runs must be at least 1"));
    }
    let jobs = (0..runs)
        .map(|run_index| Job {
            row: 0,
            run_index,
            branching: Branching::Left,
            plan: SplitPlan::LengthGeneralization { train_complexity: 3 },
            config: settings.train.clone(),
        })
        .collect();
    let extra = serde_json::json!({ "runs": runs, "train_complexity": 3, "test_complexity": 4 });
    execute(
        "length_generalization",
        settings,
        master_seed,
        keys(&["train_complexity", "test_complexity"]),
        vec![vec!["3".to_string(), "4".to_string()]],
        jobs,
        snapshot(settings, extra),
    )
}

/// Elman network on the smallest language: names plus single applications,
/// with dev and test drawn from complexity 2.
pub fn exp_rnn_baseline(settings: &ExperimentSettings, runs: usize, master_seed: u64) -> Result<ExperimentReport> {
    if runs == 0 {
        return Err(Error::config("runs must be at least 1"));
    }
    let jobs = (0..runs)
        .map(|run_index| Job {
            row: 0,
            run_index,
            branching: Branching::Left,
            plan: SplitPlan::Standard { max_complexity: 2 },
            config: settings.train.clone(),
        })
        .collect();
    let extra = serde_json::json!({ "runs": runs, "max_complexity": 2 });
    execute(
        "rnn_baseline",
        settings,
        master_seed,
        keys(&["architecture", "max_complexity"]),
        vec![vec![settings.train.architecture.to_string(), "2".to_string()]],
        jobs,
        snapshot(settings, extra),
    )
}

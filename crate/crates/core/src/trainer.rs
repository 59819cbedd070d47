//! Curriculum-gated training with early stopping on dev accuracy.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetSplit, LabeledExample};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, init_params, loss_and_grad, predict_batch, Architecture, ModelDims, ParameterSet};
use crate::optim::OptimizerSpec;

/// Complexity at which every curriculum starts: names and single
/// applications are admitted together.
pub const CURRICULUM_START: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurriculumPolicy {
    /// One new level every 10 epochs.
    Default,
    /// One new level every 20 epochs.
    Slow,
    /// Every level from the first epoch.
    None,
}

impl CurriculumPolicy {
    pub const ALL: [CurriculumPolicy; 3] = [CurriculumPolicy::Default, CurriculumPolicy::Slow, CurriculumPolicy::None];

    pub fn pace(self) -> Option<usize> {
        match self {
            CurriculumPolicy::Default => Some(10),
            CurriculumPolicy::Slow => Some(20),
            CurriculumPolicy::None => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CurriculumPolicy::Default => "default",
            CurriculumPolicy::Slow => "slow",
            CurriculumPolicy::None => "none",
        }
    }

    /// First epoch at which `max_complexity` is admitted.
    pub fn full_admission_epoch(self, max_complexity: usize) -> usize {
        match self.pace() {
            Some(pace) => pace * max_complexity.saturating_sub(CURRICULUM_START),
            None => 0,
        }
    }
}

impl std::fmt::Display for CurriculumPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CurriculumPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "default" => Ok(CurriculumPolicy::Default),
            "slow" => Ok(CurriculumPolicy::Slow),
            "none" => Ok(CurriculumPolicy::None),
            other => Err(Error::config(format!("unknown curriculum `{other}`"))),
        }
    }
}

/// Highest complexity admitted to training at `epoch` (0-based).
pub fn admitted_complexity(policy: CurriculumPolicy, epoch: usize, max_complexity: usize) -> usize {
    match policy.pace() {
        Some(pace) => (CURRICULUM_START + epoch / pace).min(max_complexity),
        None => max_complexity,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub hidden: usize,
    pub embed_dim: usize,
    pub optimizer: OptimizerSpec,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub curriculum: CurriculumPolicy,
    /// Global-norm gradient clip; off when `None`.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            architecture: Architecture::Lstm,
            hidden: 256,
            embed_dim: 32,
            optimizer: OptimizerSpec::default_adam(),
            max_epochs: 100,
            patience: 22,
            batch_size: 32,
            curriculum: CurriculumPolicy::Default,
            clip_norm: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Elman network trained with plain SGD.
    pub fn rnn_baseline() -> Self {
        TrainConfig {
            architecture: Architecture::VanillaRnn,
            optimizer: OptimizerSpec::default_sgd(),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config(format!("clip_norm must be positive, got {c}")));
            }
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub admitted_complexity: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_dev_accuracy: f64,
    /// Epoch whose parameters were checkpointed.
    pub best_epoch: usize,
    /// Last epoch trained (0-based).
    pub stopping_epoch: usize,
    pub early_stopped: bool,
    pub test_accuracy: f64,
    pub test_correct: usize,
    pub test_size: usize,
}

impl RunResult {
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,admitted_complexity,train_loss,dev_acc")?;
        for r in &self.epochs {
            writeln!(out, "{},{},{},{}", r.epoch, r.admitted_complexity, r.train_loss, r.dev_accuracy)?;
        }
        Ok(())
    }
}

/// Hooks into the training loop, mainly for instrumentation in tests.
pub trait TrainObserver {
    /// Called with the examples of every batch right before its update.
    fn on_update(&mut self, _epoch: usize, _batch: &[&LabeledExample]) {}

    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

impl TrainObserver for () {}

/// Number of correct predictions over `examples`, batched by length.
pub fn count_correct(params: &ParameterSet, examples: &[LabeledExample]) -> Result<usize> {
    let mut by_len: BTreeMap<usize, Vec<&LabeledExample>> = BTreeMap::new();
    for ex in examples {
        by_len.entry(ex.token_ids.len()).or_default().push(ex);
    }
    let mut correct = 0;
    for group in by_len.values() {
        for chunk in group.chunks(256) {
            let seqs: Vec<&[usize]> = chunk.iter().map(|e| e.token_ids.as_slice()).collect();
            let preds = predict_batch(params, &seqs)?;
            correct += preds.iter().zip(chunk).filter(|(p, e)| **p == e.label).count();
        }
    }
    Ok(correct)
}

/// Fraction of `examples` whose prediction equals the oracle label.
pub fn evaluate(params: &ParameterSet, examples: &[LabeledExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Evaluation("cannot evaluate on an empty example list".into()));
    }
    Ok(count_correct(params, examples)? as f64 / examples.len() as f64)
}

/// Groups `examples` into batches of equal complexity, each at most
/// `batch_size`, in a random order.
fn make_batches<'a>(
    examples: &[&'a LabeledExample],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<&'a LabeledExample>> {
    let mut shuffled = examples.to_vec();
    shuffled.shuffle(rng);
    let mut by_level: BTreeMap<usize, Vec<&LabeledExample>> = BTreeMap::new();
    for ex in shuffled {
        by_level.entry(ex.complexity).or_default().push(ex);
    }
    let mut batches: Vec<Vec<&LabeledExample>> = by_level
        .values()
        .flat_map(|level| level.chunks(batch_size).map(<[_]>::to_vec))
        .collect();
    batches.shuffle(rng);
    batches
}

/// Outcome of [`train`]: the run summary plus the best-dev parameters.
pub struct TrainedModel {
    pub result: RunResult,
    pub params: ParameterSet,
}

pub fn train_run(config: &TrainConfig, data: &DatasetSplit) -> Result<RunResult> {
    Ok(train(config, data, &mut ())?.result)
}

/// Runs one seeded training run.
///
/// Each epoch admits train examples up to the curriculum level, updates on
/// shuffled same-complexity batches, and scores dev. The parameters with the
/// best dev accuracy are kept, the latest of them on ties. Once the final level is admitted, `patience`
/// consecutive epochs without strict improvement end the run. Test accuracy
/// is measured with the kept parameters.
pub fn train(config: &TrainConfig, data: &DatasetSplit, observer: &mut dyn TrainObserver) -> Result<TrainedModel> {
    config.validate()?;
    if data.dev.is_empty() || data.test.is_empty() {
        return Err(Error::config("dev and test partitions must be nonempty"));
    }
    let dims = ModelDims {
        vocab_size: data.vocab_size,
        embed_dim: config.embed_dim,
        hidden: config.hidden,
        classes: data.classes,
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(0);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut params = init_params(config.architecture, dims, &mut init_rng)?;
    let mut optimizer = config.optimizer.build(&params);
    let full_at = config.curriculum.full_admission_epoch(data.max_complexity);

    let mut best = params.clone();
    let mut best_dev = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs = Vec::new();
    let mut stopping_epoch = 0;
    let mut early_stopped = false;

    for epoch in 0..config.max_epochs {
        let admitted = admitted_complexity(config.curriculum, epoch, data.max_complexity);
        let pool: Vec<&LabeledExample> = data.train.iter().filter(|e| e.complexity <= admitted).collect();
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in make_batches(&pool, config.batch_size, &mut shuffle_rng) {
            observer.on_update(epoch, &batch);
            let items: Vec<(&[usize], usize)> = batch.iter().map(|e| (e.token_ids.as_slice(), e.label.0)).collect();
            let (loss, mut grads) = loss_and_grad(&params, &items)?;
            if let Some(max_norm) = config.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            optimizer.step(&mut params, &grads)?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        if !params.is_finite() {
            return Err(Error::Evaluation(format!("parameters diverged at epoch {epoch}")));
        }

        let dev_accuracy = evaluate(&params, &data.dev)?;
        let record = EpochRecord {
            epoch,
            admitted_complexity: admitted,
            train_loss: if seen > 0 { loss_sum / seen as f64 } else { 0.0 },
            dev_accuracy,
        };
        observer.on_epoch(&record);
        epochs.push(record);
        stopping_epoch = epoch;

        // Ties refresh the checkpoint to the latest parameters but do not
        // reset the patience counter.
        let improved = dev_accuracy > best_dev;
        if dev_accuracy >= best_dev {
            best_dev = dev_accuracy;
            best_epoch = epoch;
            best.clone_from(&params);
        }
        if improved {
            stale = 0;
        } else if epoch >= full_at {
            stale += 1;
            if stale >= config.patience {
                early_stopped = true;
                break;
            }
        }
    }

    let test_correct = count_correct(&best, &data.test)?;
    let test_size = data.test.len();
    let result = RunResult {
        seed: config.seed,
        epochs,
        best_dev_accuracy: best_dev,
        best_epoch,
        stopping_epoch,
        early_stopped,
        test_accuracy: test_correct as f64 / test_size as f64,
        test_correct,
        test_size,
    };
    Ok(TrainedModel { result, params: best })
}

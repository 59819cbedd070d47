use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use compolang::experiments::{ExperimentSettings, GridSpec};
use compolang::language::{Branching, FunctionClass};
use compolang::nn::Architecture;
use compolang::optim::{AdamConfig, OptimizerSpec};
use compolang::trainer::CurriculumPolicy;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable consulted when neither `--seed` nor the config file
/// names a master seed.
pub const SEED_ENV: &str = "COMPOLANG_SEED";

/// Everything a subcommand needs, merged from defaults, an optional JSON
/// config file, and command-line flags (in increasing precedence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub settings: ExperimentSettings,
    /// Branching and size for `gen` and `train`.
    pub branching: Branching,
    pub max_complexity: usize,
    pub fractions: Vec<f64>,
    pub runs: usize,
    pub n_seeds: usize,
    pub grid: GridSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            settings: ExperimentSettings::default(),
            branching: Branching::Left,
            max_complexity: 3,
            fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            runs: 10,
            n_seeds: 100,
            grid: GridSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Loads the config file if given, then applies the flags.
    pub fn resolve(overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match &overrides.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        overrides.apply(&mut config)?;
        if config.seed.is_none() {
            config.seed = seed_from_env()?;
        }
        config.seed.get_or_insert(0);
        config.validate()?;
        Ok(config)
    }

    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.settings;
        s.train.validate().map_err(config_error)?;
        s.lexicon.validate().map_err(config_error)?;
        for (name, value) in [
            ("train_fraction_at_max", s.train_fraction_at_max),
            ("dev_test_ratio", s.dev_test_ratio),
            ("length_gen_dev_fraction", s.length_gen_dev_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(CliError::Config(format!("{name} must lie in [0, 1], got {value}")));
            }
        }
        if let Some(bad) = self.fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
            return Err(CliError::Config(format!("recursion fraction must lie in [0, 1), got {bad}")));
        }
        if self.max_complexity < 2 {
            return Err(CliError::Config("max_complexity must be at least 2".into()));
        }
        if self.runs == 0 || self.n_seeds == 0 {
            return Err(CliError::Config("runs and n_seeds must be at least 1".into()));
        }
        if s.parallel == Some(0) {
            return Err(CliError::Config("parallel must be at least 1".into()));
        }
        Ok(())
    }
}

fn config_error(e: compolang::Error) -> CliError {
    match e {
        compolang::Error::Config(message) => CliError::Config(message),
        other => CliError::Config(other.to_string()),
    }
}

fn seed_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Flags shared by every subcommand that trains.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file; flags take precedence over its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (falls back to COMPOLANG_SEED, then 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// lstm or rnn
    #[arg(long)]
    pub arch: Option<Architecture>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// default, slow or none
    #[arg(long)]
    pub curriculum: Option<CurriculumPolicy>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// any_total, permutation, derangement or inverse_pairs
    #[arg(long)]
    pub function_class: Option<FunctionClass>,
    /// Share of the top complexity level used for training
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub dev_test_ratio: Option<f64>,
    /// Maximum number of concurrent training runs
    #[arg(long)]
    pub parallel: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) -> Result<(), CliError> {
        if let Some(seed) = self.seed {
            config.seed = Some(seed);
        }
        let s = &mut config.settings;
        let t = &mut s.train;
        if let Some(arch) = self.arch {
            t.architecture = arch;
        }
        if let Some(h) = self.hidden {
            t.hidden = h;
        }
        if let Some(d) = self.embed_dim {
            t.embed_dim = d;
        }
        match self.optimizer {
            Some(OptimizerKind::Sgd) if !matches!(t.optimizer, OptimizerSpec::Sgd { .. }) => {
                t.optimizer = OptimizerSpec::default_sgd();
            }
            Some(OptimizerKind::Adam) if !matches!(t.optimizer, OptimizerSpec::Adam(_)) => {
                t.optimizer = OptimizerSpec::Adam(AdamConfig::default());
            }
            _ => {}
        }
        if let Some(new_lr) = self.lr {
            match &mut t.optimizer {
                OptimizerSpec::Sgd { lr } => *lr = new_lr,
                OptimizerSpec::Adam(c) => c.lr = new_lr,
            }
        }
        if let Some(b) = self.batch_size {
            t.batch_size = b;
        }
        if let Some(e) = self.max_epochs {
            t.max_epochs = e;
        }
        if let Some(p) = self.patience {
            t.patience = p;
        }
        if let Some(c) = self.curriculum {
            t.curriculum = c;
        }
        if let Some(c) = self.clip_norm {
            t.clip_norm = Some(c);
        }
        if let Some(class) = &self.function_class {
            s.function_class = class.clone();
        }
        if let Some(f) = self.train_fraction {
            s.train_fraction_at_max = f;
        }
        if let Some(r) = self.dev_test_ratio {
            s.dev_test_ratio = r;
        }
        if let Some(n) = self.parallel {
            s.parallel = Some(n);
        }
        Ok(())
    }
}

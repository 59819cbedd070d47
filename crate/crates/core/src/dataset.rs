//! Labeled, encoded train/dev/test splits over an enumerated language.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::language::{
    enumerate_expressions, parse, Branching, Individual, Lexicon, Token, WorldModel, DETERMINER,
    POSSESSIVE, PREPOSITION,
};

/// Token inventory: names, then nouns, then `'s`, `the`, `of`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    ids: HashMap<Token, usize>,
}

impl Vocabulary {
    pub fn from_lexicon(lexicon: &Lexicon) -> Self {
        let tokens: Vec<Token> = lexicon
            .names
            .iter()
            .chain(&lexicon.nouns)
            .cloned()
            .chain([POSSESSIVE, DETERMINER, PREPOSITION].map(String::from))
            .collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).ok_or_else(|| Error::UnknownToken(t.as_ref().to_string())))
            .collect()
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::from_lexicon(&Lexicon::default())
    }
}

pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Result<Vec<usize>> {
    vocab.encode(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub tokens: Vec<Token>,
    pub token_ids: Vec<usize>,
    pub label: Individual,
    pub complexity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub dev: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    /// Highest complexity admitted to training; the curriculum's final level.
    pub max_complexity: usize,
    pub branching: Branching,
    /// Size of the token vocabulary the ids index into.
    pub vocab_size: usize,
    /// Number of individuals, i.e. output classes.
    pub classes: usize,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn partitions(&self) -> impl Iterator<Item = (Partition, &LabeledExample)> {
        self.train
            .iter()
            .map(|e| (Partition::Train, e))
            .chain(self.dev.iter().map(|e| (Partition::Dev, e)))
            .chain(self.test.iter().map(|e| (Partition::Test, e)))
    }

    /// Writes one JSON record per example:
    /// `{"tokens": [...], "label": 0, "complexity": 3, "split": "train"}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (split, ex) in self.partitions() {
            let record = JsonlRecord {
                tokens: ex.tokens.clone(),
                label: ex.label.0,
                complexity: ex.complexity,
                split,
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads records written by [`DatasetSplit::write_jsonl`]. Branching is
    /// inferred from the grammatical tokens and every record is parsed to
    /// validate its surface form.
    pub fn read_jsonl<R: BufRead>(input: R, lexicon: &Lexicon) -> Result<Self> {
        let vocab = Vocabulary::from_lexicon(lexicon);
        let mut split = DatasetSplit {
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
            max_complexity: 0,
            branching: Branching::Left,
            vocab_size: vocab.len(),
            classes: lexicon.names.len(),
        };
        let mut branching: Option<Branching> = None;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: JsonlRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            let inferred = if record.tokens.iter().any(|t| t == POSSESSIVE) {
                Some(Branching::Left)
            } else if record.tokens.iter().any(|t| t == DETERMINER) {
                Some(Branching::Right)
            } else {
                None
            };
            if let Some(b) = inferred {
                match branching {
                    Some(prev) if prev != b => {
                        return Err(Error::Format(format!("line {}: mixed branching directions", lineno + 1)))
                    }
                    _ => branching = Some(b),
                }
            }
            let expr = parse(&record.tokens, inferred.unwrap_or(Branching::Left), lexicon)?;
            if expr.complexity() != record.complexity {
                return Err(Error::Format(format!(
                    "line {}: complexity {} does not match tokens",
                    lineno + 1,
                    record.complexity
                )));
            }
            if record.label >= lexicon.names.len() {
                return Err(Error::Format(format!("line {}: label {} out of range", lineno + 1, record.label)));
            }
            let example = LabeledExample {
                token_ids: vocab.encode(&record.tokens)?,
                tokens: record.tokens,
                label: Individual(record.label),
                complexity: record.complexity,
            };
            match record.split {
                Partition::Train => {
                    split.max_complexity = split.max_complexity.max(example.complexity);
                    split.train.push(example);
                }
                Partition::Dev => {
                    split.max_complexity = split.max_complexity.max(example.complexity);
                    split.dev.push(example);
                }
                Partition::Test => split.test.push(example),
            }
        }
        split.branching = branching.unwrap_or(Branching::Left);
        Ok(split)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlRecord {
    tokens: Vec<Token>,
    label: usize,
    complexity: usize,
    split: Partition,
}

/// Every expression of the given complexity, realized and labeled by the
/// world's interpretation.
pub fn labeled_level(world: &WorldModel, branching: Branching, complexity: usize) -> Result<Vec<LabeledExample>> {
    let vocab = Vocabulary::from_lexicon(world.lexicon());
    enumerate_expressions(complexity, world.lexicon())?
        .into_iter()
        .map(|expr| {
            let tokens = expr.surface(branching);
            Ok(LabeledExample {
                token_ids: vocab.encode(&tokens)?,
                label: expr.interpret(world)?,
                complexity,
                tokens,
            })
        })
        .collect()
}

fn check_fraction(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::config(format!("{name} must lie in [0, 1], got {value}")));
    }
    Ok(())
}

/// Floor of `count * fraction`, tolerant of representation error such as
/// `0.29 * 100 = 28.999...`.
fn share(count: usize, fraction: f64) -> usize {
    ((count as f64 * fraction) + 1e-9).floor() as usize
}

/// All examples below `max_complexity` go to train. The top level is shuffled;
/// its first `floor(N * train_fraction_at_max)` items join train, and the rest
/// are divided into dev (`floor(rest * dev_test_ratio)`) and test.
pub fn build_splits<R: Rng + ?Sized>(
    world: &WorldModel,
    branching: Branching,
    max_complexity: usize,
    train_fraction_at_max: f64,
    dev_test_ratio: f64,
    rng: &mut R,
) -> Result<DatasetSplit> {
    if max_complexity < 2 {
        return Err(Error::config("max_complexity must be at least 2"));
    }
    check_fraction("train_fraction_at_max", train_fraction_at_max)?;
    check_fraction("dev_test_ratio", dev_test_ratio)?;

    let mut train = Vec::new();
    for level in 1..max_complexity {
        train.extend(labeled_level(world, branching, level)?);
    }
    let mut top = labeled_level(world, branching, max_complexity)?;
    top.shuffle(rng);

    let n_train = share(top.len(), train_fraction_at_max);
    let rest = top.split_off(n_train);
    train.extend(top);
    let n_dev = share(rest.len(), dev_test_ratio);
    let mut dev = rest;
    let test = dev.split_off(n_dev);

    Ok(DatasetSplit {
        train,
        dev,
        test,
        max_complexity,
        branching,
        vocab_size: Vocabulary::from_lexicon(world.lexicon()).len(),
        classes: world.universe_size(),
    })
}

/// Complexity-3 split with `fraction` of the recursive items in training and
/// the remainder divided evenly between dev and test.
pub fn build_recursion_split<R: Rng + ?Sized>(
    world: &WorldModel,
    branching: Branching,
    fraction: f64,
    rng: &mut R,
) -> Result<DatasetSplit> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config(format!(
            "recursion fraction must lie in [0, 1) so the test set is nonempty, got {fraction}"
        )));
    }
    build_splits(world, branching, 3, fraction, 0.5, rng)
}

/// Trains on every expression up to `train_complexity` and tests on every
/// expression of `train_complexity + 1`. Dev is a `dev_fraction` sample of
/// the top training level, kept in train; it only drives early stopping.
pub fn build_length_generalization_split<R: Rng + ?Sized>(
    world: &WorldModel,
    branching: Branching,
    train_complexity: usize,
    dev_fraction: f64,
    rng: &mut R,
) -> Result<DatasetSplit> {
    if train_complexity < 2 {
        return Err(Error::config("train complexity must be at least 2"));
    }
    check_fraction("dev_fraction", dev_fraction)?;
    let mut train = Vec::new();
    for level in 1..=train_complexity {
        train.extend(labeled_level(world, branching, level)?);
    }
    let mut top: Vec<&LabeledExample> = train.iter().filter(|e| e.complexity == train_complexity).collect();
    top.shuffle(rng);
    let n_dev = share(top.len(), dev_fraction).max(1);
    let dev = top[..n_dev].iter().map(|&e| e.clone()).collect();
    let test = labeled_level(world, branching, train_complexity + 1)?;
    Ok(DatasetSplit {
        train,
        dev,
        test,
        max_complexity: train_complexity,
        branching,
        vocab_size: Vocabulary::from_lexicon(world.lexicon()).len(),
        classes: world.universe_size(),
    })
}

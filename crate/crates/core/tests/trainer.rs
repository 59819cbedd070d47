use std::collections::HashSet;

use compolang::dataset::{build_splits, DatasetSplit, LabeledExample};
use compolang::language::{sample_world_model, Branching, FunctionClass, Lexicon};
use compolang::optim::{AdamConfig, OptimizerSpec};
use compolang::trainer::{
    admitted_complexity, evaluate, train, train_run, CurriculumPolicy, EpochRecord, RunResult, TrainConfig,
    TrainObserver,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(seed: u64, n: usize) -> DatasetSplit {
    let lex = Lexicon::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = sample_world_model(4, &lex, &FunctionClass::Permutation, &mut rng).unwrap();
    build_splits(&world, Branching::Left, n, 0.8, 0.5, &mut rng).unwrap()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        hidden: 16,
        embed_dim: 8,
        optimizer: OptimizerSpec::Adam(AdamConfig { lr: 1e-2, ..AdamConfig::default() }),
        max_epochs: 60,
        patience: 8,
        seed,
        ..TrainConfig::default()
    }
}

#[derive(Default)]
struct Recorder {
    updated: Vec<(usize, Vec<String>, usize)>,
    epochs: Vec<EpochRecord>,
}

impl TrainObserver for Recorder {
    fn on_update(&mut self, epoch: usize, batch: &[&LabeledExample]) {
        for e in batch {
            self.updated.push((epoch, e.tokens.clone(), e.complexity));
        }
    }

    fn on_epoch(&mut self, record: &EpochRecord) {
        self.epochs.push(record.clone());
    }
}

#[test]
fn updates_only_see_admitted_training_examples() {
    let split = data(1, 4);
    let config = small_config(1);
    let mut rec = Recorder::default();
    let model = train(&config, &split, &mut rec).unwrap();

    let train_set: HashSet<&Vec<String>> = split.train.iter().map(|e| &e.tokens).collect();
    let held_out: HashSet<&Vec<String>> = split.dev.iter().chain(&split.test).map(|e| &e.tokens).collect();
    assert!(!rec.updated.is_empty());
    for (epoch, tokens, complexity) in &rec.updated {
        assert!(train_set.contains(tokens));
        assert!(!held_out.contains(tokens));
        assert!(*complexity <= admitted_complexity(config.curriculum, *epoch, split.max_complexity));
    }
    // every admitted example is seen exactly once per epoch
    for epoch in 0..=model.result.stopping_epoch {
        let seen = rec.updated.iter().filter(|(e, _, _)| *e == epoch).count();
        let admitted = admitted_complexity(config.curriculum, epoch, split.max_complexity);
        assert_eq!(seen, split.train.iter().filter(|e| e.complexity <= admitted).count());
    }
    assert_eq!(rec.epochs, model.result.epochs);
}

/// Replays the early-stopping rule over a recorded dev-accuracy curve.
fn expected_stop(devs: &[f64], full_at: usize, patience: usize, max_epochs: usize) -> (usize, bool) {
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    for (epoch, &d) in devs.iter().enumerate() {
        if d > best {
            best = d;
            stale = 0;
        } else if epoch >= full_at {
            stale += 1;
            if stale == patience {
                return (epoch, true);
            }
        }
    }
    (max_epochs - 1, false)
}

fn check_run(config: &TrainConfig, split: &DatasetSplit, r: &RunResult) {
    let devs: Vec<f64> = r.epochs.iter().map(|e| e.dev_accuracy).collect();
    let full_at = config.curriculum.full_admission_epoch(split.max_complexity);
    let (stop, early) = expected_stop(&devs, full_at, config.patience, config.max_epochs);
    assert_eq!((r.stopping_epoch, r.early_stopped), (stop, early));
    assert_eq!(r.epochs.len(), r.stopping_epoch + 1);

    // checkpoint dominance
    let max = devs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.best_dev_accuracy, max);
    assert_eq!(devs[r.best_epoch], max);

    for (i, e) in r.epochs.iter().enumerate() {
        assert_eq!(e.epoch, i);
        assert_eq!(e.admitted_complexity, admitted_complexity(config.curriculum, i, split.max_complexity));
    }
    assert_eq!(r.test_size, split.test.len());
    assert_eq!(r.test_accuracy, r.test_correct as f64 / r.test_size as f64);
}

#[test]
fn stopping_rule_and_checkpoint_follow_the_dev_curve() {
    for seed in 0..4 {
        for curriculum in CurriculumPolicy::ALL {
            let split = data(seed, 3);
            let config = TrainConfig { curriculum, ..small_config(seed) };
            let r = train_run(&config, &split).unwrap();
            check_run(&config, &split, &r);
        }
    }
}

#[test]
fn patience_window_after_last_improvement() {
    // A short patience makes the window observable well before the cap.
    let split = data(2, 3);
    let config = TrainConfig { patience: 3, curriculum: CurriculumPolicy::None, ..small_config(2) };
    let r = train_run(&config, &split).unwrap();
    check_run(&config, &split, &r);
    assert!(r.early_stopped);
    let devs: Vec<f64> = r.epochs.iter().map(|e| e.dev_accuracy).collect();
    let last_improvement = (0..devs.len())
        .filter(|&i| devs[..i].iter().all(|&d| devs[i] > d))
        .max()
        .unwrap();
    assert_eq!(r.stopping_epoch, last_improvement + 3);
}

#[test]
fn best_checkpoint_reproduces_the_reported_dev_accuracy() {
    let split = data(3, 3);
    let model = train(&small_config(3), &split, &mut ()).unwrap();
    assert_eq!(evaluate(&model.params, &split.dev).unwrap(), model.result.best_dev_accuracy);
    assert_eq!(evaluate(&model.params, &split.test).unwrap(), model.result.test_accuracy);
}

#[test]
fn identical_config_and_seed_give_identical_results() {
    let split = data(4, 3);
    let a = train_run(&small_config(9), &split).unwrap();
    let b = train_run(&small_config(9), &split).unwrap();
    assert_eq!(a, b);
    let c = train_run(&small_config(10), &split).unwrap();
    assert_ne!(a.epochs, c.epochs);
}

#[test]
fn left_branching_complexity_three_is_learned() {
    let split = data(5, 3);
    let config = TrainConfig { hidden: 64, embed_dim: 32, max_epochs: 100, patience: 22, ..small_config(5) };
    let r = train_run(&config, &split).unwrap();
    assert_eq!(r.test_accuracy, 1.0, "{:?}", r.epochs.last());
}

#[test]
fn empty_held_out_partitions_are_rejected() {
    let mut split = data(6, 3);
    split.dev.clear();
    assert!(matches!(train_run(&small_config(0), &split), Err(compolang::Error::Config(_))));
}

#[test]
fn admission_schedule_is_monotone() {
    for policy in CurriculumPolicy::ALL {
        for n in 2..=7 {
            let levels: Vec<usize> = (0..150).map(|e| admitted_complexity(policy, e, n)).collect();
            assert!(levels.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*levels.last().unwrap(), n);
            assert_eq!(levels[policy.full_admission_epoch(n)], n);
        }
    }
    assert_eq!(admitted_complexity(CurriculumPolicy::Default, 9, 5), 2);
    assert_eq!(admitted_complexity(CurriculumPolicy::Default, 10, 5), 3);
    assert_eq!(admitted_complexity(CurriculumPolicy::Slow, 39, 5), 3);
    assert_eq!(admitted_complexity(CurriculumPolicy::None, 0, 5), 5);
}

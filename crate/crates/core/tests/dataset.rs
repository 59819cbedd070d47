use std::collections::HashSet;

use compolang::dataset::{
    build_length_generalization_split, build_recursion_split, build_splits, DatasetSplit, LabeledExample, Vocabulary,
};
use compolang::language::{parse, sample_world_model, Branching, FunctionClass, Lexicon, WorldModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn world(seed: u64) -> WorldModel {
    let lex = Lexicon::default();
    sample_world_model(4, &lex, &FunctionClass::AnyTotal, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn key(e: &LabeledExample) -> Vec<String> {
    e.tokens.clone()
}

/// Labels, encodings and complexities agree with the interpreter.
fn check_examples(world: &WorldModel, branching: Branching, examples: &[LabeledExample]) {
    let lex = Lexicon::default();
    let vocab = Vocabulary::from_lexicon(&lex);
    for e in examples {
        let expr = parse(&e.tokens, branching, &lex).unwrap();
        assert_eq!(expr.interpret(world).unwrap(), e.label);
        assert_eq!(expr.complexity(), e.complexity);
        assert_eq!(vocab.encode(&e.tokens).unwrap(), e.token_ids);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splits_partition_the_language(
        seed in any::<u64>(),
        n in 2usize..=5,
        fraction in 0.0f64..=1.0,
        ratio in 0.0f64..=1.0,
        right in any::<bool>(),
    ) {
        let b = if right { Branching::Right } else { Branching::Left };
        let w = world(seed);
        let split = build_splits(&w, b, n, fraction, ratio, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();

        let top = 4usize.pow(n as u32);
        let expected_train_top = (top as f64 * fraction + 1e-9).floor() as usize;
        let rest = top - expected_train_top;
        let expected_dev = (rest as f64 * ratio + 1e-9).floor() as usize;
        let below: usize = (1..n).map(|k| 4usize.pow(k as u32)).sum();
        prop_assert_eq!(split.train.len(), below + expected_train_top);
        prop_assert_eq!(split.dev.len(), expected_dev);
        prop_assert_eq!(split.test.len(), rest - expected_dev);

        let train: HashSet<_> = split.train.iter().map(key).collect();
        let dev: HashSet<_> = split.dev.iter().map(key).collect();
        let test: HashSet<_> = split.test.iter().map(key).collect();
        prop_assert_eq!(train.len(), split.train.len());
        prop_assert!(train.is_disjoint(&dev) && train.is_disjoint(&test) && dev.is_disjoint(&test));
        prop_assert!(split.dev.iter().chain(&split.test).all(|e| e.complexity == n));
        prop_assert_eq!(split.len(), below + top);

        check_examples(&w, b, &split.train);
        check_examples(&w, b, &split.dev);
        check_examples(&w, b, &split.test);
    }
}

#[test]
fn bad_fractions_are_configuration_errors() {
    let w = world(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (f, r) in [(-0.1, 0.5), (1.1, 0.5), (0.5, -0.5), (0.5, 2.0)] {
        let err = build_splits(&w, Branching::Left, 3, f, r, &mut rng).unwrap_err();
        assert!(matches!(err, compolang::Error::Config(_)), "{f} {r}");
    }
    assert!(matches!(
        build_recursion_split(&w, Branching::Left, 1.0, &mut rng),
        Err(compolang::Error::Config(_))
    ));
}

#[test]
fn recursion_split_sizes() {
    let w = world(3);
    for (fraction, train_top, dev, test) in [(0.0, 0, 32, 32), (0.2, 12, 26, 26), (0.8, 51, 6, 7)] {
        let s = build_recursion_split(&w, Branching::Left, fraction, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.train.iter().filter(|e| e.complexity == 3).count(), train_top, "{fraction}");
        assert_eq!(s.train.len(), 20 + train_top);
        assert_eq!((s.dev.len(), s.test.len()), (dev, test), "{fraction}");
    }
    let a = build_recursion_split(&w, Branching::Left, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = build_recursion_split(&w, Branching::Left, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn length_generalization_tests_on_every_longer_expression() {
    let w = world(5);
    let s = build_length_generalization_split(&w, Branching::Left, 3, 0.1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(s.train.len(), 84);
    assert_eq!(s.test.len(), 256);
    assert!(s.test.iter().all(|e| e.complexity == 4));
    // dev is a held-in sample of the top training level
    let train: HashSet<_> = s.train.iter().map(key).collect();
    assert!(!s.dev.is_empty());
    assert!(s.dev.iter().all(|e| e.complexity == 3 && train.contains(&key(e))));
    check_examples(&w, Branching::Left, &s.test);
}

#[test]
fn jsonl_round_trip() {
    let w = world(11);
    let lex = Lexicon::default();
    for b in Branching::ALL {
        let split = build_splits(&w, b, 4, 0.8, 0.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut buf = Vec::new();
        split.write_jsonl(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&c| c == b'\n').count(), split.len());
        let back = DatasetSplit::read_jsonl(buf.as_slice(), &lex).unwrap();
        assert_eq!(back, split);
    }
}

#[test]
fn corrupt_records_are_rejected() {
    let lex = Lexicon::default();
    let bad_label = r#"{"tokens":["Ann"],"label":9,"complexity":1,"split":"train"}"#;
    let bad_token = r#"{"tokens":["Zed"],"label":0,"complexity":1,"split":"train"}"#;
    let bad_json = "{";
    for line in [bad_label, bad_token, bad_json] {
        assert!(DatasetSplit::read_jsonl(line.as_bytes(), &lex).is_err(), "{line}");
    }
}

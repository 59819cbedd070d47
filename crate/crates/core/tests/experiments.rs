use compolang::experiments::{
    build_data, exp_branching_grid, exp_length_generalization, exp_recursion_sweep, exp_rnn_baseline, exp_seed_sweep,
    run_seed, ExperimentSettings, GridSpec, SplitPlan,
};
use compolang::language::{Branching, FunctionClass};
use compolang::optim::{AdamConfig, OptimizerSpec};
use compolang::trainer::{CurriculumPolicy, TrainConfig};

fn quick(parallel: Option<usize>) -> ExperimentSettings {
    ExperimentSettings {
        train: TrainConfig {
            hidden: 8,
            embed_dim: 4,
            max_epochs: 12,
            patience: 3,
            optimizer: OptimizerSpec::Adam(AdamConfig { lr: 1e-2, ..AdamConfig::default() }),
            ..TrainConfig::default()
        },
        function_class: FunctionClass::Derangement,
        parallel,
        ..ExperimentSettings::default()
    }
}

#[test]
fn recursion_sweep_shape_and_invariants() {
    let r = exp_recursion_sweep(&quick(None), &[0.0, 0.4, 0.8], 3, 11).unwrap();
    assert_eq!(r.condition_keys, vec!["fraction"]);
    assert_eq!(r.rows.len(), 3);
    for (row, expected_test) in r.rows.iter().zip([32, 20, 7]) {
        assert_eq!(row.n_runs(), 3);
        for (i, run) in row.runs.iter().enumerate() {
            assert_eq!(run.run_index, i);
            assert_eq!(run.seed, run_seed(11, i as u64));
            assert_eq!(run.test_size, expected_test);
            assert!((0.0..=1.0).contains(&run.accuracy));
        }
        let share = row.perfect_share();
        assert!((0.0..=1.0).contains(&share));
        if share == 1.0 {
            assert_eq!(row.mean_accuracy(), 1.0);
        }
    }
    assert_eq!(r.row(&["0.8"]).unwrap().runs.len(), 3);
    assert_eq!(r.config["settings"]["function_class"], "derangement");
}

#[test]
fn reports_do_not_depend_on_parallelism() {
    let a = exp_recursion_sweep(&quick(Some(1)), &[0.2, 0.6], 2, 5).unwrap();
    let b = exp_recursion_sweep(&quick(Some(3)), &[0.2, 0.6], 2, 5).unwrap();
    assert_eq!(a.rows, b.rows);
    let c = exp_recursion_sweep(&quick(Some(1)), &[0.2, 0.6], 2, 6).unwrap();
    assert_ne!(a.rows, c.rows);
}

#[test]
fn grid_covers_every_cell() {
    let grid = GridSpec {
        branchings: Branching::ALL.to_vec(),
        curricula: vec![CurriculumPolicy::Default, CurriculumPolicy::None],
        complexities: vec![3],
    };
    let r = exp_branching_grid(&quick(None), &grid, 2, 1).unwrap();
    assert_eq!(r.rows.len(), 4);
    assert!(r.row(&["right", "none", "3"]).is_some());
    // run i of every cell shares its seed, hence its world and split sizes
    for row in &r.rows {
        assert_eq!(row.runs[1].seed, run_seed(1, 1));
        assert_eq!(row.runs[0].test_size, 7);
    }
}

#[test]
fn seed_sweep_and_length_generalization_shapes() {
    let s = exp_seed_sweep(&quick(None), 1, 3).unwrap();
    assert_eq!(s.rows.len(), 1);
    assert_eq!(s.correct_histogram().iter().sum::<usize>(), 1);

    let l = exp_length_generalization(&quick(None), 1, 3).unwrap();
    assert_eq!(l.rows[0].runs[0].test_size, 256);
    assert_eq!(l.condition_keys, vec!["train_complexity", "test_complexity"]);

    let settings = ExperimentSettings { train: TrainConfig::rnn_baseline(), ..quick(None) };
    let settings = ExperimentSettings {
        train: TrainConfig { hidden: 8, embed_dim: 4, max_epochs: 5, ..settings.train },
        ..settings
    };
    let b = exp_rnn_baseline(&settings, 2, 3).unwrap();
    assert_eq!(b.rows[0].condition, vec!["rnn", "2"]);
}

#[test]
fn build_data_is_a_function_of_the_seed() {
    let s = quick(None);
    let plan = SplitPlan::Standard { max_complexity: 3 };
    let a = build_data(&s, Branching::Left, plan, 17).unwrap();
    let b = build_data(&s, Branching::Left, plan, 17).unwrap();
    let c = build_data(&s, Branching::Left, plan, 18).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

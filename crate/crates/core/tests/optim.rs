use compolang::nn::{init_params, Architecture, ModelDims, ParameterSet};
use compolang::optim::{adam_step, sgd_step, AdamConfig, AdamState, OptimizerSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(seed: u64) -> ParameterSet {
    let dims = ModelDims { vocab_size: 4, embed_dim: 2, hidden: 3, classes: 2 };
    init_params(Architecture::Lstm, dims, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn flat(p: &ParameterSet) -> Vec<f64> {
    p.slices().iter().flat_map(|s| s.iter().copied()).collect()
}

/// Adam written out for one scalar parameter.
fn scalar_adam(mut p: f64, grads: &[f64], c: AdamConfig) -> f64 {
    let (mut m, mut v) = (0.0, 0.0);
    for (t, &g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g * g;
        let m_hat = m / (1.0 - c.beta1.powi(t));
        let v_hat = v / (1.0 - c.beta2.powi(t));
        p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
    p
}

proptest! {
    #[test]
    fn adam_matches_scalar_recurrence(seed in any::<u64>(), scale in -3.0f64..3.0, steps in 1usize..6) {
        let p0 = params(seed);
        let g = params(seed.wrapping_add(1));
        let config = AdamConfig::default();
        let mut p = p0.clone();
        let mut state = AdamState::new(&p, config);
        let mut grads = g.clone();
        grads.scale(10f64.powf(scale));
        for _ in 0..steps {
            adam_step(&mut p, &grads, &mut state).unwrap();
        }
        let gflat = flat(&grads);
        for ((after, before), gk) in flat(&p).iter().zip(flat(&p0)).zip(gflat) {
            let expected = scalar_adam(before, &vec![gk; steps], config);
            prop_assert!((after - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn adam_first_step_is_bounded_by_lr(seed in any::<u64>(), scale in -6.0f64..6.0) {
        let p0 = params(seed);
        let mut grads = params(seed ^ 0xdead);
        grads.scale(10f64.powf(scale));
        let mut p = p0.clone();
        let mut state = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &grads, &mut state).unwrap();
        for (a, b) in flat(&p).iter().zip(flat(&p0)) {
            prop_assert!((a - b).abs() <= 1e-3 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sgd_matches_elementwise_rule(seed in any::<u64>(), lr in 1e-4f64..1.0) {
        let p0 = params(seed);
        let g = params(seed.wrapping_add(7));
        let mut p = p0.clone();
        sgd_step(&mut p, &g, lr).unwrap();
        for ((a, b), gk) in flat(&p).iter().zip(flat(&p0)).zip(flat(&g)) {
            prop_assert_eq!(*a, b - lr * gk);
        }
    }
}

#[test]
fn spec_validation() {
    assert!(OptimizerSpec::default_adam().validate().is_ok());
    assert!(OptimizerSpec::default_sgd().validate().is_ok());
    assert!(OptimizerSpec::Sgd { lr: 0.0 }.validate().is_err());
    assert!(OptimizerSpec::Adam(AdamConfig { beta1: 1.0, ..AdamConfig::default() }).validate().is_err());
    assert!(OptimizerSpec::Adam(AdamConfig { eps: 0.0, ..AdamConfig::default() }).validate().is_err());
    let json = serde_json::to_string(&OptimizerSpec::default_adam()).unwrap();
    assert_eq!(serde_json::from_str::<OptimizerSpec>(&json).unwrap(), OptimizerSpec::default_adam());
}

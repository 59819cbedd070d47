//! Parameter update rules: plain SGD and Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradients, ParameterSet};

/// `p <- p - lr * g`.
pub fn sgd_step(params: &mut ParameterSet, grads: &Gradients, lr: f64) -> Result<()> {
    params.ensure_congruent(grads)?;
    for (p, g) in params.slices_mut().into_iter().zip(grads.slices()) {
        for (p, g) in p.iter_mut().zip(g) {
            *p -= lr * g;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates and step count for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: ParameterSet,
    pub v: ParameterSet,
}

impl AdamState {
    pub fn new(params: &ParameterSet, config: AdamConfig) -> Self {
        AdamState { config, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }
}

/// One Adam update with bias-corrected moments.
pub fn adam_step(params: &mut ParameterSet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    params.ensure_congruent(grads)?;
    params.ensure_congruent(&state.m)?;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let m_corr = 1.0 - beta1.powi(t);
    let v_corr = 1.0 - beta2.powi(t);

    let tensors = params
        .slices_mut()
        .into_iter()
        .zip(grads.slices())
        .zip(state.m.slices_mut())
        .zip(state.v.slices_mut());
    for (((p, g), m), v) in tensors {
        for k in 0..p.len() {
            let gk = g[k];
            m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
            v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
            let m_hat = m[k] / m_corr;
            let v_hat = v[k] / v_corr;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Serializable choice of update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerSpec {
    Sgd { lr: f64 },
    Adam(AdamConfig),
}

impl OptimizerSpec {
    pub fn default_sgd() -> Self {
        OptimizerSpec::Sgd { lr: 0.1 }
    }

    pub fn default_adam() -> Self {
        OptimizerSpec::Adam(AdamConfig::default())
    }

    pub fn validate(&self) -> Result<()> {
        let (lr, ok) = match self {
            OptimizerSpec::Sgd { lr } => (*lr, true),
            OptimizerSpec::Adam(c) => (
                c.lr,
                (0.0..1.0).contains(&c.beta1) && (0.0..1.0).contains(&c.beta2) && c.eps > 0.0,
            ),
        };
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {lr}")));
        }
        if !ok {
            return Err(Error::config("Adam needs beta1, beta2 in [0, 1) and eps > 0"));
        }
        Ok(())
    }

    pub fn build(&self, params: &ParameterSet) -> Optimizer {
        match *self {
            OptimizerSpec::Sgd { lr } => Optimizer::Sgd { lr },
            OptimizerSpec::Adam(config) => Optimizer::Adam(AdamState::new(params, config)),
        }
    }
}

/// A live optimizer owned by one training run.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(AdamState),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut ParameterSet, grads: &Gradients) -> Result<()> {
        match self {
            Optimizer::Sgd { lr } => sgd_step(params, grads, *lr),
            Optimizer::Adam(state) => adam_step(params, grads, state),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Architecture, ModelDims};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(seed: u64) -> ParameterSet {
        let dims = ModelDims { vocab_size: 5, embed_dim: 3, hidden: 4, classes: 3 };
        init_params(Architecture::Lstm, dims, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn filled(like: &ParameterSet, value: f64) -> ParameterSet {
        let mut g = like.zeros_like();
        for s in g.slices_mut() {
            s.fill(value);
        }
        g
    }

    #[test]
    fn sgd_arithmetic() {
        let p0 = params(1);
        let mut p = filled(&p0, 1.0);
        sgd_step(&mut p, &filled(&p0, 0.5), 0.1).unwrap();
        assert!(p.slices().iter().all(|s| s.iter().all(|&v| (v - 0.95).abs() < 1e-15)));

        let mut q = p0.clone();
        sgd_step(&mut q, &p0.zeros_like(), 0.1).unwrap();
        assert_eq!(q, p0);
    }

    #[test]
    fn sgd_is_linear_in_steps() {
        let p0 = params(2);
        let g = params(3);
        let mut twice = p0.clone();
        sgd_step(&mut twice, &g, 0.05).unwrap();
        sgd_step(&mut twice, &g, 0.05).unwrap();
        let mut once = p0.clone();
        sgd_step(&mut once, &g, 0.1).unwrap();
        for (a, b) in twice.slices().iter().zip(once.slices()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let p0 = params(4);
        let mut p = p0.clone();
        let mut state = AdamState::new(&p, AdamConfig::default());
        for _ in 0..3 {
            adam_step(&mut p, &p0.zeros_like(), &mut state).unwrap();
        }
        assert_eq!(p, p0);
        assert_eq!(state.step, 3);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let p0 = params(5);
        let mut p = p0.clone();
        let mut state = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &filled(&p0, 1.0), &mut state).unwrap();
        // m_hat = v_hat = 1, so delta = -lr / (1 + eps)
        let expected: f64 = -1e-3 / (1.0 + 1e-8);
        assert!((expected - -9.99999990e-4).abs() < 1e-12);
        for (a, b) in p.slices().iter().zip(p0.slices()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = params(1);
        let dims = ModelDims { vocab_size: 5, embed_dim: 3, hidden: 2, classes: 3 };
        let other = ParameterSet::zeros(Architecture::Lstm, dims);
        assert!(matches!(sgd_step(&mut p, &other, 0.1), Err(Error::Shape(_))));
        let mut state = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(adam_step(&mut p, &other, &mut state), Err(Error::Shape(_))));
    }
}

//! Central finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{loss, loss_and_grad};
use super::params::{init_params, Architecture, ModelDims};
use crate::error::{Error, Result};

/// Shape of the random instance used by [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradCheckDims {
    pub model: ModelDims,
    pub seq_len: usize,
    pub batch: usize,
}

impl Default for GradCheckDims {
    fn default() -> Self {
        GradCheckDims {
            model: ModelDims { vocab_size: 11, embed_dim: 4, hidden: 8, classes: 4 },
            seq_len: 5,
            batch: 3,
        }
    }
}

/// Denominator floor for the relative error, so entries whose true gradient
/// is zero or vanishingly small are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares backpropagated gradients with central differences
/// `(L(p+eps) - L(p-eps)) / 2 eps` for every parameter of a seeded random
/// model and batch. Returns the largest relative error.
pub fn grad_check(arch: Architecture, dims: GradCheckDims, seed: u64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
    }
    if dims.seq_len == 0 || dims.batch == 0 {
        return Err(Error::config("grad check needs a nonempty batch of nonempty sequences"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(arch, dims.model, &mut rng)?;
    // exercise the bias paths with nonzero values
    for s in [3, 5] {
        for v in params.slices_mut()[s].iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    let seqs: Vec<Vec<usize>> = (0..dims.batch)
        .map(|_| (0..dims.seq_len).map(|_| rng.random_range(0..dims.model.vocab_size)).collect())
        .collect();
    let labels: Vec<usize> = (0..dims.batch).map(|_| rng.random_range(0..dims.model.classes)).collect();
    let batch: Vec<(&[usize], usize)> = seqs.iter().map(Vec::as_slice).zip(labels).collect();

    let (_, grads) = loss_and_grad(&params, &batch)?;
    let mut worst = 0.0f64;
    for tensor in 0..6 {
        for idx in 0..params.slices()[tensor].len() {
            let original = params.slices()[tensor][idx];
            params.slices_mut()[tensor][idx] = original + epsilon;
            let plus = loss(&params, &batch)?;
            params.slices_mut()[tensor][idx] = original - epsilon;
            let minus = loss(&params, &batch)?;
            params.slices_mut()[tensor][idx] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(grads.slices()[tensor][idx], numeric));
        }
    }
    Ok(worst)
}

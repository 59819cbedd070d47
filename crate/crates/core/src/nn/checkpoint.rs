//! JSON parameter checkpoints.
//!
//! ```json
//! {
//!   "format": "compolang-params",
//!   "version": 1,
//!   "architecture": "lstm",
//!   "dims": {"vocab_size": 11, "embed_dim": 32, "hidden": 256, "classes": 4},
//!   "tensors": [{"name": "embedding", "shape": [11, 32], "data": [...]}, ...]
//! }
//! ```
//!
//! Tensors appear in the order embedding, w_x, w_h, b, w_out, b_out with
//! row-major payloads. LSTM recurrent columns are grouped input, forget,
//! cell, output.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::params::{Architecture, ModelDims, ParameterSet, TENSOR_NAMES};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "compolang-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    architecture: Architecture,
    dims: ModelDims,
    tensors: Vec<TensorRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub fn save_params<W: Write>(params: &ParameterSet, out: W) -> Result<()> {
    let tensors = TENSOR_NAMES
        .iter()
        .zip(params.shapes())
        .zip(params.slices())
        .map(|((name, shape), data)| TensorRecord { name: name.to_string(), shape, data: data.to_vec() })
        .collect();
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        architecture: params.arch,
        dims: params.dims(),
        tensors,
    };
    serde_json::to_writer(out, &ckpt)?;
    Ok(())
}

pub fn load_params<R: Read>(input: R) -> Result<ParameterSet> {
    let ckpt: Checkpoint = serde_json::from_reader(input)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("not a parameter checkpoint: `{}`", ckpt.format)));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", ckpt.version)));
    }
    ckpt.dims.validate()?;
    let mut params = ParameterSet::zeros(ckpt.architecture, ckpt.dims);
    if ckpt.tensors.len() != TENSOR_NAMES.len() {
        return Err(Error::Format(format!("expected 6 tensors, found {}", ckpt.tensors.len())));
    }
    let shapes = params.shapes();
    for (k, (record, slot)) in ckpt.tensors.iter().zip(params.slices_mut()).enumerate() {
        if record.name != TENSOR_NAMES[k] || record.shape != shapes[k] || record.data.len() != slot.len() {
            return Err(Error::Format(format!(
                "tensor {k}: expected {} {:?}, found {} {:?} with {} values",
                TENSOR_NAMES[k],
                shapes[k],
                record.name,
                record.shape,
                record.data.len()
            )));
        }
        slot.copy_from_slice(&record.data);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        let dims = ModelDims { vocab_size: 11, embed_dim: 3, hidden: 5, classes: 4 };
        let p = init_params(Architecture::Lstm, dims, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut buf = Vec::new();
        save_params(&p, &mut buf).unwrap();
        let q = load_params(buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dims = ModelDims { vocab_size: 11, embed_dim: 3, hidden: 5, classes: 4 };
        let p = init_params(Architecture::VanillaRnn, dims, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut buf = Vec::new();
        save_params(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("\"hidden\":5", "\"hidden\":6");
        assert!(matches!(load_params(text.as_bytes()), Err(Error::Format(_))));
    }
}

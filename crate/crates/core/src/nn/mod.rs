//! From-scratch recurrent sequence classifiers.

mod checkpoint;
mod gradcheck;
mod network;
mod params;

pub use checkpoint::{load_params, save_params, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, relative_error, GradCheckDims, RELATIVE_ERROR_FLOOR};
pub use network::{argmax, forward, forward_batch, loss, loss_and_grad, predict, predict_batch, softmax};
pub use params::{clip_global_norm, init_params, Architecture, Gate, Gradients, ModelDims, ParameterSet, TENSOR_NAMES};

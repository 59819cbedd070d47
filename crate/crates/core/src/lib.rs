//! Toy interpreted languages with model-theoretic semantics, and from-scratch
//! recurrent classifiers trained to interpret them.
//!
//! The pipeline is: sample a [`language::WorldModel`], enumerate and label
//! expressions into a [`dataset::DatasetSplit`], train an RNN or LSTM with
//! [`trainer::train_run`], and aggregate many seeded runs with the
//! [`experiments`] drivers.

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod language;
pub mod nn;
pub mod optim;
pub mod trainer;

pub use error::{Error, Result};

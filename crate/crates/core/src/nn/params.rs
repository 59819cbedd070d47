use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Elman network, `h_t = tanh(x_t W_x + h_{t-1} W_h + b)`.
    #[serde(rename = "rnn")]
    VanillaRnn,
    Lstm,
}

impl Architecture {
    /// Number of pre-activation blocks the recurrent weights produce.
    pub fn gate_count(self) -> usize {
        match self {
            Architecture::VanillaRnn => 1,
            Architecture::Lstm => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::VanillaRnn => "rnn",
            Architecture::Lstm => "lstm",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" | "vanilla" | "vanillarnn" | "vanilla_rnn" => Ok(Architecture::VanillaRnn),
            "lstm" => Ok(Architecture::Lstm),
            other => Err(Error::config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// LSTM gate blocks, in the column order used by `w_x`, `w_h` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("classes", self.classes),
        ];
        for (name, value) in named {
            if value == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// All trainable weights of one classifier.
///
/// Inputs are row vectors: a step computes `x_t · w_x + h_{t-1} · w_h + b`.
/// For the LSTM the `4H` columns hold the input, forget, cell and output
/// blocks in that order (see [`Gate`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub arch: Architecture,
    /// `[V, d]`
    pub embedding: Array2<f64>,
    /// `[d, G*H]`
    pub w_x: Array2<f64>,
    /// `[H, G*H]`
    pub w_h: Array2<f64>,
    /// `[G*H]`
    pub b: Array1<f64>,
    /// `[H, U]`
    pub w_out: Array2<f64>,
    /// `[U]`
    pub b_out: Array1<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = ParameterSet;

pub const TENSOR_NAMES: [&str; 6] = ["embedding", "w_x", "w_h", "b", "w_out", "b_out"];

impl ParameterSet {
    pub fn zeros(arch: Architecture, dims: ModelDims) -> Self {
        let gh = arch.gate_count() * dims.hidden;
        ParameterSet {
            arch,
            embedding: Array2::zeros((dims.vocab_size, dims.embed_dim)),
            w_x: Array2::zeros((dims.embed_dim, gh)),
            w_h: Array2::zeros((dims.hidden, gh)),
            b: Array1::zeros(gh),
            w_out: Array2::zeros((dims.hidden, dims.classes)),
            b_out: Array1::zeros(dims.classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ParameterSet::zeros(self.arch, self.dims())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab_size: self.embedding.nrows(),
            embed_dim: self.embedding.ncols(),
            hidden: self.w_h.nrows(),
            classes: self.b_out.len(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.nrows()
    }

    pub fn classes(&self) -> usize {
        self.b_out.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Row-major views of every tensor, in [`TENSOR_NAMES`] order.
    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.embedding.as_slice().expect("standard layout"),
            self.w_x.as_slice().expect("standard layout"),
            self.w_h.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
            self.b_out.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.embedding.as_slice_mut().expect("standard layout"),
            self.w_x.as_slice_mut().expect("standard layout"),
            self.w_h.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
            self.b_out.as_slice_mut().expect("standard layout"),
        ]
    }

    /// Shapes of every tensor, in [`TENSOR_NAMES`] order.
    pub fn shapes(&self) -> [Vec<usize>; 6] {
        [
            self.embedding.shape().to_vec(),
            self.w_x.shape().to_vec(),
            self.w_h.shape().to_vec(),
            self.b.shape().to_vec(),
            self.w_out.shape().to_vec(),
            self.b_out.shape().to_vec(),
        ]
    }

    pub fn congruent(&self, other: &ParameterSet) -> bool {
        self.arch == other.arch && self.shapes() == other.shapes()
    }

    pub fn ensure_congruent(&self, other: &ParameterSet) -> Result<()> {
        if self.congruent(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{:?} {:?} vs {:?} {:?}",
                self.arch,
                self.shapes(),
                other.arch,
                other.shapes()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Bias block of one LSTM gate.
    pub fn gate_bias(&self, gate: Gate) -> Option<ndarray::ArrayView1<'_, f64>> {
        (self.arch == Architecture::Lstm).then(|| {
            let h = self.hidden();
            let start = gate as usize * h;
            self.b.slice(ndarray::s![start..start + h])
        })
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Weights uniform in `±1/sqrt(fan_in)`, biases zero, LSTM forget bias 1.
/// The embedding is a lookup from one-hot inputs and uses fan-in 1.
pub fn init_params<R: Rng + ?Sized>(arch: Architecture, dims: ModelDims, rng: &mut R) -> Result<ParameterSet> {
    dims.validate()?;
    let mut p = ParameterSet::zeros(arch, dims);
    let mut fill = |a: &mut Array2<f64>, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        a.iter_mut().for_each(|v| *v = rng.random_range(-bound..=bound));
    };
    fill(&mut p.embedding, 1);
    fill(&mut p.w_x, dims.embed_dim);
    fill(&mut p.w_h, dims.hidden);
    fill(&mut p.w_out, dims.hidden);
    if arch == Architecture::Lstm {
        let h = dims.hidden;
        let start = Gate::Forget as usize * h;
        p.b.slice_mut(ndarray::s![start..start + h]).fill(1.0);
    }
    Ok(p)
}

//! Batched forward pass, cross-entropy loss and backpropagation through time.
//!
//! A batch holds sequences of one common length. Rows of every activation
//! matrix are batch elements, so each step is two matrix products plus
//! elementwise work.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::params::{Architecture, Gradients, ParameterSet};
use crate::error::{Error, Result};
use crate::language::Individual;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations kept for the backward pass.
struct Trace {
    /// `ids[t][r]`: token of batch row `r` at step `t`.
    ids: Vec<Vec<usize>>,
    /// Embedded inputs per step, `[B, d]`.
    xs: Vec<Array2<f64>>,
    /// Hidden states `h_0..=h_T`, `[B, H]`; `h_0` is zero.
    hs: Vec<Array2<f64>>,
    /// LSTM only: cell states `c_0..=c_T`.
    cs: Vec<Array2<f64>>,
    /// LSTM only: activated gates per step, `[B, 4H]`.
    gates: Vec<Array2<f64>>,
    /// LSTM only: `tanh(c_t)` per step.
    tanh_cs: Vec<Array2<f64>>,
}

fn validate_sequences(params: &ParameterSet, seqs: &[&[usize]]) -> Result<usize> {
    let first = seqs.first().ok_or_else(|| Error::input("batch is empty"))?;
    let len = first.len();
    if len == 0 {
        return Err(Error::input("sequence is empty"));
    }
    let vocab = params.embedding.nrows();
    for seq in seqs {
        if seq.len() != len {
            return Err(Error::input(format!(
                "mixed sequence lengths in batch ({} and {})",
                len,
                seq.len()
            )));
        }
        if let Some(&bad) = seq.iter().find(|&&id| id >= vocab) {
            return Err(Error::input(format!("token id {bad} out of range for vocabulary of {vocab}")));
        }
    }
    Ok(len)
}

fn gather_rows(table: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
    table.select(Axis(0), ids)
}

fn run_cell(params: &ParameterSet, seqs: &[&[usize]], len: usize) -> Trace {
    let batch = seqs.len();
    let h = params.hidden();
    let gh = params.b.len();
    let mut trace = Trace {
        ids: Vec::with_capacity(len),
        xs: Vec::with_capacity(len),
        hs: Vec::with_capacity(len + 1),
        cs: Vec::new(),
        gates: Vec::new(),
        tanh_cs: Vec::new(),
    };
    trace.hs.push(Array2::zeros((batch, h)));
    if params.arch == Architecture::Lstm {
        trace.cs.push(Array2::zeros((batch, h)));
    }

    for t in 0..len {
        let ids: Vec<usize> = seqs.iter().map(|s| s[t]).collect();
        let x = gather_rows(&params.embedding, &ids);
        let mut pre = Array2::from_shape_fn((batch, gh), |(_, j)| params.b[j]);
        general_mat_mul(1.0, &x, &params.w_x, 1.0, &mut pre);
        general_mat_mul(1.0, &trace.hs[t], &params.w_h, 1.0, &mut pre);

        match params.arch {
            Architecture::VanillaRnn => {
                pre.mapv_inplace(f64::tanh);
                trace.hs.push(pre);
            }
            Architecture::Lstm => {
                let c_prev = trace.cs[t].as_slice().expect("standard layout");
                let mut c = Array2::zeros((batch, h));
                let mut tanh_c = Array2::zeros((batch, h));
                let mut h_new = Array2::zeros((batch, h));
                {
                    let g = pre.as_slice_mut().expect("standard layout");
                    let cs = c.as_slice_mut().expect("standard layout");
                    let tcs = tanh_c.as_slice_mut().expect("standard layout");
                    let hs = h_new.as_slice_mut().expect("standard layout");
                    for r in 0..batch {
                        let row = &mut g[r * gh..(r + 1) * gh];
                        let (i_blk, rest) = row.split_at_mut(h);
                        let (f_blk, rest) = rest.split_at_mut(h);
                        let (g_blk, o_blk) = rest.split_at_mut(h);
                        for j in 0..h {
                            let i = sigmoid(i_blk[j]);
                            let f = sigmoid(f_blk[j]);
                            let cand = g_blk[j].tanh();
                            let o = sigmoid(o_blk[j]);
                            i_blk[j] = i;
                            f_blk[j] = f;
                            g_blk[j] = cand;
                            o_blk[j] = o;
                            let k = r * h + j;
                            let cv = f * c_prev[k] + i * cand;
                            let tc = cv.tanh();
                            cs[k] = cv;
                            tcs[k] = tc;
                            hs[k] = o * tc;
                        }
                    }
                }
                trace.gates.push(pre);
                trace.cs.push(c);
                trace.tanh_cs.push(tanh_c);
                trace.hs.push(h_new);
            }
        }
        trace.ids.push(ids);
        trace.xs.push(x);
    }
    trace
}

fn readout(params: &ParameterSet, h_last: &Array2<f64>) -> Array2<f64> {
    let mut logits = Array2::from_shape_fn((h_last.nrows(), params.classes()), |(_, k)| params.b_out[k]);
    general_mat_mul(1.0, h_last, &params.w_out, 1.0, &mut logits);
    logits
}

/// Logits for a batch of equal-length sequences, `[B, U]`.
pub fn forward_batch(params: &ParameterSet, seqs: &[&[usize]]) -> Result<Array2<f64>> {
    let len = validate_sequences(params, seqs)?;
    let trace = run_cell(params, seqs, len);
    Ok(readout(params, trace.hs.last().expect("at least h_0")))
}

/// Runs the recurrent cell from a zero state over `token_ids` and returns
/// the classifier logits of the final hidden state.
pub fn forward(params: &ParameterSet, token_ids: &[usize]) -> Result<Array1<f64>> {
    let logits = forward_batch(params, &[token_ids])?;
    Ok(logits.row(0).to_owned())
}

pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|z| (z - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

pub fn predict(params: &ParameterSet, token_ids: &[usize]) -> Result<Individual> {
    let logits = forward(params, token_ids)?;
    Ok(Individual(argmax(logits.as_slice().expect("contiguous"))))
}

/// Predictions for a batch of equal-length sequences.
pub fn predict_batch(params: &ParameterSet, seqs: &[&[usize]]) -> Result<Vec<Individual>> {
    let logits = forward_batch(params, seqs)?;
    Ok(logits
        .rows()
        .into_iter()
        .map(|row| Individual(argmax(row.as_slice().expect("contiguous"))))
        .collect())
}

fn validate_labels(params: &ParameterSet, batch: &[(&[usize], usize)]) -> Result<()> {
    let classes = params.classes();
    if let Some((_, bad)) = batch.iter().find(|(_, label)| *label >= classes) {
        return Err(Error::input(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Mean cross-entropy and `softmax - onehot` rows divided by the batch size.
fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let batch = labels.len() as f64;
    let mut loss = 0.0;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    for (r, (row, &label)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - row[label];
        for (k, &z) in row.iter().enumerate() {
            dlogits[[r, k]] = (z - log_norm).exp() / batch;
        }
        dlogits[[r, label]] -= 1.0 / batch;
    }
    (loss / batch, dlogits)
}

/// Mean cross-entropy of the batch without gradients.
pub fn loss(params: &ParameterSet, batch: &[(&[usize], usize)]) -> Result<f64> {
    let seqs: Vec<&[usize]> = batch.iter().map(|(s, _)| *s).collect();
    let logits = forward_batch(params, &seqs)?;
    validate_labels(params, batch)?;
    let labels: Vec<usize> = batch.iter().map(|(_, l)| *l).collect();
    Ok(cross_entropy(&logits, &labels).0)
}

/// Mean cross-entropy over the batch and its exact gradient by full
/// backpropagation through time.
pub fn loss_and_grad(params: &ParameterSet, batch: &[(&[usize], usize)]) -> Result<(f64, Gradients)> {
    let seqs: Vec<&[usize]> = batch.iter().map(|(s, _)| *s).collect();
    let len = validate_sequences(params, &seqs)?;
    validate_labels(params, batch)?;
    let labels: Vec<usize> = batch.iter().map(|(_, l)| *l).collect();

    let trace = run_cell(params, &seqs, len);
    let h_last = trace.hs.last().expect("at least h_0");
    let logits = readout(params, h_last);
    let (loss, dlogits) = cross_entropy(&logits, &labels);

    let mut grads = params.zeros_like();
    general_mat_mul(1.0, &h_last.t(), &dlogits, 0.0, &mut grads.w_out);
    grads.b_out = dlogits.sum_axis(Axis(0));

    let n = seqs.len();
    let h = params.hidden();
    let gh = params.b.len();
    let mut dh = dlogits.dot(&params.w_out.t());
    let mut dc = Array2::<f64>::zeros((n, h));
    let mut dpre = Array2::<f64>::zeros((n, gh));

    for t in (0..len).rev() {
        match params.arch {
            Architecture::VanillaRnn => {
                let h_t = &trace.hs[t + 1];
                ndarray::Zip::from(&mut dpre)
                    .and(&dh)
                    .and(h_t)
                    .for_each(|d, &g, &y| *d = g * (1.0 - y * y));
            }
            Architecture::Lstm => {
                let gates = trace.gates[t].as_slice().expect("standard layout");
                let tanh_c = trace.tanh_cs[t].as_slice().expect("standard layout");
                let c_prev = trace.cs[t].as_slice().expect("standard layout");
                let dh_s = dh.as_slice().expect("standard layout");
                let dc_s = dc.as_slice_mut().expect("standard layout");
                let dp = dpre.as_slice_mut().expect("standard layout");
                for r in 0..n {
                    let g_row = &gates[r * gh..(r + 1) * gh];
                    let d_row = &mut dp[r * gh..(r + 1) * gh];
                    for j in 0..h {
                        let k = r * h + j;
                        let (i, f, cand, o) = (g_row[j], g_row[h + j], g_row[2 * h + j], g_row[3 * h + j]);
                        let tc = tanh_c[k];
                        let dct = dc_s[k] + dh_s[k] * o * (1.0 - tc * tc);
                        d_row[j] = dct * cand * i * (1.0 - i);
                        d_row[h + j] = dct * c_prev[k] * f * (1.0 - f);
                        d_row[2 * h + j] = dct * i * (1.0 - cand * cand);
                        d_row[3 * h + j] = dh_s[k] * tc * o * (1.0 - o);
                        // carried to step t-1
                        dc_s[k] = dct * f;
                    }
                }
            }
        }

        general_mat_mul(1.0, &trace.xs[t].t(), &dpre, 1.0, &mut grads.w_x);
        general_mat_mul(1.0, &trace.hs[t].t(), &dpre, 1.0, &mut grads.w_h);
        grads.b += &dpre.sum_axis(Axis(0));

        let dx = dpre.dot(&params.w_x.t());
        for (r, &id) in trace.ids[t].iter().enumerate() {
            let mut row = grads.embedding.row_mut(id);
            row += &dx.row(r);
        }
        if t > 0 {
            dh = dpre.dot(&params.w_h.t());
        }
    }

    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{init_params, ModelDims};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(arch: Architecture) -> ParameterSet {
        let dims = ModelDims { vocab_size: 11, embed_dim: 4, hidden: 6, classes: 4 };
        init_params(arch, dims, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
    }

    #[test]
    fn zero_params_give_uniform_output() {
        for arch in [Architecture::VanillaRnn, Architecture::Lstm] {
            let p = small(arch).zeros_like();
            let logits = forward(&p, &[0, 8, 4]).unwrap();
            assert!(logits.iter().all(|&z| z == 0.0));
            let probs = softmax(logits.view());
            assert!(probs.iter().all(|&q| (q - 0.25).abs() < 1e-15));
            assert_eq!(predict(&p, &[3]).unwrap(), Individual(0));
            let (l, _) = loss_and_grad(&p, &[(&[0, 8, 4][..], 2), (&[1, 8, 5][..], 3)]).unwrap();
            assert!((l - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_and_tie_break() {
        assert_eq!(argmax(&[0.1, 2.0, -1.0, 0.0]), 1);
        assert_eq!(argmax(&[0.0; 4]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(array![1000.0, -3.0, 2.5, 0.0].view());
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn input_errors() {
        let p = small(Architecture::Lstm);
        assert!(matches!(forward(&p, &[]), Err(Error::Input(_))));
        assert!(matches!(forward(&p, &[11]), Err(Error::Input(_))));
        let mixed = [(&[0usize, 8, 4][..], 0usize), (&[1usize][..], 1)];
        assert!(matches!(loss_and_grad(&p, &mixed), Err(Error::Input(_))));
        assert!(matches!(loss_and_grad(&p, &[]), Err(Error::Input(_))));
        assert!(matches!(loss_and_grad(&p, &[(&[0usize][..], 4)]), Err(Error::Input(_))));
    }

    #[test]
    fn batch_rows_match_single_forward() {
        let p = small(Architecture::Lstm);
        let seqs: [&[usize]; 3] = [&[0, 8, 4], &[1, 8, 6], &[3, 8, 7]];
        let batched = forward_batch(&p, &seqs).unwrap();
        for (r, s) in seqs.iter().enumerate() {
            let single = forward(&p, s).unwrap();
            for k in 0..4 {
                assert!((batched[[r, k]] - single[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn duplicated_batch_leaves_loss_and_grads_unchanged() {
        for arch in [Architecture::VanillaRnn, Architecture::Lstm] {
            let p = small(arch);
            let batch = [(&[0usize, 8, 4][..], 1usize), (&[2usize, 8, 5][..], 3)];
            let doubled = [batch[0], batch[1], batch[0], batch[1]];
            let (l1, g1) = loss_and_grad(&p, &batch).unwrap();
            let (l2, g2) = loss_and_grad(&p, &doubled).unwrap();
            assert!((l1 - l2).abs() < 1e-14);
            for (a, b) in g1.slices().iter().zip(g2.slices()) {
                for (x, y) in a.iter().zip(b.iter()) {
                    assert!((x - y).abs() < 1e-14);
                }
            }
        }
    }
}

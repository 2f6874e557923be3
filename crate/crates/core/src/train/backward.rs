//! Exact reverse-mode gradients of the weighted loss.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::model::{
    ForwardOutput, LstmCache, LstmLayerParams, MhaCache, MhaParams, ModelParams, SampleTrace,
};
use crate::pipeline::PaddedBatch;

/// `∂L/∂logits` for every sample of a batch under the mean weighted loss.
///
/// Binary: `w_y (p − y) / N`; K classes: `w_y (p_k − [k = y]) / N`.
pub fn logit_gradients(
    probs: &[Vec<f64>],
    labels: &[u32],
    weights: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows, {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(row, &y)| {
            let w = *weights
                .get(y as usize)
                .ok_or_else(|| Error::InvalidInput(format!("no weight for class {y}")))?;
            if row.len() == 2 {
                Ok(vec![w * (row[1] - f64::from(y)) / n])
            } else {
                Ok(row
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| w * (p - f64::from(u8::from(k == y as usize))) / n)
                    .collect())
            }
        })
        .collect()
}

/// Gradients of the batch loss with respect to every parameter, laid out as
/// a [`ModelParams`]. `output` must come from `forward` on the same batch
/// and parameters; train-mode traces carry their dropout masks.
pub fn backward(
    batch: &PaddedBatch,
    model: &ModelParams,
    weights: &[f64],
    output: &ForwardOutput,
) -> Result<ModelParams> {
    let samples = &output.trace.samples;
    if samples.len() != batch.len() {
        return Err(Error::Dimension(format!(
            "trace holds {} samples, batch {}",
            samples.len(),
            batch.len()
        )));
    }
    if model.mha.is_some() != samples.iter().all(|s| s.mha.is_some()) && !samples.is_empty() {
        return Err(Error::InvalidInput(
            "trace does not match model attention setting".into(),
        ));
    }
    let labels = batch.require_labels()?;
    let dlogits = logit_gradients(&output.probs, &labels, weights)?;
    let mut grads = model.zeros_like();
    for (trace, dl) in samples.iter().zip(&dlogits) {
        backward_sample(trace, model, dl, &mut grads);
    }
    Ok(grads)
}

fn backward_sample(
    trace: &SampleTrace,
    model: &ModelParams,
    dlogits: &[f64],
    grads: &mut ModelParams,
) {
    // classifier head
    let flat = trace.classifier_input.as_slice();
    let w = &model.head.weight;
    let mut d_flat = vec![0.0; flat.len()];
    {
        let gw = &mut grads.head.weight;
        for (r, (&x, d)) in flat.iter().zip(d_flat.iter_mut()).enumerate() {
            let wrow = w.row(r);
            let grow = gw.row_mut(r);
            for k in 0..dlogits.len() {
                grow[k] += x * dlogits[k];
            }
            *d = dot(wrow, dlogits);
        }
        for (b, d) in grads.head.bias.as_mut_slice().iter_mut().zip(dlogits) {
            *b += d;
        }
    }
    if let Some(mask) = &trace.dropout_mask {
        for (d, m) in d_flat.iter_mut().zip(mask) {
            *d *= m;
        }
    }

    // layer norm
    let norm = &trace.norm;
    let (t_len, dim) = norm.output.shape();
    let gamma = model.norm.gamma.as_slice();
    let mut d_fused = Matrix::zeros(t_len, dim);
    for r in 0..t_len {
        let dz = &d_flat[r * dim..(r + 1) * dim];
        let n = norm.normalized.row(r);
        let mut dn = vec![0.0; dim];
        for j in 0..dim {
            grads.norm.gamma.as_mut_slice()[j] += dz[j] * n[j];
            grads.norm.beta.as_mut_slice()[j] += dz[j];
            dn[j] = dz[j] * gamma[j];
        }
        let mean_dn = dn.iter().sum::<f64>() / dim as f64;
        let mean_dn_n = dot(&dn, n) / dim as f64;
        let s = norm.inv_std[r];
        for (j, out) in d_fused.row_mut(r).iter_mut().enumerate() {
            *out = s * (dn[j] - mean_dn - n[j] * mean_dn_n);
        }
    }

    // residual: both branches receive d_fused
    let mut d_h = d_fused.clone();
    if let (Some(cache), Some(params), Some(gmha)) = (&trace.mha, &model.mha, grads.mha.as_mut()) {
        let h = &trace.lstm.last().unwrap().hidden;
        mha_backward(h, cache, params, &d_fused, gmha, &mut d_h);
    }

    // BPTT, top layer first
    for l in (0..trace.lstm.len()).rev() {
        let need_input = l > 0;
        let d_input = lstm_backward(
            &trace.lstm[l],
            &model.lstm[l],
            &d_h,
            &mut grads.lstm[l],
            need_input,
        );
        if let Some(d) = d_input {
            d_h = d;
        }
    }
}

fn mha_backward(
    h: &Matrix,
    cache: &MhaCache,
    params: &MhaParams,
    d_out: &Matrix,
    grads: &mut MhaParams,
    d_h: &mut Matrix,
) {
    cache.concat.t_matmul_acc(d_out, &mut grads.w_o);
    let d_concat = d_out.matmul_t(&params.w_o);
    let dk = params.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    for (i, head) in cache.heads.iter().enumerate() {
        let d_o = d_concat.column_block(i * dk, dk);
        let d_v = head.weights.t_matmul(&d_o);
        let d_p = d_o.matmul_t(&head.v);
        // softmax Jacobian row by row, then the 1/√d_k scale
        let mut d_scores = Matrix::zeros(d_p.rows(), d_p.cols());
        for r in 0..d_p.rows() {
            let p = head.weights.row(r);
            let dp = d_p.row(r);
            let inner = dot(p, dp);
            for (j, out) in d_scores.row_mut(r).iter_mut().enumerate() {
                *out = p[j] * (dp[j] - inner) * scale;
            }
        }
        let d_q = d_scores.matmul(&head.k);
        let d_k = d_scores.t_matmul(&head.q);

        h.t_matmul_acc(&d_q, &mut grads.w_q[i]);
        h.t_matmul_acc(&d_k, &mut grads.w_k[i]);
        h.t_matmul_acc(&d_v, &mut grads.w_v[i]);
        d_h.add_assign(&d_q.matmul_t(&params.w_q[i]));
        d_h.add_assign(&d_k.matmul_t(&params.w_k[i]));
        d_h.add_assign(&d_v.matmul_t(&params.w_v[i]));
    }
}

/// Backprop through time for one layer. Returns `∂L/∂input` when asked.
fn lstm_backward(
    cache: &LstmCache,
    params: &LstmLayerParams,
    d_hidden: &Matrix,
    grads: &mut LstmLayerParams,
    need_input: bool,
) -> Option<Matrix> {
    let (t_len, n) = cache.hidden.shape();
    let mut d_gates = Matrix::zeros(t_len, 4 * n);
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    for t in (0..t_len).rev() {
        let gates = cache.gates.row(t);
        let ct = cache.cells_tanh.row(t);
        let dh_row = d_hidden.row(t);
        let da = d_gates.row_mut(t);
        for j in 0..n {
            let (i, f, g, o) = (gates[j], gates[n + j], gates[2 * n + j], gates[3 * n + j]);
            let c_prev = if t > 0 { cache.cells[(t - 1, j)] } else { 0.0 };
            let dh = dh_row[j] + dh_next[j];
            let dc = dc_next[j] + dh * o * (1.0 - ct[j] * ct[j]);
            let d_o = dh * ct[j];
            da[j] = dc * g * i * (1.0 - i);
            da[n + j] = dc * c_prev * f * (1.0 - f);
            da[2 * n + j] = dc * i * (1.0 - g * g);
            da[3 * n + j] = d_o * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        for (k, out) in dh_next.iter_mut().enumerate() {
            *out = dot(params.w_recurrent.row(k), da);
        }
    }

    cache.input.t_matmul_acc(&d_gates, &mut grads.w_input);
    for t in 1..t_len {
        let h_prev = cache.hidden.row(t - 1);
        let da = d_gates.row(t);
        for (k, &hk) in h_prev.iter().enumerate() {
            if hk != 0.0 {
                crate::matrix::axpy(hk, da, grads.w_recurrent.row_mut(k));
            }
        }
    }
    let gb = grads.bias.as_mut_slice();
    for t in 0..t_len {
        for (b, d) in gb.iter_mut().zip(d_gates.row(t)) {
            *b += d;
        }
    }
    need_input.then(|| d_gates.matmul_t(&params.w_input))
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{attention_summary, multi_head_attention, MhaCache};
use super::head::classify;
use super::lstm::{stacked_lstm_forward, LstmCache};
use super::norm::{fuse_and_normalize, NormCache};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::io::EmbeddingSequence;
use crate::matrix::Matrix;
use crate::pipeline::PaddedBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, mask drawn from the call's seed.
    Train,
    Eval,
}

/// Everything one sample's forward pass produced, enough to run it backwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub lstm: Vec<LstmCache>,
    pub mha: Option<MhaCache>,
    pub norm: NormCache,
    /// Inverted-dropout multipliers (`0` or `1/(1−rate)`), train mode only.
    pub dropout_mask: Option<Vec<f64>>,
    /// Post-dropout classifier input, `max_len × d`.
    pub classifier_input: Matrix,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub valid_length: usize,
}

impl SampleTrace {
    /// Top LSTM layer output `H`.
    pub fn lstm_output(&self) -> &Matrix {
        &self.lstm.last().expect("at least one LSTM layer").hidden
    }

    pub fn attention_weights(&self) -> Vec<&Matrix> {
        self.mha
            .iter()
            .flat_map(|m| m.heads.iter().map(|h| &h.weights))
            .collect()
    }

    /// Residual sum before normalization.
    pub fn pre_norm(&self) -> &Matrix {
        &self.norm.fused
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub mode: Mode,
    pub seed: u64,
    pub samples: Vec<SampleTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Per sample, one probability per class.
    pub probs: Vec<Vec<f64>>,
    pub trace: ForwardTrace,
}

/// One padded sample through the network. `rng` drives dropout and is only
/// consulted in train mode.
pub fn forward_sample(
    x: &Matrix,
    valid_length: usize,
    model: &ModelParams,
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<SampleTrace> {
    let arch = &model.arch;
    if x.shape() != (arch.max_len, arch.input_dim) {
        return Err(Error::Dimension(format!(
            "sample is {}×{}, model expects {}×{}",
            x.rows(),
            x.cols(),
            arch.max_len,
            arch.input_dim
        )));
    }
    let lstm = stacked_lstm_forward(x, &model.lstm);
    let h = &lstm.last().unwrap().hidden;
    let key_len = arch.mask_padding.then_some(valid_length);
    let mha = model
        .mha
        .as_ref()
        .map(|p| multi_head_attention(h, p, key_len));
    let norm = fuse_and_normalize(h, mha.as_ref().map(|m| &m.output), &model.norm);

    let mut classifier_input = norm.output.clone();
    let dropout_mask = match (mode, rng) {
        (Mode::Train, Some(rng)) if arch.dropout > 0.0 => {
            let keep = 1.0 - arch.dropout;
            let mask: Vec<f64> = (0..classifier_input.as_slice().len())
                .map(|_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect();
            for (z, m) in classifier_input.as_mut_slice().iter_mut().zip(&mask) {
                *z *= m;
            }
            Some(mask)
        }
        _ => None,
    };

    let (logits, probs) = classify(&classifier_input, &model.head, arch.classes)?;
    Ok(SampleTrace {
        lstm,
        mha,
        norm,
        dropout_mask,
        classifier_input,
        logits,
        probs,
        valid_length,
    })
}

/// Batch forward. In train mode sample `i` draws its dropout mask from
/// stream `i` of a ChaCha generator seeded with `seed`; eval mode ignores
/// the seed and is a pure function of batch and parameters.
pub fn forward(
    batch: &PaddedBatch,
    model: &ModelParams,
    mode: Mode,
    seed: u64,
) -> Result<ForwardOutput> {
    if batch.feature_dim != model.arch.input_dim && !batch.is_empty() {
        return Err(Error::Dimension(format!(
            "batch feature dim {} != model input dim {}",
            batch.feature_dim, model.arch.input_dim
        )));
    }
    if batch.max_len != model.arch.max_len {
        return Err(Error::Dimension(format!(
            "batch padded to {} steps, model expects {}",
            batch.max_len, model.arch.max_len
        )));
    }
    let samples = batch
        .data
        .iter()
        .zip(&batch.valid_lengths)
        .enumerate()
        .map(|(i, (x, &valid))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            forward_sample(x, valid, model, mode, Some(&mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForwardOutput {
        probs: samples.iter().map(|s| s.probs.clone()).collect(),
        trace: ForwardTrace {
            mode,
            seed,
            samples,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub video_id: String,
    pub probs: Vec<f64>,
    pub class: u32,
    /// Per-position attention importance; `None` without an attention branch.
    pub importance: Option<Vec<f64>>,
}

/// Eval-mode predictions. Binary decisions use `p ≥ threshold`, multiclass
/// the arg-max with the lowest index winning ties.
pub fn predict(
    model: &ModelParams,
    sequences: &[EmbeddingSequence],
    threshold: f64,
) -> Result<Vec<Prediction>> {
    let batch = PaddedBatch::from_sequences(sequences, model.arch.max_len)?;
    let out = forward(&batch, model, Mode::Eval, 0)?;
    sequences
        .iter()
        .zip(&out.trace.samples)
        .map(|(seq, trace)| {
            let class = crate::eval::decide(&trace.probs, threshold);
            let importance = match &trace.mha {
                Some(_) => Some(attention_summary(trace, trace.valid_length)?),
                None => None,
            };
            Ok(Prediction {
                video_id: seq.video_id.clone(),
                probs: trace.probs.clone(),
                class,
                importance,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{classify, fuse_and_normalize, multi_head_attention, Architecture};

    fn tiny(attention: bool) -> ModelParams {
        let mut arch = Architecture::new(3, 2);
        arch.max_len = 4;
        arch.hidden = vec![4, 4];
        arch.heads = 2;
        arch.attention = attention;
        ModelParams::init(&arch, 7).unwrap()
    }

    fn batch(model: &ModelParams) -> PaddedBatch {
        let d = model.arch.input_dim;
        PaddedBatch {
            data: (0..3)
                .map(|s| Matrix::from_fn(4, d, |t, j| ((s * 12 + t * d + j) as f64 * 0.61).cos()))
                .collect(),
            valid_lengths: vec![4, 4, 4],
            labels: vec![Some(0), Some(1), Some(1)],
            max_len: 4,
            feature_dim: d,
        }
    }

    #[test]
    fn eval_is_bit_identical() {
        let model = tiny(true);
        let b = batch(&model);
        let a = forward(&b, &model, Mode::Eval, 1).unwrap();
        let c = forward(&b, &model, Mode::Eval, 99).unwrap();
        assert_eq!(a.probs, c.probs);
    }

    #[test]
    fn train_mode_is_seeded() {
        let mut model = tiny(true);
        model.arch.dropout = 0.5;
        let b = batch(&model);
        let a = forward(&b, &model, Mode::Train, 5).unwrap();
        let c = forward(&b, &model, Mode::Train, 5).unwrap();
        assert_eq!(a, c);
        let d = forward(&b, &model, Mode::Train, 6).unwrap();
        assert_ne!(a.probs, d.probs);
        assert!(a.trace.samples[0].dropout_mask.is_some());
    }

    #[test]
    fn composition_of_sub_operations() {
        let model = tiny(true);
        let b = batch(&model);
        let out = forward(&b, &model, Mode::Eval, 0).unwrap();
        let x = &b.data[1];
        let h = crate::model::stacked_lstm_forward(x, &model.lstm)
            .pop()
            .unwrap()
            .hidden;
        let a = multi_head_attention(&h, model.mha.as_ref().unwrap(), None).output;
        let z = fuse_and_normalize(&h, Some(&a), &model.norm).output;
        let (_, p) = classify(&z, &model.head, 2).unwrap();
        assert_eq!(out.probs[1], p);
    }

    #[test]
    fn probabilities_in_open_interval_and_rows_stochastic() {
        for attention in [true, false] {
            let model = tiny(attention);
            let out = forward(&batch(&model), &model, Mode::Eval, 0).unwrap();
            for s in &out.trace.samples {
                assert!(s.probs[1] > 0.0 && s.probs[1] < 1.0);
                for w in s.attention_weights() {
                    for r in 0..w.rows() {
                        assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let model = tiny(true);
        let mut b = batch(&model);
        b.feature_dim = 5;
        assert!(forward(&b, &model, Mode::Eval, 0).is_err());
    }

    #[test]
    fn summary_cases() {
        let model = tiny(true);
        let out = forward(&batch(&model), &model, Mode::Eval, 0).unwrap();
        let mut trace = out.trace.samples[0].clone();
        let imp = attention_summary(&trace, 4).unwrap();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let mha = trace.mha.as_mut().unwrap();
        for head in &mut mha.heads {
            head.weights = Matrix::from_fn(4, 4, |_, _| 0.25);
        }
        assert_eq!(attention_summary(&trace, 4).unwrap(), vec![0.25; 4]);
        mha_one_hot(&mut trace, 3);
        assert_eq!(
            attention_summary(&trace, 4).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0]
        );

        trace.mha = None;
        assert!(attention_summary(&trace, 4).is_err());
    }

    fn mha_one_hot(trace: &mut SampleTrace, pos: usize) {
        let mha = trace.mha.as_mut().unwrap();
        mha.heads.truncate(1);
        mha.heads[0].weights = Matrix::from_fn(4, 4, |_, c| if c == pos { 1.0 } else { 0.0 });
    }
}

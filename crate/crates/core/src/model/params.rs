use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pipeline::DEFAULT_MAX_LEN;

pub const DEFAULT_FORGET_BIAS: f64 = 1.0;

/// Shape and behaviour knobs of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub input_dim: usize,
    pub max_len: usize,
    /// Hidden width of each stacked LSTM layer, bottom first.
    pub hidden: Vec<usize>,
    pub heads: usize,
    pub classes: usize,
    /// Stored at `f32` precision, matching the model file.
    pub dropout: f64,
    /// `false` gives the plain LSTM baseline: the attention branch is absent
    /// and the residual sum reduces to the LSTM output.
    pub attention: bool,
    /// Masks keys at positions `>= valid_length` out of the attention softmax.
    pub mask_padding: bool,
}

impl Architecture {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        Architecture {
            input_dim,
            max_len: DEFAULT_MAX_LEN,
            hidden: vec![256, 256],
            heads: 8,
            classes,
            dropout: f64::from(0.3f32),
            attention: true,
            mask_padding: false,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = f64::from(rate as f32);
        self
    }

    /// Attention / residual width `d`, the top LSTM layer's hidden size.
    pub fn model_dim(&self) -> usize {
        *self.hidden.last().unwrap_or(&0)
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim() / self.heads.max(1)
    }

    /// Logit count: one for binary, `classes` otherwise.
    pub fn outputs(&self) -> usize {
        if self.classes == 2 {
            1
        } else {
            self.classes
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("architecture: {m}")));
        if self.input_dim == 0 {
            return bad("input dim must be >= 1".into());
        }
        if self.max_len == 0 {
            return bad("max_len must be >= 1".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!(
                "hidden sizes must be non-empty and positive, got {:?}",
                self.hidden
            ));
        }
        if self.classes < 2 {
            return bad(format!("need >= 2 classes, got {}", self.classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.attention && (self.heads == 0 || !self.model_dim().is_multiple_of(self.heads)) {
            return bad(format!(
                "model dim {} not divisible by {} heads",
                self.model_dim(),
                self.heads
            ));
        }
        Ok(())
    }
}

/// Gate blocks are laid out along columns in the order input, forget,
/// cell candidate, output; each block is `hidden` wide.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// `d_in × 4H`
    pub w_input: Matrix,
    /// `H × 4H`
    pub w_recurrent: Matrix,
    /// `1 × 4H`
    pub bias: Matrix,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmLayerParams {
            w_input: Matrix::zeros(input_dim, 4 * hidden),
            w_recurrent: Matrix::zeros(hidden, 4 * hidden),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_recurrent.rows()
    }
}

/// Per-head `W^Q`, `W^K`, `W^V` (each `d × d_k`) and the shared `W^O` (`d × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct MhaParams {
    pub w_q: Vec<Matrix>,
    pub w_k: Vec<Matrix>,
    pub w_v: Vec<Matrix>,
    pub w_o: Matrix,
}

impl MhaParams {
    pub fn zeros(dim: usize, heads: usize) -> Self {
        let dk = dim / heads;
        MhaParams {
            w_q: vec![Matrix::zeros(dim, dk); heads],
            w_k: vec![Matrix::zeros(dim, dk); heads],
            w_v: vec![Matrix::zeros(dim, dk); heads],
            w_o: Matrix::zeros(dim, dim),
        }
    }

    pub fn heads(&self) -> usize {
        self.w_q.len()
    }

    pub fn head_dim(&self) -> usize {
        self.w_q.first().map_or(0, Matrix::cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Matrix,
    pub beta: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// `(max_len·d) × outputs`
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub lstm: Vec<LstmLayerParams>,
    pub mha: Option<MhaParams>,
    pub norm: LayerNormParams,
    pub head: ClassifierParams,
}

impl ModelParams {
    /// All-zero parameters of the right shapes; also the gradient accumulator.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let mut lstm = Vec::with_capacity(arch.hidden.len());
        let mut d_in = arch.input_dim;
        for &h in &arch.hidden {
            lstm.push(LstmLayerParams::zeros(d_in, h));
            d_in = h;
        }
        let d = arch.model_dim();
        Ok(ModelParams {
            arch: arch.clone(),
            lstm,
            mha: arch.attention.then(|| MhaParams::zeros(d, arch.heads)),
            norm: LayerNormParams {
                gamma: Matrix::zeros(1, d),
                beta: Matrix::zeros(1, d),
            },
            head: ClassifierParams {
                weight: Matrix::zeros(arch.max_len * d, arch.outputs()),
                bias: Matrix::zeros(1, arch.outputs()),
            },
        })
    }

    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        Self::init_with_forget_bias(arch, seed, DEFAULT_FORGET_BIAS)
    }

    /// Weights uniform in `±1/√fan_in`, biases zero except the forget gate,
    /// layer-norm gain one.
    pub fn init_with_forget_bias(arch: &Architecture, seed: u64, forget_bias: f64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |m: &mut Matrix, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in m.as_mut_slice() {
                *x = rng.random_range(-bound..bound);
            }
        };
        for layer in &mut p.lstm {
            let (d_in, h) = (layer.input_dim(), layer.hidden());
            fill(&mut layer.w_input, d_in);
            fill(&mut layer.w_recurrent, h);
            for x in &mut layer.bias.as_mut_slice()[h..2 * h] {
                *x = forget_bias;
            }
        }
        let d = arch.model_dim();
        if let Some(mha) = &mut p.mha {
            for i in 0..mha.heads() {
                fill(&mut mha.w_q[i], d);
                fill(&mut mha.w_k[i], d);
                fill(&mut mha.w_v[i], d);
            }
            fill(&mut mha.w_o, d);
        }
        p.norm.gamma.fill(1.0);
        fill(&mut p.head.weight, arch.max_len * d);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.tensors_mut() {
            m.fill(0.0);
        }
        z
    }

    /// Every trainable tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (l, layer) in self.lstm.iter().enumerate() {
            out.push((format!("lstm.{l}.w_input"), &layer.w_input));
            out.push((format!("lstm.{l}.w_recurrent"), &layer.w_recurrent));
            out.push((format!("lstm.{l}.bias"), &layer.bias));
        }
        if let Some(mha) = &self.mha {
            for i in 0..mha.heads() {
                out.push((format!("mha.{i}.w_q"), &mha.w_q[i]));
                out.push((format!("mha.{i}.w_k"), &mha.w_k[i]));
                out.push((format!("mha.{i}.w_v"), &mha.w_v[i]));
            }
            out.push(("mha.w_o".to_owned(), &mha.w_o));
        }
        out.push(("norm.gamma".to_owned(), &self.norm.gamma));
        out.push(("norm.beta".to_owned(), &self.norm.beta));
        out.push(("head.weight".to_owned(), &self.head.weight));
        out.push(("head.bias".to_owned(), &self.head.bias));
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.lstm {
            out.push(&mut layer.w_input);
            out.push(&mut layer.w_recurrent);
            out.push(&mut layer.bias);
        }
        if let Some(mha) = &mut self.mha {
            for ((q, k), v) in mha.w_q.iter_mut().zip(&mut mha.w_k).zip(&mut mha.w_v) {
                out.push(q);
                out.push(k);
                out.push(v);
            }
            out.push(&mut mha.w_o);
        }
        out.push(&mut self.norm.gamma);
        out.push(&mut self.norm.beta);
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Checks stored shapes against the architecture.
    pub fn validate(&self) -> Result<()> {
        let reference = Self::zeros(&self.arch)?;
        let ours = self.tensors();
        let theirs = reference.tensors();
        if ours.len() != theirs.len() {
            return Err(Error::Dimension(format!(
                "{} tensors, architecture needs {}",
                ours.len(),
                theirs.len()
            )));
        }
        for ((name, a), (_, b)) in ours.iter().zip(&theirs) {
            if a.shape() != b.shape() {
                return Err(Error::Dimension(format!(
                    "{name} is {:?}, expected {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_architecture() {
        let mut arch = Architecture::new(16, 2);
        arch.hidden = vec![8, 12];
        arch.heads = 3;
        let p = ModelParams::init(&arch, 1).unwrap();
        assert_eq!(p.lstm[0].w_input.shape(), (16, 32));
        assert_eq!(p.lstm[1].w_input.shape(), (8, 48));
        let mha = p.mha.as_ref().unwrap();
        assert_eq!(mha.w_q[2].shape(), (12, 4));
        assert_eq!(p.head.weight.shape(), (7 * 12, 1));
        assert_eq!(p.lstm[0].bias.row(0)[8..16], [1.0; 8]);
        assert_eq!(p.tensors().len(), p.clone().tensors_mut().len());
        p.validate().unwrap();
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = Architecture::new(4, 3);
        let a = ModelParams::init(&arch, 9).unwrap();
        assert_eq!(a, ModelParams::init(&arch, 9).unwrap());
        assert_ne!(a, ModelParams::init(&arch, 10).unwrap());
        let bound = 1.0 / 4f64.sqrt();
        assert!(a.lstm[0]
            .w_input
            .as_slice()
            .iter()
            .all(|x| x.abs() <= bound));
        assert_eq!(a.head.bias.shape(), (1, 3));
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut arch = Architecture::new(4, 2);
        arch.hidden = vec![10];
        arch.heads = 4;
        assert!(ModelParams::zeros(&arch).is_err());
        arch.attention = false;
        assert!(ModelParams::zeros(&arch).is_ok());
    }
}

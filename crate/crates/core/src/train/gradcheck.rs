//! Central finite-difference verification of [`backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backward::backward;
use super::loss::batch_loss;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{forward, Architecture, Mode, ModelParams};
use crate::pipeline::PaddedBatch;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Central finite-difference formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(L(θ+ε) − L(θ−ε)) / 2ε`, truncation error `O(ε²)`.
    TwoPoint,
    /// `(−L(θ+2ε) + 8L(θ+ε) − 8L(θ−ε) + L(θ−2ε)) / 12ε`, truncation error
    /// `O(ε⁴)`. Allows a larger step, which shrinks the roundoff floor on
    /// coordinates whose true gradient is near zero.
    FourPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    pub stencil: Stencil,
    /// Coordinates sampled from each weight matrix; `None` checks all.
    /// Tensors with a single row (biases, gains) are always checked fully.
    pub max_coords_per_matrix: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            stencil: Stencil::TwoPoint,
            max_coords_per_matrix: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }

    /// Names of groups at or above `tolerance`.
    pub fn failures(&self, tolerance: f64) -> Vec<&str> {
        self.groups
            .iter()
            .filter(|g| g.max_rel_error.is_nan() || g.max_rel_error >= tolerance)
            .map(|g| g.name.as_str())
            .collect()
    }
}

/// Eval-mode (dropout off) weighted loss.
pub fn loss_at(model: &ModelParams, batch: &PaddedBatch, weights: &[f64]) -> Result<f64> {
    let labels = batch.require_labels()?;
    let out = forward(batch, model, Mode::Eval, 0)?;
    batch_loss(&out.probs, &labels, weights)
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Checks `analytic` against central differences of [`loss_at`].
pub fn compare_gradients(
    model: &ModelParams,
    batch: &PaddedBatch,
    weights: &[f64],
    analytic: &ModelParams,
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(options.epsilon > 0.0 && options.epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "gradcheck epsilon must be positive, got {}",
            options.epsilon
        )));
    }
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    let analytic = analytic.tensors();
    if analytic.len() != names.len() {
        return Err(Error::Dimension(
            "gradient layout does not match model".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut probe = model.clone();
    let mut groups = Vec::with_capacity(names.len());
    for (g, name) in names.into_iter().enumerate() {
        let grad: &Matrix = analytic[g].1;
        let len = grad.as_slice().len();
        let coords: Vec<usize> = match options.max_coords_per_matrix {
            Some(k) if grad.rows() > 1 && k < len => {
                rand::seq::index::sample(&mut rng, len, k).into_vec()
            }
            _ => (0..len).collect(),
        };
        let mut worst = 0.0f64;
        for &c in &coords {
            let original = probe.tensors()[g].1.as_slice()[c];
            let mut at = |offset: f64| -> Result<f64> {
                probe.tensors_mut()[g].as_mut_slice()[c] = original + offset;
                loss_at(&probe, batch, weights)
            };
            let eps = options.epsilon;
            let numeric = match options.stencil {
                Stencil::TwoPoint => (at(eps)? - at(-eps)?) / (2.0 * eps),
                Stencil::FourPoint => {
                    (-at(2.0 * eps)? + 8.0 * at(eps)? - 8.0 * at(-eps)? + at(-2.0 * eps)?)
                        / (12.0 * eps)
                }
            };
            probe.tensors_mut()[g].as_mut_slice()[c] = original;
            let err = relative_error(grad.as_slice()[c], numeric);
            worst = if err.is_nan() {
                f64::INFINITY
            } else {
                worst.max(err)
            };
        }
        groups.push(GroupError {
            name,
            max_rel_error: worst,
            checked: coords.len(),
        });
    }
    Ok(GradCheckReport { groups })
}

/// Analytic gradients from an eval-mode trace, checked coordinate-wise.
pub fn grad_check(
    model: &ModelParams,
    batch: &PaddedBatch,
    weights: &[f64],
    options: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let out = forward(batch, model, Mode::Eval, 0)?;
    let analytic = backward(batch, model, weights, &out)?;
    compare_gradients(model, batch, weights, &analytic, options)
}

/// Dimensions of a small problem for gradient checking.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyConfig {
    pub seq_len: usize,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub heads: usize,
    pub classes: usize,
    pub attention: bool,
    pub mask_padding: bool,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            seq_len: 3,
            input_dim: 8,
            hidden: vec![4],
            heads: 2,
            classes: 2,
            attention: true,
            mask_padding: false,
            batch: 4,
            seed: 0,
        }
    }
}

/// Random model, batch and non-uniform class weights. Every parameter,
/// biases and norm offsets included, is moved off its initial value so no
/// gradient is structurally trivial. With masking on, valid lengths cycle
/// below the padded length.
pub fn tiny_problem(cfg: &TinyConfig) -> Result<(ModelParams, PaddedBatch, Vec<f64>)> {
    let mut arch = Architecture::new(cfg.input_dim, cfg.classes);
    arch.max_len = cfg.seq_len;
    arch.hidden = cfg.hidden.clone();
    arch.heads = cfg.heads;
    arch.attention = cfg.attention;
    arch.mask_padding = cfg.mask_padding;
    arch.dropout = 0.0;
    let mut model = ModelParams::init(&arch, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    for m in model.tensors_mut() {
        for x in m.as_mut_slice() {
            *x += rng.random_range(-0.5..0.5);
        }
    }
    let mut data = Vec::with_capacity(cfg.batch);
    let mut valid_lengths = Vec::with_capacity(cfg.batch);
    for s in 0..cfg.batch {
        let valid = if cfg.mask_padding {
            cfg.seq_len - s % cfg.seq_len
        } else {
            cfg.seq_len
        };
        data.push(Matrix::from_fn(cfg.seq_len, cfg.input_dim, |t, _| {
            if t < valid {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        }));
        valid_lengths.push(valid);
    }
    let labels = (0..cfg.batch)
        .map(|s| Some((s % cfg.classes) as u32))
        .collect();
    let weights = (0..cfg.classes).map(|c| 0.5 + c as f64 * 0.75).collect();
    let batch = PaddedBatch {
        data,
        valid_lengths,
        labels,
        max_len: cfg.seq_len,
        feature_dim: cfg.input_dim,
    };
    Ok((model, batch, weights))
}

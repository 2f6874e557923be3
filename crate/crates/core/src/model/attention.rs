//! Scaled dot-product attention over the LSTM output sequence.

use super::forward::SampleTrace;
use super::params::MhaParams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadCache {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Row-stochastic `T × T` attention weights.
    pub weights: Matrix,
    /// `weights · v`
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhaCache {
    pub heads: Vec<HeadCache>,
    /// `T × d` head outputs side by side.
    pub concat: Matrix,
    /// `concat · W^O`
    pub output: Matrix,
}

pub fn project_qkv(h: &Matrix, params: &MhaParams, head: usize) -> (Matrix, Matrix, Matrix) {
    (
        h.matmul(&params.w_q[head]),
        h.matmul(&params.w_k[head]),
        h.matmul(&params.w_v[head]),
    )
}

/// `softmax(QKᵀ/√d_k)·V` row by row. With `key_len = Some(n)` keys at
/// positions `>= n` get zero weight.
pub fn scaled_dot_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    key_len: Option<usize>,
) -> (Matrix, Matrix) {
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let t_keys = k.rows();
    let n_keys = key_len.unwrap_or(t_keys).clamp(1, t_keys);
    let mut weights = q.matmul_t(k);
    for r in 0..weights.rows() {
        let row = weights.row_mut(r);
        let mut max = f64::NEG_INFINITY;
        for s in row[..n_keys].iter_mut() {
            *s *= scale;
            max = max.max(*s);
        }
        let mut sum = 0.0;
        for s in row[..n_keys].iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        for s in row[..n_keys].iter_mut() {
            *s /= sum;
        }
        row[n_keys..].iter_mut().for_each(|s| *s = 0.0);
    }
    let out = weights.matmul(v);
    (out, weights)
}

pub fn multi_head_attention(h: &Matrix, params: &MhaParams, key_len: Option<usize>) -> MhaCache {
    let dk = params.head_dim();
    let mut concat = Matrix::zeros(h.rows(), dk * params.heads());
    let heads: Vec<HeadCache> = (0..params.heads())
        .map(|i| {
            let (q, k, v) = project_qkv(h, params, i);
            let (output, weights) = scaled_dot_attention(&q, &k, &v, key_len);
            concat.set_column_block(i * dk, &output);
            HeadCache {
                q,
                k,
                v,
                weights,
                output,
            }
        })
        .collect();
    let output = concat.matmul(&params.w_o);
    MhaCache {
        heads,
        concat,
        output,
    }
}

/// Attention received by each key position, averaged over heads and the
/// first `valid_length` query rows, renormalized to sum to one.
pub fn attention_summary(trace: &SampleTrace, valid_length: usize) -> Result<Vec<f64>> {
    let mha = trace
        .mha
        .as_ref()
        .filter(|m| !m.heads.is_empty())
        .ok_or_else(|| Error::InvalidInput("trace holds no attention heads".into()))?;
    let t = mha.heads[0].weights.cols();
    let rows = valid_length.clamp(1, mha.heads[0].weights.rows());
    let mut importance = vec![0.0; t];
    for head in &mha.heads {
        for r in 0..rows {
            for (acc, w) in importance.iter_mut().zip(head.weights.row(r)) {
                *acc += w;
            }
        }
    }
    let total: f64 = importance.iter().sum();
    importance.iter_mut().for_each(|x| *x /= total);
    Ok(importance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, seed: u64) -> Matrix {
        Matrix::from_fn(rows, cols, |r, c| {
            (((r * cols + c) as f64 + 1.0) * (seed as f64 * 0.7 + 1.3)).sin()
        })
    }

    /// Textbook attention without max-subtraction or masking.
    fn naive_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Matrix {
        let dk = q.cols() as f64;
        let mut out = Matrix::zeros(q.rows(), v.cols());
        for i in 0..q.rows() {
            let scores: Vec<f64> = (0..k.rows())
                .map(|j| (0..q.cols()).map(|c| q[(i, c)] * k[(j, c)]).sum::<f64>() / dk.sqrt())
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for j in 0..k.rows() {
                let w = scores[j].exp() / z;
                for c in 0..v.cols() {
                    out[(i, c)] += w * v[(j, c)];
                }
            }
        }
        out
    }

    #[test]
    fn identity_projection_returns_input() {
        let h = m(3, 4, 1);
        let p = MhaParams {
            w_q: vec![Matrix::identity(4)],
            w_k: vec![Matrix::identity(4)],
            w_v: vec![Matrix::identity(4)],
            w_o: Matrix::identity(4),
        };
        let (q, k, v) = project_qkv(&h, &p, 0);
        assert_eq!(q, h);
        assert_eq!(k, h);
        assert_eq!(v, h);
        let zero = MhaParams::zeros(4, 2);
        let (q, _, v) = project_qkv(&h, &zero, 1);
        assert!(q.as_slice().iter().chain(v.as_slice()).all(|&x| x == 0.0));
    }

    #[test]
    fn projection_matches_triple_loop() {
        let h = m(3, 4, 2);
        let w = m(4, 2, 3);
        let p = MhaParams {
            w_q: vec![w.clone()],
            w_k: vec![w.clone()],
            w_v: vec![w.clone()],
            w_o: Matrix::zeros(2, 2),
        };
        let (q, _, _) = project_qkv(&h, &p, 0);
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += h[(i, k)] * w[(k, j)];
                }
                assert!((q[(i, j)] - s).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_step_returns_v() {
        let (q, k, v) = (m(1, 3, 1), m(1, 3, 2), m(1, 3, 3));
        let (out, w) = scaled_dot_attention(&q, &k, &v, None);
        assert_eq!(w.as_slice(), &[1.0]);
        assert_eq!(out, v);
    }

    #[test]
    fn identical_keys_give_column_mean() {
        let q = m(4, 2, 5);
        let k = Matrix::from_fn(4, 2, |_, c| c as f64 + 0.5);
        let v = m(4, 3, 6);
        let (out, _) = scaled_dot_attention(&q, &k, &v, None);
        for c in 0..3 {
            let mean = (0..4).map(|r| v[(r, c)]).sum::<f64>() / 4.0;
            for r in 0..4 {
                assert!((out[(r, c)] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_by_two_hand_oracle() {
        let q = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 2.0]);
        let k = Matrix::from_vec(2, 2, vec![1.0, 1.0, -1.0, 0.5]);
        let v = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, -1.0]);
        let (out, w) = scaled_dot_attention(&q, &k, &v, None);
        // row 0 scores: [1, -1]/√2; row 1 scores: [2, 1]/√2
        let r = std::f64::consts::SQRT_2;
        let w00 = (1.0 / r).exp() / ((1.0 / r).exp() + (-1.0 / r).exp());
        let w10 = (2.0 / r).exp() / ((2.0 / r).exp() + (1.0 / r).exp());
        assert!((w[(0, 0)] - w00).abs() < 1e-15);
        assert!((w[(1, 0)] - w10).abs() < 1e-15);
        assert!((out[(0, 0)] - (w00 * 1.0 + (1.0 - w00) * 3.0)).abs() < 1e-14);
        assert!((out[(1, 1)] - (w10 * 2.0 + -(1.0 - w10))).abs() < 1e-14);
    }

    #[test]
    fn stable_softmax_matches_naive() {
        for seed in 0..20 {
            let (q, k, v) = (m(5, 3, seed), m(5, 3, seed + 100), m(5, 4, seed + 200));
            let (out, w) = scaled_dot_attention(&q, &k, &v, None);
            let naive = naive_attention(&q, &k, &v);
            for (a, b) in out.as_slice().iter().zip(naive.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
            for r in 0..5 {
                assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn masked_keys_get_zero_weight() {
        let (q, k, v) = (m(4, 2, 1), m(4, 2, 2), m(4, 2, 3));
        let (_, w) = scaled_dot_attention(&q, &k, &v, Some(2));
        for r in 0..4 {
            assert_eq!(&w.row(r)[2..], &[0.0, 0.0]);
            assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_head_reduces_to_attention_then_output() {
        let h = m(3, 4, 7);
        let p = MhaParams {
            w_q: vec![m(4, 4, 1)],
            w_k: vec![m(4, 4, 2)],
            w_v: vec![m(4, 4, 3)],
            w_o: m(4, 4, 4),
        };
        let cache = multi_head_attention(&h, &p, None);
        let (q, k, v) = project_qkv(&h, &p, 0);
        let (o, _) = scaled_dot_attention(&q, &k, &v, None);
        assert_eq!(cache.output, o.matmul(&p.w_o));
        let zero_out = MhaParams {
            w_o: Matrix::zeros(4, 4),
            ..p
        };
        let cache = multi_head_attention(&h, &zero_out, None);
        assert!(cache.output.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_heads_equal_independent_heads_concatenated() {
        let h = m(5, 4, 8);
        let p = MhaParams {
            w_q: vec![m(4, 2, 1), m(4, 2, 2)],
            w_k: vec![m(4, 2, 3), m(4, 2, 4)],
            w_v: vec![m(4, 2, 5), m(4, 2, 6)],
            w_o: m(4, 4, 7),
        };
        let cache = multi_head_attention(&h, &p, None);
        let mut concat = Matrix::zeros(5, 4);
        for i in 0..2 {
            let q = h.matmul(&p.w_q[i]);
            let k = h.matmul(&p.w_k[i]);
            let v = h.matmul(&p.w_v[i]);
            concat.set_column_block(2 * i, &naive_attention(&q, &k, &v));
        }
        let expect = concat.matmul(&p.w_o);
        for (a, b) in cache.output.as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

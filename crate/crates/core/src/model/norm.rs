use super::params::LayerNormParams;
use crate::matrix::Matrix;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct NormCache {
    /// `H + A` before normalization.
    pub fused: Matrix,
    /// Standardized rows `(x − μ)/σ`.
    pub normalized: Matrix,
    /// `1/√(var + ε)` per row.
    pub inv_std: Vec<f64>,
    /// `γ ⊙ normalized + β`
    pub output: Matrix,
}

/// Row-wise layer normalization of the residual sum `h + a`.
pub fn fuse_and_normalize(h: &Matrix, a: Option<&Matrix>, norm: &LayerNormParams) -> NormCache {
    let mut fused = h.clone();
    if let Some(a) = a {
        fused.add_assign(a);
    }
    let (rows, d) = fused.shape();
    let mut normalized = Matrix::zeros(rows, d);
    let mut output = Matrix::zeros(rows, d);
    let mut inv_std = Vec::with_capacity(rows);
    let (gamma, beta) = (norm.gamma.as_slice(), norm.beta.as_slice());
    for r in 0..rows {
        let x = fused.row(r);
        let mean = x.iter().sum::<f64>() / d as f64;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(s);
        for j in 0..d {
            let n = (x[j] - mean) * s;
            normalized[(r, j)] = n;
            output[(r, j)] = gamma[j] * n + beta[j];
        }
    }
    NormCache {
        fused,
        normalized,
        inv_std,
        output,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize) -> LayerNormParams {
        LayerNormParams {
            gamma: Matrix::from_vec(1, d, vec![1.0; d]),
            beta: Matrix::zeros(1, d),
        }
    }

    #[test]
    fn standardizes_rows() {
        let h = Matrix::from_fn(3, 8, |r, c| {
            ((r * 8 + c) as f64 * 1.7).sin() * 10.0 + r as f64
        });
        let out = fuse_and_normalize(&h, Some(&Matrix::zeros(3, 8)), &unit(8)).output;
        for r in 0..3 {
            let row = out.row(r);
            let mean = row.iter().sum::<f64>() / 8.0;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_row_maps_to_beta() {
        let norm = LayerNormParams {
            gamma: Matrix::from_vec(1, 3, vec![2.0, 3.0, 4.0]),
            beta: Matrix::from_vec(1, 3, vec![0.5, -0.5, 1.0]),
        };
        let h = Matrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]);
        let a = Matrix::from_vec(1, 3, vec![2.0, 2.0, 2.0]);
        let out = fuse_and_normalize(&h, Some(&a), &norm).output;
        assert_eq!(out.row(0), norm.beta.row(0));
    }

    #[test]
    fn hand_computed_row() {
        // x = [1, 2, 3, 6]: mean 3, variance (4+1+0+9)/4 = 3.5
        let h = Matrix::from_vec(1, 4, vec![1.0, 2.0, 3.0, 6.0]);
        let norm = LayerNormParams {
            gamma: Matrix::from_vec(1, 4, vec![1.0, 2.0, 1.0, 0.5]),
            beta: Matrix::from_vec(1, 4, vec![0.0, 0.0, 1.0, 0.0]),
        };
        let out = fuse_and_normalize(&h, None, &norm).output;
        let s = (3.5f64 + 1e-5).sqrt();
        let expect = [-2.0 / s, -2.0 / s, 1.0, 0.5 * 3.0 / s];
        for (a, b) in out.row(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

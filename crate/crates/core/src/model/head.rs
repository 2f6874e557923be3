use super::params::ClassifierParams;
use crate::error::{Error, Result};
use crate::matrix::{vec_matmul_acc, Matrix};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Flattens `z` row-major and applies the affine head. Returns
/// `(logits, probabilities)`; probabilities always have one entry per class,
/// so the binary case is `[1 − p, p]` with `p = σ(logit)`.
pub fn classify(
    z: &Matrix,
    head: &ClassifierParams,
    classes: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if z.rows() * z.cols() != head.weight.rows() {
        return Err(Error::Dimension(format!(
            "classifier expects {} flattened inputs, got {}×{}",
            head.weight.rows(),
            z.rows(),
            z.cols()
        )));
    }
    let mut logits = head.bias.as_slice().to_vec();
    vec_matmul_acc(z.as_slice(), &head.weight, &mut logits);
    let probs = if classes == 2 {
        let p = sigmoid(logits[0]);
        vec![1.0 - p, p]
    } else {
        softmax(&logits)
    };
    Ok((logits, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_head_is_half() {
        let head = ClassifierParams {
            weight: Matrix::zeros(6, 1),
            bias: Matrix::zeros(1, 1),
        };
        let (_, p) = classify(&Matrix::from_vec(3, 2, vec![1.0; 6]), &head, 2).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn scalar_oracle() {
        let head = ClassifierParams {
            weight: Matrix::from_vec(2, 1, vec![0.5, -1.25]),
            bias: Matrix::from_vec(1, 1, vec![0.1]),
        };
        let z = Matrix::from_vec(1, 2, vec![2.0, 0.4]);
        let (logits, p) = classify(&z, &head, 2).unwrap();
        let s = 0.5 * 2.0 - 1.25 * 0.4 + 0.1;
        assert!((logits[0] - s).abs() < 1e-15);
        assert!((p[1] - 1.0 / (1.0 + (-s).exp())).abs() < 1e-15);
    }

    #[test]
    fn softmax_sums_to_one() {
        let head = ClassifierParams {
            weight: Matrix::from_fn(4, 4, |r, c| (r as f64 - c as f64) * 0.7),
            bias: Matrix::from_vec(1, 4, vec![0.1, 2.0, -3.0, 0.0]),
        };
        let (_, p) =
            classify(&Matrix::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]), &head, 4).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wrong_length_is_error() {
        let head = ClassifierParams {
            weight: Matrix::zeros(6, 1),
            bias: Matrix::zeros(1, 1),
        };
        assert!(classify(&Matrix::zeros(2, 2), &head, 2).is_err());
    }

    #[test]
    fn sigmoid_extremes_are_finite() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}

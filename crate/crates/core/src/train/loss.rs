use std::str::FromStr;

use crate::error::{Error, Result};

/// Probabilities are clamped to `[ε, 1 − ε]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ClassWeightMode {
    /// Inverse frequency `w_c = N / (K · N_c)`.
    Balanced,
    Uniform,
    Explicit(Vec<f64>),
}

impl FromStr for ClassWeightMode {
    type Err = Error;

    /// `balanced`, `uniform`, or comma-separated weights such as `0.7,1.9`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(ClassWeightMode::Balanced),
            "uniform" => Ok(ClassWeightMode::Uniform),
            list => list
                .split(',')
                .map(|w| w.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(ClassWeightMode::Explicit)
                .map_err(|_| Error::InvalidInput(format!("bad class weights {list:?}"))),
        }
    }
}

/// Per-class weights over `classes` classes. A class absent from `labels`
/// gets weight 0 in balanced mode.
pub fn class_weights(labels: &[u32], classes: usize, mode: &ClassWeightMode) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        let slot = counts
            .get_mut(l as usize)
            .ok_or_else(|| Error::InvalidInput(format!("label {l} >= class count {classes}")))?;
        *slot += 1;
    }
    let distinct = counts.iter().filter(|&&c| c > 0).count();
    if distinct < 2 {
        return Err(Error::SingleClass(distinct));
    }
    let n = labels.len() as f64;
    match mode {
        ClassWeightMode::Balanced => Ok(counts
            .iter()
            .map(|&c| {
                if c == 0 {
                    0.0
                } else {
                    n / (classes as f64 * c as f64)
                }
            })
            .collect()),
        ClassWeightMode::Uniform => Ok(vec![1.0; classes]),
        ClassWeightMode::Explicit(w) => {
            if w.len() != classes || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "need {classes} finite non-negative class weights, got {w:?}"
                )));
            }
            Ok(w.clone())
        }
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `−(1/N) Σ w_{y_i} [y_i ln p_i + (1 − y_i) ln(1 − p_i)]`
pub fn weighted_bce(probs: &[f64], labels: &[u32], weights: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities, {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let w = *weights
            .get(y as usize)
            .ok_or_else(|| Error::InvalidInput(format!("no weight for class {y}")))?;
        let p = clamp(p);
        let y = f64::from(y);
        total += w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    Ok(-total / probs.len() as f64)
}

/// `−(1/N) Σ w_{y_i} ln p_{i, y_i}`, the K-class form of the weighted loss.
pub fn weighted_cross_entropy(probs: &[Vec<f64>], labels: &[u32], weights: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows, {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter().zip(labels) {
        let (p, w) = row
            .get(y as usize)
            .zip(weights.get(y as usize))
            .ok_or_else(|| Error::InvalidInput(format!("label {y} out of range")))?;
        total += w * clamp(*p).ln();
    }
    Ok(-total / probs.len() as f64)
}

/// Binary rows use the weighted BCE on `p = row[1]`; wider rows the
/// weighted categorical form.
pub fn batch_loss(probs: &[Vec<f64>], labels: &[u32], weights: &[f64]) -> Result<f64> {
    if probs.first().is_some_and(|r| r.len() == 2) {
        let p: Vec<f64> = probs.iter().map(|r| r[1]).collect();
        weighted_bce(&p, labels, weights)
    } else {
        weighted_cross_entropy(probs, labels, weights)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn balanced_weights_for_cohort_counts() {
        let mut labels = vec![1u32; 522];
        labels.extend(vec![0u32; 182]);
        let w = class_weights(&labels, 2, &ClassWeightMode::Balanced).unwrap();
        assert!((w[1] - 704.0 / 1044.0).abs() < 1e-15);
        assert!((w[0] - 704.0 / 364.0).abs() < 1e-15);
        assert!((w[1] - 0.6743).abs() < 1e-4);
        assert!((w[0] - 1.9341).abs() < 1e-4);
    }

    #[test]
    fn even_counts_and_single_class() {
        let labels: Vec<u32> = (0..100).map(|i| i % 2).collect();
        assert_eq!(
            class_weights(&labels, 2, &ClassWeightMode::Balanced).unwrap(),
            vec![1.0, 1.0]
        );
        assert!(matches!(
            class_weights(&[1, 1, 1], 2, &ClassWeightMode::Balanced),
            Err(Error::SingleClass(1))
        ));
        assert!(class_weights(&[0, 1], 2, &ClassWeightMode::Explicit(vec![1.0])).is_err());
    }

    #[test]
    fn hand_evaluated_loss() {
        let l = weighted_bce(&[0.9, 0.2], &[1, 0], &[1.0, 1.0]).unwrap();
        let expect = -0.5 * (0.9f64.ln() + 0.8f64.ln());
        assert!((l - expect).abs() < 1e-15);
        assert!((l - 0.16425).abs() < 1e-5);
    }

    #[test]
    fn perfect_prediction_is_clamp_level() {
        let l = weighted_bce(&[1.0, 0.0, 1.0], &[1, 0, 1], &[1.0, 1.0]).unwrap();
        assert!((0.0..1e-11).contains(&l));
    }

    #[test]
    fn length_mismatch() {
        assert!(weighted_bce(&[0.5], &[1, 0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn weight_parsing() {
        assert_eq!(
            "balanced".parse::<ClassWeightMode>().unwrap(),
            ClassWeightMode::Balanced
        );
        assert_eq!(
            "0.5, 2".parse::<ClassWeightMode>().unwrap(),
            ClassWeightMode::Explicit(vec![0.5, 2.0])
        );
        assert!("heavy".parse::<ClassWeightMode>().is_err());
    }

    proptest! {
        #[test]
        fn doubling_weights_doubles_loss(ps in prop::collection::vec((0.001f64..0.999, 0u32..2), 1..50),
                                         w0 in 0.1f64..3.0, w1 in 0.1f64..3.0) {
            let (p, y): (Vec<f64>, Vec<u32>) = ps.into_iter().unzip();
            let a = weighted_bce(&p, &y, &[w0, w1]).unwrap();
            let b = weighted_bce(&p, &y, &[2.0 * w0, 2.0 * w1]).unwrap();
            prop_assert_eq!(b, 2.0 * a);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn binary_rows_match_categorical_form(ps in prop::collection::vec((0.001f64..0.999, 0u32..2), 1..30)) {
            let rows: Vec<Vec<f64>> = ps.iter().map(|&(p, _)| vec![1.0 - p, p]).collect();
            let y: Vec<u32> = ps.iter().map(|&(_, y)| y).collect();
            let a = batch_loss(&rows, &y, &[1.3, 0.7]).unwrap();
            let b = weighted_cross_entropy(&rows, &y, &[1.3, 0.7]).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

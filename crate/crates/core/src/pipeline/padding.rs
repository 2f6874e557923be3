//! Zero-padding and truncation to a fixed sequence length.

use crate::error::{Error, Result};
use crate::io::EmbeddingSequence;
use crate::matrix::Matrix;

pub const DEFAULT_MAX_LEN: usize = 7;

/// Pads `seq` (L×D) with trailing zero rows up to `max_len`, or keeps the
/// first `max_len` rows when longer. Returns the padded matrix and
/// `min(L, max_len)`.
pub fn pad_sequence(seq: &Matrix, max_len: usize) -> Result<(Matrix, usize)> {
    if seq.rows() == 0 {
        return Err(Error::Empty("sequence"));
    }
    if max_len == 0 {
        return Err(Error::InvalidInput("max_len must be >= 1".into()));
    }
    let valid = seq.rows().min(max_len);
    let mut out = Matrix::zeros(max_len, seq.cols());
    out.as_mut_slice()[..valid * seq.cols()].copy_from_slice(&seq.as_slice()[..valid * seq.cols()]);
    Ok((out, valid))
}

/// N sequences padded to a common length; stored per sample as `max_len × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub data: Vec<Matrix>,
    pub valid_lengths: Vec<usize>,
    pub labels: Vec<Option<u32>>,
    pub max_len: usize,
    pub feature_dim: usize,
}

impl PaddedBatch {
    pub fn from_sequences<'a, I>(sequences: I, max_len: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a EmbeddingSequence>,
    {
        let mut batch = PaddedBatch {
            data: Vec::new(),
            valid_lengths: Vec::new(),
            labels: Vec::new(),
            max_len,
            feature_dim: 0,
        };
        for seq in sequences {
            if batch.data.is_empty() {
                batch.feature_dim = seq.feature_dim;
            } else if seq.feature_dim != batch.feature_dim {
                return Err(Error::Dimension(format!(
                    "{} has feature dim {}, batch has {}",
                    seq.video_id, seq.feature_dim, batch.feature_dim
                )));
            }
            let raw = Matrix::from_fn(seq.len(), seq.feature_dim, |t, j| {
                f64::from(seq.frames[t].vector[j])
            });
            let (padded, valid) = pad_sequence(&raw, max_len)?;
            batch.data.push(padded);
            batch.valid_lengths.push(valid);
            batch.labels.push(seq.label);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PaddedBatch {
        PaddedBatch {
            data: indices.iter().map(|&i| self.data[i].clone()).collect(),
            valid_lengths: indices.iter().map(|&i| self.valid_lengths[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            max_len: self.max_len,
            feature_dim: self.feature_dim,
        }
    }

    /// All labels, or an error naming the first unlabeled sample.
    pub fn require_labels(&self) -> Result<Vec<u32>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::InvalidInput(format!("sample {i} is unlabeled"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn seq(l: usize, d: usize) -> Matrix {
        Matrix::from_fn(l, d, |t, j| (t * d + j) as f64 + 0.5)
    }

    #[test]
    fn identity_at_max_len() {
        let s = seq(7, 3);
        let (p, valid) = pad_sequence(&s, 7).unwrap();
        assert_eq!(p, s);
        assert_eq!(valid, 7);
    }

    #[test]
    fn short_sequence_gets_zero_rows() {
        let (p, valid) = pad_sequence(&seq(5, 4), 7).unwrap();
        assert_eq!(valid, 5);
        assert!(p.row(5).iter().chain(p.row(6)).all(|&x| x == 0.0));
        assert_eq!(p.row(4), seq(5, 4).row(4));
    }

    #[test]
    fn long_sequence_keeps_earliest_rows() {
        let s = seq(9, 2);
        let (p, valid) = pad_sequence(&s, 7).unwrap();
        assert_eq!(valid, 7);
        assert_eq!(p.rows(), 7);
        assert_eq!(p.row(6), s.row(6));
    }

    proptest! {
        #[test]
        fn prefix_preserved_tail_zero(l in 1usize..15, max_len in 1usize..12, d in 1usize..5) {
            let s = seq(l, d);
            let (p, valid) = pad_sequence(&s, max_len).unwrap();
            prop_assert_eq!(valid, l.min(max_len));
            prop_assert_eq!(p.rows(), max_len);
            for t in 0..max_len {
                if t < valid {
                    prop_assert_eq!(p.row(t), s.row(t));
                } else {
                    prop_assert!(p.row(t).iter().all(|&x| x == 0.0));
                }
            }
        }
    }
}

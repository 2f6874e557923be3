//! Synthetic labelled sequence datasets with known structure.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::embs::{write_sequence_file, EmbeddingSequence, Frame};
use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};

/// Per-frame class shift for [`SynthPattern::Separable`]; noise is uniform in
/// `[-1, 1]`, so every value carries the sign of its class.
pub const SEPARABLE_SHIFT: f32 = 1.5;
/// Signal amplitude on the first and last frame for [`SynthPattern::LongRange`].
pub const LONG_RANGE_AMPLITUDE: f32 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthPattern {
    /// Class is a constant mean shift in every frame.
    Separable,
    /// Class is whether the first and last frame carry the same sign; all
    /// other frames are pure noise.
    LongRange,
}

impl FromStr for SynthPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separable" => Ok(SynthPattern::Separable),
            "long_range" | "long-range" => Ok(SynthPattern::LongRange),
            _ => Err(Error::InvalidInput(format!(
                "unknown pattern {s:?} (expected separable or long_range)"
            ))),
        }
    }
}

impl fmt::Display for SynthPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthPattern::Separable => "separable",
            SynthPattern::LongRange => "long_range",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    /// Paths are bare file names `<video_id>.embs`.
    pub manifest: DatasetManifest,
    pub sequences: Vec<EmbeddingSequence>,
}

impl SyntheticDataset {
    /// Writes every sequence into `dir` and returns the manifest with paths
    /// rooted there.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.sequences.len());
        for (seq, entry) in self.sequences.iter().zip(&self.manifest.entries) {
            let path = dir.join(&entry.path);
            write_sequence_file(seq, &path)?;
            entries.push(ManifestEntry {
                path,
                ..entry.clone()
            });
        }
        DatasetManifest::new(entries)
    }
}

/// Label `i % 2` for sample `i`, frames 24 h apart starting at 0 h.
pub fn synth_dataset(
    n: usize,
    dim: usize,
    len: usize,
    pattern: SynthPattern,
    seed: u64,
) -> Result<SyntheticDataset> {
    if dim == 0 {
        return Err(Error::InvalidInput("synthetic dim must be >= 1".into()));
    }
    if len < 2 {
        return Err(Error::InvalidInput("synthetic length must be >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.max(1).to_string().len();
    let mut sequences = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u32;
        let frames = match pattern {
            SynthPattern::Separable => {
                let shift = if label == 1 {
                    SEPARABLE_SHIFT
                } else {
                    -SEPARABLE_SHIFT
                };
                (0..len)
                    .map(|_| {
                        (0..dim)
                            .map(|_| shift + rng.random_range(-1.0f32..=1.0))
                            .collect()
                    })
                    .collect::<Vec<Vec<f32>>>()
            }
            SynthPattern::LongRange => {
                let first: f32 = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let last = if label == 1 { first } else { -first };
                (0..len)
                    .map(|t| {
                        let sign = match t {
                            0 => first,
                            t if t == len - 1 => last,
                            _ => 0.0,
                        };
                        (0..dim)
                            .map(|_| {
                                let noise: f32 = rng.sample(StandardNormal);
                                sign * LONG_RANGE_AMPLITUDE + noise
                            })
                            .collect()
                    })
                    .collect()
            }
        };
        let video_id = format!("syn{i:0width$}");
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(t, vector)| Frame {
                timestamp: t as f64 * 24.0,
                vector,
            })
            .collect();
        let seq = EmbeddingSequence::new(video_id.clone(), dim, frames, Some(label))?;
        entries.push(ManifestEntry {
            path: PathBuf::from(format!("{video_id}.embs")),
            video_id,
            label: Some(label),
            n_frames: len,
        });
        sequences.push(seq);
    }
    Ok(SyntheticDataset {
        manifest: DatasetManifest::new(entries)?,
        sequences,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn seq_mean(s: &EmbeddingSequence) -> f64 {
        let total: f64 = s
            .frames
            .iter()
            .flat_map(|f| f.vector.iter())
            .map(|&x| f64::from(x))
            .sum();
        total / (s.len() * s.feature_dim) as f64
    }

    #[test]
    fn empty_and_balanced() {
        let d = synth_dataset(0, 4, 7, SynthPattern::Separable, 1).unwrap();
        assert!(d.sequences.is_empty());
        let d = synth_dataset(100, 4, 7, SynthPattern::LongRange, 1).unwrap();
        let counts = d.manifest.class_counts();
        assert_eq!((counts[&0], counts[&1]), (50, 50));
    }

    #[test]
    fn separable_by_mean_threshold() {
        let d = synth_dataset(301, 16, 7, SynthPattern::Separable, 4).unwrap();
        for s in &d.sequences {
            let predicted = u32::from(seq_mean(s) >= 0.0);
            assert_eq!(Some(predicted), s.label);
        }
    }

    #[test]
    fn long_range_middle_frames_carry_no_class_signal() {
        // label-independent marginals on every single frame: the class mean
        // of any frame's average is close for both classes.
        let d = synth_dataset(2000, 8, 7, SynthPattern::LongRange, 2).unwrap();
        for t in 0..7 {
            let mut sums = [0.0f64; 2];
            for s in &d.sequences {
                let m: f64 = s.frames[t]
                    .vector
                    .iter()
                    .map(|&x| f64::from(x))
                    .sum::<f64>()
                    / 8.0;
                sums[s.label.unwrap() as usize] += m.abs();
            }
            let diff = (sums[0] - sums[1]).abs() / 1000.0;
            assert!(diff < 0.1, "frame {t} differs by {diff}");
        }
        // sign agreement of first and last frame determines the label
        let agree = d
            .sequences
            .iter()
            .filter(|s| {
                let a: f32 = s.frames[0].vector.iter().sum();
                let b: f32 = s.frames[6].vector.iter().sum();
                u32::from(a.signum() == b.signum()) == s.label.unwrap()
            })
            .count();
        assert!(agree as f64 / 2000.0 > 0.9);
    }

    #[test]
    fn deterministic_and_valid_preconditions() {
        let a = synth_dataset(10, 3, 4, SynthPattern::LongRange, 5).unwrap();
        let b = synth_dataset(10, 3, 4, SynthPattern::LongRange, 5).unwrap();
        assert_eq!(a.sequences, b.sequences);
        assert!(synth_dataset(10, 0, 4, SynthPattern::Separable, 1).is_err());
        assert!(synth_dataset(10, 3, 1, SynthPattern::Separable, 1).is_err());
    }

    proptest! {
        #[test]
        fn balance(n in 0usize..200) {
            let d = synth_dataset(n, 1, 2, SynthPattern::Separable, 0).unwrap();
            let ones = d.sequences.iter().filter(|s| s.label == Some(1)).count();
            let zeros = n - ones;
            prop_assert!(ones.abs_diff(zeros) <= 1);
        }
    }
}

//! EMBS: one video's embedding sequence.
//!
//! Little-endian layout:
//!
//! ```text
//! magic     "EMBS"          4 bytes
//! version   u8 = 1
//! id_len    u16, then id_len bytes of UTF-8 video id
//! label     i32             (-1 = unlabeled)
//! dim       u32             D
//! frames    u32             T
//! stamps    f64[T]          hours post-insemination
//! data      f32[T*D]        row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBS_MAGIC: [u8; 4] = *b"EMBS";
pub const EMBS_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Hours post-insemination.
    pub timestamp: f64,
    pub vector: Vec<f32>,
}

/// Ordered per-frame feature vectors of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub video_id: String,
    pub feature_dim: usize,
    pub frames: Vec<Frame>,
    /// `None` for unlabeled sequences (stored as -1).
    pub label: Option<u32>,
}

impl EmbeddingSequence {
    pub fn new(
        video_id: impl Into<String>,
        feature_dim: usize,
        frames: Vec<Frame>,
        label: Option<u32>,
    ) -> Result<Self> {
        let seq = EmbeddingSequence {
            video_id: video_id.into(),
            feature_dim,
            frames,
            label,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSequence(format!("{}: {msg}", self.video_id)));
        if self.video_id.is_empty() {
            return Err(Error::InvalidSequence("empty video id".into()));
        }
        if self.video_id.len() > u16::MAX as usize {
            return bad("video id longer than 65535 bytes".into());
        }
        if self.feature_dim == 0 {
            return bad("feature dimension must be positive".into());
        }
        if self.feature_dim > u32::MAX as usize || self.frames.len() > u32::MAX as usize {
            return bad("dimension exceeds u32 range".into());
        }
        if self.frames.is_empty() {
            return bad("no frames".into());
        }
        if let Some(label) = self.label {
            if label > i32::MAX as u32 {
                return bad(format!("label {label} out of range"));
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for (t, frame) in self.frames.iter().enumerate() {
            if !frame.timestamp.is_finite() || frame.timestamp < 0.0 {
                return bad(format!("frame {t}: invalid timestamp {}", frame.timestamp));
            }
            if frame.timestamp <= prev {
                return bad(format!(
                    "frame {t}: timestamps not strictly increasing ({} after {prev})",
                    frame.timestamp
                ));
            }
            prev = frame.timestamp;
            if frame.vector.len() != self.feature_dim {
                return bad(format!(
                    "frame {t}: vector length {} != feature dim {}",
                    frame.vector.len(),
                    self.feature_dim
                ));
            }
            if frame.vector.iter().any(|x| !x.is_finite()) {
                return bad(format!("frame {t}: non-finite value"));
            }
        }
        Ok(())
    }
}

pub fn encode_sequence(seq: &EmbeddingSequence) -> Result<Vec<u8>> {
    seq.validate()?;
    let t = seq.frames.len();
    let d = seq.feature_dim;
    let mut buf = Vec::with_capacity(19 + seq.video_id.len() + t * 8 + t * d * 4);
    buf.extend_from_slice(&EMBS_MAGIC);
    buf.push(EMBS_VERSION);
    buf.extend_from_slice(&(seq.video_id.len() as u16).to_le_bytes());
    buf.extend_from_slice(seq.video_id.as_bytes());
    let label = seq.label.map_or(-1, |l| l as i32);
    buf.extend_from_slice(&label.to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(t as u32).to_le_bytes());
    for frame in &seq.frames {
        buf.extend_from_slice(&frame.timestamp.to_le_bytes());
    }
    for frame in &seq.frames {
        for x in &frame.vector {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        if end > self.bytes.len() {
            return Err(Error::Truncated(what));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }
}

pub fn decode_sequence(bytes: &[u8]) -> Result<EmbeddingSequence> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.array("magic")?;
    if magic != EMBS_MAGIC {
        return Err(Error::BadMagic {
            expected: EMBS_MAGIC,
            found: magic,
        });
    }
    let version = r.array::<1>("version")?[0];
    if version != EMBS_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let id_len = u16::from_le_bytes(r.array("id length")?) as usize;
    let video_id = std::str::from_utf8(r.take(id_len, "video id")?)
        .map_err(|e| Error::InvalidSequence(format!("video id is not UTF-8: {e}")))?
        .to_owned();
    let label = i32::from_le_bytes(r.array("label")?);
    let label = match label {
        -1 => None,
        l if l >= 0 => Some(l as u32),
        l => return Err(Error::InvalidSequence(format!("{video_id}: bad label {l}"))),
    };
    let d = u32::from_le_bytes(r.array("feature dim")?) as usize;
    let t = u32::from_le_bytes(r.array("frame count")?) as usize;

    let stamps = r.take(
        t.checked_mul(8).ok_or(Error::Truncated("timestamps"))?,
        "timestamps",
    )?;
    let payload_len = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or(Error::Truncated("payload"))?;
    let payload = r.take(payload_len, "payload")?;
    if r.pos != bytes.len() {
        return Err(Error::InvalidSequence(format!(
            "{video_id}: {} trailing bytes",
            bytes.len() - r.pos
        )));
    }

    let frames = stamps
        .chunks_exact(8)
        .enumerate()
        .map(|(i, ts)| Frame {
            timestamp: f64::from_le_bytes(ts.try_into().unwrap()),
            vector: payload[i * d * 4..(i + 1) * d * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        })
        .collect();
    EmbeddingSequence::new(video_id, d, frames, label)
}

/// Validates `seq` before touching the filesystem; nothing is created on error.
pub fn write_sequence_file(seq: &EmbeddingSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_sequence(seq)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_sequence_file(path: impl AsRef<Path>) -> Result<EmbeddingSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sequence(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: usize, d: usize) -> EmbeddingSequence {
        let frames = (0..t)
            .map(|i| Frame {
                timestamp: i as f64 * 24.0,
                vector: (0..d).map(|j| (i * d + j) as f32 * 0.125 - 3.0).collect(),
            })
            .collect();
        EmbeddingSequence::new("vid-01", d, frames, Some(1)).unwrap()
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.embs");
        let seq = sample(4, 5);
        write_sequence_file(&seq, &path).unwrap();
        assert_eq!(read_sequence_file(&path).unwrap(), seq);
    }

    #[test]
    fn payload_size_matches_layout() {
        let seq = sample(7, 1536);
        let bytes = encode_sequence(&seq).unwrap();
        let header = 4 + 1 + 2 + "vid-01".len() + 4 + 4 + 4;
        assert_eq!(bytes.len(), header + 7 * 8 + 7 * 1536 * 4);
    }

    #[test]
    fn mismatched_vector_rejected_without_creating_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.embs");
        let mut seq = sample(3, 4);
        seq.frames[1].vector.pop();
        assert!(matches!(
            write_sequence_file(&seq, &path),
            Err(Error::InvalidSequence(_))
        ));
        assert!(!path.exists());
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_sequence(&sample(2, 3)).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_sequence(&bytes),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn unknown_version() {
        let mut bytes = encode_sequence(&sample(2, 3)).unwrap();
        bytes[4] = 2;
        assert!(matches!(
            decode_sequence(&bytes),
            Err(Error::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_sequence(&sample(3, 4)).unwrap();
        for cut in [3, 10, bytes.len() - 1, bytes.len() - 17] {
            assert!(
                matches!(decode_sequence(&bytes[..cut]), Err(Error::Truncated(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn non_increasing_timestamps_rejected_on_read() {
        let mut bytes = encode_sequence(&sample(3, 2)).unwrap();
        let stamps_at = 4 + 1 + 2 + 6 + 4 + 4 + 4;
        bytes[stamps_at + 8..stamps_at + 16].copy_from_slice(&0.0f64.to_le_bytes());
        assert!(matches!(
            decode_sequence(&bytes),
            Err(Error::InvalidSequence(_))
        ));
    }

    #[test]
    fn unlabeled_is_minus_one() {
        let mut seq = sample(1, 1);
        seq.label = None;
        let bytes = encode_sequence(&seq).unwrap();
        let at = 4 + 1 + 2 + 6;
        assert_eq!(
            i32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()),
            -1
        );
        assert_eq!(decode_sequence(&bytes).unwrap().label, None);
    }
}

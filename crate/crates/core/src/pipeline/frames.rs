//! Daily frame selection from a densely sampled time-lapse video.

use crate::error::{Error, Result};

pub const DEFAULT_DELTA_T_HOURS: f64 = 24.0;
pub const DEFAULT_MAX_FRAMES: usize = 7;

/// Available frame timestamps of one video, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameIndex(Vec<f64>);

impl FrameIndex {
    pub fn new(timestamps: Vec<f64>) -> Result<Self> {
        if timestamps.is_empty() {
            return Err(Error::Empty("frame index"));
        }
        if timestamps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("non-finite frame timestamp".into()));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "frame timestamps must be strictly increasing".into(),
            ));
        }
        Ok(FrameIndex(timestamps))
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSelection {
    pub timestamps: Vec<f64>,
    /// Positions of the selected frames in the source index.
    pub indices: Vec<usize>,
    pub max_frames: usize,
    pub delta_t: f64,
}

/// Picks the first frame, then for each target `t0 + k·Δt` (k = 1…m_max−2)
/// the earliest frame at or after the target that precedes the final frame,
/// and finally the last frame. Duplicates collapse, so the result may hold
/// fewer than `m_max` frames.
pub fn select_frames(
    index: &FrameIndex,
    delta_t: f64,
    max_frames: usize,
) -> Result<FrameSelection> {
    if !(delta_t > 0.0 && delta_t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "delta_t must be positive, got {delta_t}"
        )));
    }
    if max_frames < 2 {
        return Err(Error::InvalidInput(format!(
            "max_frames must be at least 2, got {max_frames}"
        )));
    }
    let ts = index.timestamps();
    let last = ts.len() - 1;
    let mut indices = vec![0usize];
    if last > 0 {
        let mut from = 1;
        for k in 1..max_frames - 1 {
            let target = ts[0] + k as f64 * delta_t;
            // earliest frame >= target, searching only the interior frames
            let pos = from + ts[from..last].partition_point(|&t| t < target);
            if pos >= last {
                break;
            }
            if indices.last() != Some(&pos) {
                indices.push(pos);
            }
            from = pos;
        }
        indices.push(last);
    }
    Ok(FrameSelection {
        timestamps: indices.iter().map(|&i| ts[i]).collect(),
        indices,
        max_frames,
        delta_t,
    })
}

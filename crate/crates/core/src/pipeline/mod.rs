//! Raw video metadata to model-ready inputs.

mod cohort;
mod frames;
mod padding;
mod stages;

pub use cohort::{cohort_blastulation_curve, parse_grid, CohortMember, CurvePoint};
pub use frames::{
    select_frames, FrameIndex, FrameSelection, DEFAULT_DELTA_T_HOURS, DEFAULT_MAX_FRAMES,
};
pub use padding::{pad_sequence, PaddedBatch, DEFAULT_MAX_LEN};
pub use stages::{derive_label, parse_annotations, StageAnnotation, StageCode, VideoAnnotations};

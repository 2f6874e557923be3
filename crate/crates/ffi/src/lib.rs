//! C ABI over `seqfuse`.
//!
//! Every fallible call returns an [`SfStatus`]; on failure a description is
//! available from [`sf_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_load` / `*_read` / `*_new` and released with
//! the matching `*_free`. Panics never cross the boundary; they surface as
//! `SF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use seqfuse::eval::roc_auc;
use seqfuse::io::{read_sequence_file, write_sequence_file, EmbeddingSequence, Frame};
use seqfuse::model::{load_model, predict, ModelParams};
use seqfuse::pipeline::{derive_label, select_frames, FrameIndex, StageAnnotation, StageCode};
use seqfuse::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed `.embs` or model file.
    Format = 4,
    Dimension = 5,
    /// Caller buffer too small; the needed size is reported where possible.
    BufferTooSmall = 6,
    Panic = 7,
}

/// Loaded model, immutable after loading.
pub struct SfModel(ModelParams);

/// One embedding sequence.
pub struct SfSequence(EmbeddingSequence);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> SfStatus {
    match err {
        Error::Io { .. } => SfStatus::Io,
        Error::BadMagic { .. }
        | Error::UnsupportedVersion(_)
        | Error::Truncated(_)
        | Error::InvalidSequence(_)
        | Error::Csv(_) => SfStatus::Format,
        Error::Dimension(_) => SfStatus::Dimension,
        _ => SfStatus::InvalidArgument,
    }
}

struct Fail(SfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SfStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any failure or panic.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SfStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SfStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn too_small(what: &str, need: usize, have: usize) -> Fail {
    Fail(
        SfStatus::BufferTooSmall,
        format!("{what} needs {need} elements, buffer holds {have}"),
    )
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model file. On success `*out` owns a handle for `sf_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_model_load(path: *const c_char, out: *mut *mut SfModel) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = load_model(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SfModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `sf_model_load` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_model_free(model: *mut SfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input width, padded length and class count of a model. Any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_model_info(
    model: *const SfModel,
    input_dim: *mut u32,
    max_len: *mut u32,
    classes: *mut u32,
) -> SfStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        for (p, v) in [
            (input_dim, m.arch.input_dim),
            (max_len, m.arch.max_len),
            (classes, m.arch.classes),
        ] {
            if !p.is_null() {
                *p = v as u32;
            }
        }
        Ok(())
    })
}

/// Eval-mode prediction for one sequence.
///
/// `probs` receives one probability per class and must hold at least the
/// class count. `importance` (may be null when `importance_len` is 0)
/// receives the per-position attention importance, `max_len` values; it is
/// zero-filled for models without attention.
///
/// # Safety
/// Handles must be live; buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn sf_model_predict(
    model: *const SfModel,
    sequence: *const SfSequence,
    threshold: f64,
    probs: *mut f64,
    probs_len: usize,
    class_out: *mut u32,
    importance: *mut f64,
    importance_len: usize,
) -> SfStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let s = &sequence.as_ref().ok_or_else(|| null("sequence"))?.0;
        if class_out.is_null() {
            return Err(null("class_out"));
        }
        let probs = slice_out(probs, probs_len, "probs")?;
        let importance = slice_out(importance, importance_len, "importance")?;
        if probs.len() < m.arch.classes {
            return Err(too_small("probs", m.arch.classes, probs.len()));
        }
        if !importance.is_empty() && importance.len() < m.arch.max_len {
            return Err(too_small("importance", m.arch.max_len, importance.len()));
        }
        let pred = predict(m, std::slice::from_ref(s), threshold)?.remove(0);
        probs[..pred.probs.len()].copy_from_slice(&pred.probs);
        *class_out = pred.class;
        if !importance.is_empty() {
            importance.fill(0.0);
            if let Some(imp) = &pred.importance {
                importance[..imp.len()].copy_from_slice(imp);
            }
        }
        Ok(())
    })
}

/// Reads an `.embs` file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_read(
    path: *const c_char,
    out: *mut *mut SfSequence,
) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let seq = read_sequence_file(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SfSequence(seq)));
        Ok(())
    })
}

/// Builds a sequence from `n_frames` timestamps and a row-major
/// `n_frames × dim` payload. `label` −1 means unlabelled.
///
/// # Safety
/// `video_id` must be NUL-terminated; arrays must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_new(
    video_id: *const c_char,
    dim: u32,
    n_frames: u32,
    timestamps: *const f64,
    data: *const f32,
    label: i32,
    out: *mut *mut SfSequence,
) -> SfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if video_id.is_null() {
            return Err(null("video_id"));
        }
        let id = CStr::from_ptr(video_id)
            .to_str()
            .map_err(|_| Fail(SfStatus::InvalidArgument, "video_id is not UTF-8".into()))?;
        let (d, t) = (dim as usize, n_frames as usize);
        let ts = slice_arg(timestamps, t, "timestamps")?;
        let values = slice_arg(data, t * d, "data")?;
        let label = match label {
            -1 => None,
            l if l >= 0 => Some(l as u32),
            l => return Err(Fail(SfStatus::InvalidArgument, format!("label {l}"))),
        };
        let frames = ts
            .iter()
            .enumerate()
            .map(|(i, &timestamp)| Frame {
                timestamp,
                vector: values[i * d..(i + 1) * d].to_vec(),
            })
            .collect();
        let seq = EmbeddingSequence::new(id.to_owned(), d, frames, label)?;
        *out = Box::into_raw(Box::new(SfSequence(seq)));
        Ok(())
    })
}

/// # Safety
/// `sequence` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_write(
    sequence: *const SfSequence,
    path: *const c_char,
) -> SfStatus {
    guard(|| {
        let s = &sequence.as_ref().ok_or_else(|| null("sequence"))?.0;
        write_sequence_file(s, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `sequence` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_free(sequence: *mut SfSequence) {
    if !sequence.is_null() {
        drop(Box::from_raw(sequence));
    }
}

/// Frame count, or 0 for a null handle.
///
/// # Safety
/// `sequence` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_len(sequence: *const SfSequence) -> usize {
    sequence.as_ref().map_or(0, |s| s.0.len())
}

/// Feature width, or 0 for a null handle.
///
/// # Safety
/// `sequence` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_dim(sequence: *const SfSequence) -> usize {
    sequence.as_ref().map_or(0, |s| s.0.feature_dim)
}

/// Class label, −1 when unlabelled or for a null handle.
///
/// # Safety
/// `sequence` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_label(sequence: *const SfSequence) -> i32 {
    sequence
        .as_ref()
        .and_then(|s| s.0.label)
        .map_or(-1, |l| l as i32)
}

/// Copies the video id with a trailing NUL. `*needed` (if non-null) gets
/// the required size including the NUL, also when the buffer is too small.
///
/// # Safety
/// `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_video_id(
    sequence: *const SfSequence,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> SfStatus {
    guard(|| {
        let s = &sequence.as_ref().ok_or_else(|| null("sequence"))?.0;
        let bytes = s.video_id.as_bytes();
        if !needed.is_null() {
            *needed = bytes.len() + 1;
        }
        let out = slice_out(buf.cast::<u8>(), len, "buf")?;
        if out.len() <= bytes.len() {
            return Err(too_small("video_id", bytes.len() + 1, out.len()));
        }
        out[..bytes.len()].copy_from_slice(bytes);
        out[bytes.len()] = 0;
        Ok(())
    })
}

/// Copies all frame timestamps; `len` must be at least the frame count.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_timestamps(
    sequence: *const SfSequence,
    out: *mut f64,
    len: usize,
) -> SfStatus {
    guard(|| {
        let s = &sequence.as_ref().ok_or_else(|| null("sequence"))?.0;
        let out = slice_out(out, len, "out")?;
        if out.len() < s.len() {
            return Err(too_small("timestamps", s.len(), out.len()));
        }
        for (o, f) in out.iter_mut().zip(&s.frames) {
            *o = f.timestamp;
        }
        Ok(())
    })
}

/// Copies frame `index`'s vector; `len` must be at least the feature width.
///
/// # Safety
/// `out` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn sf_sequence_frame(
    sequence: *const SfSequence,
    index: usize,
    out: *mut f32,
    len: usize,
) -> SfStatus {
    guard(|| {
        let s = &sequence.as_ref().ok_or_else(|| null("sequence"))?.0;
        let frame = s.frames.get(index).ok_or_else(|| {
            Fail(
                SfStatus::InvalidArgument,
                format!("frame {index} out of range ({} frames)", s.len()),
            )
        })?;
        let out = slice_out(out, len, "out")?;
        if out.len() < frame.vector.len() {
            return Err(too_small("frame", frame.vector.len(), out.len()));
        }
        out[..frame.vector.len()].copy_from_slice(&frame.vector);
        Ok(())
    })
}

/// Daily frame selection over `n` strictly increasing timestamps. Writes at
/// most `max_frames` source positions into `indices` (capacity
/// `max_frames`) and their count into `*n_selected`.
///
/// # Safety
/// `timestamps` must hold `n` doubles and `indices` `max_frames` entries.
#[no_mangle]
pub unsafe extern "C" fn sf_select_frames(
    timestamps: *const f64,
    n: usize,
    delta_t: f64,
    max_frames: usize,
    indices: *mut usize,
    n_selected: *mut usize,
) -> SfStatus {
    guard(|| {
        if n_selected.is_null() {
            return Err(null("n_selected"));
        }
        let ts = slice_arg(timestamps, n, "timestamps")?;
        let sel = select_frames(&FrameIndex::new(ts.to_vec())?, delta_t, max_frames)?;
        let out = slice_out(indices, max_frames, "indices")?;
        out[..sel.indices.len()].copy_from_slice(&sel.indices);
        *n_selected = sel.indices.len();
        Ok(())
    })
}

/// Blastocyst label (1) or not (0) from `n` stage codes such as `"tB"`
/// with their hours.
///
/// # Safety
/// `stage_codes` must hold `n` NUL-terminated strings and `hours` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_derive_label(
    stage_codes: *const *const c_char,
    hours: *const f64,
    n: usize,
    label: *mut u32,
) -> SfStatus {
    guard(|| {
        if label.is_null() {
            return Err(null("label"));
        }
        let codes = slice_arg(stage_codes, n, "stage_codes")?;
        let hours = slice_arg(hours, n, "hours")?;
        let mut annotations = Vec::with_capacity(n);
        for (&code, &h) in codes.iter().zip(hours) {
            if code.is_null() {
                return Err(null("stage code"));
            }
            let stage: StageCode = CStr::from_ptr(code)
                .to_str()
                .map_err(|_| Fail(SfStatus::InvalidArgument, "stage code is not UTF-8".into()))?
                .parse()?;
            annotations.push(StageAnnotation::new(stage, h)?);
        }
        *label = derive_label(&annotations)?;
        Ok(())
    })
}

/// Trapezoidal ROC AUC of `n` scores against 0/1 labels.
///
/// # Safety
/// `scores` and `labels` must hold `n` entries; `auc` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_roc_auc(
    scores: *const f64,
    labels: *const u32,
    n: usize,
    auc: *mut f64,
) -> SfStatus {
    guard(|| {
        if auc.is_null() {
            return Err(null("auc"));
        }
        let curve = roc_auc(
            slice_arg(scores, n, "scores")?,
            slice_arg(labels, n, "labels")?,
        )?;
        *auc = curve.auc;
        Ok(())
    })
}

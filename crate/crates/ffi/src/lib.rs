//! C ABI over the decoder runtime.
//!
//! Every fallible call returns an [`RrntStatus`]; on failure the message is
//! kept per thread and read back with [`rrnt_last_error`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use reduced_rnnt::archive::{Dtype, ModelArchive};
use reduced_rnnt::decode::{beam_decode, greedy_decode, EncoderFrames, NBestEntry};
use reduced_rnnt::decoder::{DecoderConfig, DecoderModel};
use reduced_rnnt::math::Matrix;
use reduced_rnnt::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RrntStatus {
    Ok = 0,
    Shape = 1,
    Domain = 2,
    Config = 3,
    Capacity = 4,
    State = 5,
    Divergence = 6,
    Schema = 7,
    UnsupportedFormat = 8,
    Corrupt = 9,
    Validation = 10,
    Io = 11,
    NullPointer = 12,
    InvalidUtf8 = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

impl From<&Error> for RrntStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape(_) => RrntStatus::Shape,
            Error::Domain(_) => RrntStatus::Domain,
            Error::Config(_) => RrntStatus::Config,
            Error::Capacity(_) => RrntStatus::Capacity,
            Error::State(_) => RrntStatus::State,
            Error::Divergence(_) => RrntStatus::Divergence,
            Error::Schema { .. } => RrntStatus::Schema,
            Error::UnsupportedFormat(_) => RrntStatus::UnsupportedFormat,
            Error::Corrupt(_) => RrntStatus::Corrupt,
            Error::Validation(_) => RrntStatus::Validation,
            Error::Io { .. } => RrntStatus::Io,
        }
    }
}

/// Opaque decoder handle.
pub struct RrntModel {
    archive: ModelArchive,
    model: DecoderModel,
}

/// Opaque n-best list returned by beam search.
pub struct RrntNBest {
    entries: Vec<NBestEntry>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(RrntStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(RrntStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RrntStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RrntStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            RrntStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(RrntStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(RrntStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn model_arg<'a>(p: *const RrntModel) -> Result<&'a RrntModel, Fail> {
    p.as_ref().ok_or_else(|| null("model"))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn boxed(archive: ModelArchive) -> Result<*mut RrntModel, Fail> {
    let model = DecoderModel::new(archive.config.clone(), archive.weights.clone())?;
    Ok(Box::into_raw(Box::new(RrntModel { archive, model })))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rrnt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a model archive from `path`.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rrnt_model_load(path: *const c_char, out: *mut *mut RrntModel) -> RrntStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        *out = boxed(ModelArchive::load(Path::new(path))?)?;
        Ok(())
    })
}

/// Creates a randomly initialised decoder. `config_json` is either a preset
/// name such as `ReducedSmall` or a JSON decoder config object.
///
/// # Safety
/// `config_json` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn rrnt_model_init(config_json: *const c_char, seed: u64, out: *mut *mut RrntModel) -> RrntStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(config_json, "config_json")?;
        let cfg = if text.trim_start().starts_with('{') {
            let cfg: DecoderConfig = serde_json::from_str(text)
                .map_err(|e| Fail(RrntStatus::Schema, format!("decoder config: {e}")))?;
            cfg.validate()?;
            cfg
        } else {
            DecoderConfig::preset(text.trim())?
        };
        let model = DecoderModel::init(cfg, seed)?;
        let mut archive = ModelArchive::new(model.config.clone(), model.weights)?;
        archive.seed = Some(seed);
        *out = boxed(archive)?;
        Ok(())
    })
}

/// Writes the model to `path`; `use_f32` stores 32-bit floats.
///
/// # Safety
/// `model` must come from this library and `path` be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn rrnt_model_save(model: *const RrntModel, path: *const c_char, use_f32: bool) -> RrntStatus {
    guard(|| {
        let m = model_arg(model)?;
        let path = str_arg(path, "path")?;
        m.archive.save(Path::new(path), if use_f32 { Dtype::F32 } else { Dtype::F64 })?;
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rrnt_model_free(model: *mut RrntModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trainable plus frozen parameter count, excluding the pad row.
///
/// # Safety
/// `model` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn rrnt_model_param_count(model: *const RrntModel, out: *mut u64) -> RrntStatus {
    guard(|| {
        let m = model_arg(model)?;
        *out_arg(out, "out")? = m.model.param_count().total as u64;
        Ok(())
    })
}

/// Width of the encoder frames the model consumes.
///
/// # Safety
/// `model` must come from this library or be NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn rrnt_model_encoder_dim(model: *const RrntModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.encoder_dim)
}

/// Number of output labels, blank excluded.
///
/// # Safety
/// `model` must come from this library or be NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn rrnt_model_vocab_size(model: *const RrntModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.vocab_size)
}

unsafe fn frames_arg(frames: *const f64, num_frames: usize, dim: usize) -> Result<EncoderFrames, Fail> {
    let len = num_frames.checked_mul(dim).ok_or_else(|| Fail(RrntStatus::Shape, "frame buffer too large".into()))?;
    let data = if len == 0 {
        Vec::new()
    } else if frames.is_null() {
        return Err(null("frames"));
    } else {
        std::slice::from_raw_parts(frames, len).to_vec()
    };
    Ok(EncoderFrames::new(Matrix::from_vec(num_frames, dim, data)?)?)
}

unsafe fn write_labels(labels: &[usize], out: *mut u32, cap: usize, len: *mut usize) -> Result<(), Fail> {
    *out_arg(len, "labels_len")? = labels.len();
    if labels.len() > cap {
        return Err(Fail(RrntStatus::BufferTooSmall, format!("{} labels do not fit in {cap}", labels.len())));
    }
    if !labels.is_empty() {
        if out.is_null() {
            return Err(null("labels"));
        }
        for (i, &l) in labels.iter().enumerate() {
            *out.add(i) = l as u32;
        }
    }
    Ok(())
}

/// Greedy search over `num_frames × dim` row-major encoder frames.
/// `labels_len` always receives the transcript length; when it exceeds
/// `labels_cap` the call fails with `RRNT_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// `frames` must hold `num_frames * dim` values, `labels` `labels_cap` slots.
#[no_mangle]
pub unsafe extern "C" fn rrnt_decode_greedy(
    model: *const RrntModel,
    frames: *const f64,
    num_frames: usize,
    dim: usize,
    labels: *mut u32,
    labels_cap: usize,
    labels_len: *mut usize,
    log_prob: *mut f64,
) -> RrntStatus {
    guard(|| {
        let m = model_arg(model)?;
        let enc = frames_arg(frames, num_frames, dim)?;
        let out = greedy_decode(&m.model, &enc)?;
        write_labels(&out.labels, labels, labels_cap, labels_len)?;
        if let Some(lp) = log_prob.as_mut() {
            *lp = out.log_prob;
        }
        Ok(())
    })
}

/// Beam search; the n-best list is sorted by descending log-probability.
///
/// # Safety
/// `frames` must hold `num_frames * dim` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn rrnt_decode_beam(
    model: *const RrntModel,
    frames: *const f64,
    num_frames: usize,
    dim: usize,
    beam_width: usize,
    out: *mut *mut RrntNBest,
) -> RrntStatus {
    guard(|| {
        let m = model_arg(model)?;
        let out = out_arg(out, "out")?;
        let enc = frames_arg(frames, num_frames, dim)?;
        let entries = beam_decode(&m.model, &enc, beam_width)?;
        *out = Box::into_raw(Box::new(RrntNBest { entries }));
        Ok(())
    })
}

/// Number of hypotheses in the list.
///
/// # Safety
/// `nbest` must come from this library or be NULL (returns 0).
#[no_mangle]
pub unsafe extern "C" fn rrnt_nbest_len(nbest: *const RrntNBest) -> usize {
    nbest.as_ref().map_or(0, |n| n.entries.len())
}

/// Copies hypothesis `index` out of the list, with the same buffer protocol
/// as `rrnt_decode_greedy`.
///
/// # Safety
/// `nbest` must come from this library and `labels` hold `labels_cap` slots.
#[no_mangle]
pub unsafe extern "C" fn rrnt_nbest_get(
    nbest: *const RrntNBest,
    index: usize,
    labels: *mut u32,
    labels_cap: usize,
    labels_len: *mut usize,
    log_prob: *mut f64,
) -> RrntStatus {
    guard(|| {
        let n = nbest.as_ref().ok_or_else(|| null("nbest"))?;
        let e = n
            .entries
            .get(index)
            .ok_or_else(|| Fail(RrntStatus::Shape, format!("index {index} out of {} hypotheses", n.entries.len())))?;
        write_labels(&e.labels, labels, labels_cap, labels_len)?;
        if let Some(lp) = log_prob.as_mut() {
            *lp = e.log_prob;
        }
        Ok(())
    })
}

/// Releases an n-best list. NULL is ignored.
///
/// # Safety
/// `nbest` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rrnt_nbest_free(nbest: *mut RrntNBest) {
    if !nbest.is_null() {
        drop(Box::from_raw(nbest));
    }
}

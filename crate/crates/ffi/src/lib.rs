//! C interface to neoseize.
//!
//! Models and records are opaque handles created and released by this
//! library. Every function returns an [`NszStatus`]; on failure
//! [`nsz_last_error`] describes the problem. Panics never cross the
//! boundary: they are reported as `NSZ_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use neoseize::autograd::Tensor;
use neoseize::eeg_data::{load_record, EegRecord};
use neoseize::fcn::{count_params, load_model, receptive_field, save_model, FcnConfig, FcnModel};
use neoseize::metrics::auc_pair;
use neoseize::postproc::{postprocess_chain, PostprocConfig};
use neoseize::preprocess::{preprocess_record, PreprocessConfig};
use neoseize::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NszStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    /// Scores with a single label class; AUC undefined.
    SingleClass = 6,
    /// Numerical or model-state failure.
    Numeric = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NszMode {
    Fcn1d = 0,
    Fcn2d = 1,
}

/// Post-processing switches and parameters; see [`nsz_postproc_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NszPostproc {
    pub fuse: bool,
    pub smooth: bool,
    pub smooth_window_s: f64,
    pub adapt: bool,
    pub adapt_time_constant_s: f64,
    pub adapt_beta: f64,
    pub collar: bool,
    pub collar_s: f64,
}

/// Opaque trained or freshly initialised network.
pub struct NszModel(FcnModel);

/// Opaque multichannel recording.
pub struct NszRecord(EegRecord);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(NszStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => NszStatus::Io,
            Error::Format(_) | Error::NonFinite { .. } | Error::Annotation { .. } => NszStatus::Format,
            Error::Shape(_) | Error::TooShort(_) => NszStatus::Shape,
            Error::Config(_) | Error::InvalidArgument(_) => NszStatus::InvalidArgument,
            Error::SingleClass => NszStatus::SingleClass,
            Error::MissingStatistics | Error::BackwardTwice | Error::NonFiniteLoss { .. } => NszStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: NszStatus, msg: &str) -> Result<T, Failure> {
    Err(Failure(status, msg.to_string()))
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NszStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            NszStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(panic) => {
            let what = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal error: {what}"));
            NszStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(NszStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(NszStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(NszStatus::NullPointer, &format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(NszStatus::NullPointer, &format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return fail(NszStatus::NullPointer, "path is null");
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => fail(NszStatus::InvalidArgument, "path is not valid UTF-8"),
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn nsz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nsz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn config(mode: NszMode, n_blocks: usize, pool_stride: usize, n_channels: usize) -> FcnConfig {
    match mode {
        NszMode::Fcn1d => FcnConfig::fcn1d(n_blocks, pool_stride),
        NszMode::Fcn2d => FcnConfig::fcn2d(n_blocks, pool_stride, n_channels),
    }
}

/// Receptive field in input samples (capped at the 256-sample window) of a
/// default-width network.
///
/// # Safety
/// `out` must be null or point to writable memory for one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn nsz_receptive_field(n_blocks: usize, pool_stride: usize, out: *mut usize) -> NszStatus {
    guard(|| {
        let cfg = FcnConfig::fcn1d(n_blocks, pool_stride);
        cfg.validate()?;
        *out_ref(out, "out")? = receptive_field(&cfg);
        Ok(())
    })
}

/// Trainable parameter count of a default-width network.
///
/// # Safety
/// `out` must be null or point to writable memory for one `size_t`.
#[no_mangle]
pub unsafe extern "C" fn nsz_param_count(n_blocks: usize, pool_stride: usize, out: *mut usize) -> NszStatus {
    guard(|| {
        let cfg = FcnConfig::fcn1d(n_blocks, pool_stride);
        cfg.validate()?;
        *out_ref(out, "out")? = count_params(&cfg);
        Ok(())
    })
}

/// Creates a freshly initialised network. `n_channels` is ignored for
/// `NSZ_MODE_FCN1D`. Release with [`nsz_model_free`].
///
/// # Safety
/// `out` must be null or point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn nsz_model_build(
    mode: NszMode,
    n_blocks: usize,
    pool_stride: usize,
    n_channels: usize,
    seed: u64,
    out: *mut *mut NszModel,
) -> NszStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = FcnModel::build(FcnConfig { seed, ..config(mode, n_blocks, pool_stride, n_channels) })?;
        *out = Box::into_raw(Box::new(NszModel(model)));
        Ok(())
    })
}

/// Loads a model file. Release with [`nsz_model_free`].
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn nsz_model_load(path_: *const c_char, out: *mut *mut NszModel) -> NszStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let model = load_model(path(path_)?)?;
        *out = Box::into_raw(Box::new(NszModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle; `path` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nsz_model_save(model: *const NszModel, path_: *const c_char) -> NszStatus {
    guard(|| {
        let m = deref(model, "model")?;
        save_model(&m.0, path(path_)?)?;
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsz_model_free(model: *mut NszModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input shape of one window: channels and samples per channel.
///
/// # Safety
/// `model` must be null or a live handle; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn nsz_model_input_shape(model: *const NszModel, channels: *mut usize, samples: *mut usize) -> NszStatus {
    guard(|| {
        let m = deref(model, "model")?;
        *out_ref(channels, "channels")? = m.0.config().n_input_channels;
        *out_ref(samples, "samples")? = m.0.config().input_len;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn nsz_model_receptive_field(model: *const NszModel, out: *mut usize) -> NszStatus {
    guard(|| {
        let m = deref(model, "model")?;
        *out_ref(out, "out")? = receptive_field(m.0.config());
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn nsz_model_param_count(model: *const NszModel, out: *mut usize) -> NszStatus {
    guard(|| {
        let m = deref(model, "model")?;
        *out_ref(out, "out")? = m.0.n_params();
        Ok(())
    })
}

/// Seizure probability of `n_windows` windows laid out as
/// `[n_windows][channels][samples]`; writes `n_windows` values.
///
/// # Safety
/// `windows` must hold `n_windows * channels * samples` doubles and `out`
/// `n_windows` doubles.
#[no_mangle]
pub unsafe extern "C" fn nsz_model_predict(
    model: *const NszModel,
    windows: *const f64,
    n_windows: usize,
    out: *mut f64,
) -> NszStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let cfg = m.0.config();
        let per = cfg.n_input_channels * cfg.input_len;
        let n = n_windows.checked_mul(per).ok_or_else(|| Failure(NszStatus::InvalidArgument, "size overflow".into()))?;
        let x = slice(windows, n, "windows")?;
        let dst = slice_mut(out, n_windows, "out")?;
        dst.copy_from_slice(&m.0.predict(x)?);
        Ok(())
    })
}

/// Per-sample seizure probability of one window `[channels][samples]`;
/// writes `channels * samples` values.
///
/// # Safety
/// `window` and `out` must each hold `channels * samples` doubles.
#[no_mangle]
pub unsafe extern "C" fn nsz_model_heatmap(model: *const NszModel, window: *const f64, out: *mut f64) -> NszStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let cfg = m.0.config();
        let n = cfg.n_input_channels * cfg.input_len;
        let x = Tensor::new(vec![cfg.n_input_channels, cfg.input_len], slice(window, n, "window")?.to_vec())?;
        let rows = m.0.heatmap(&x)?;
        let dst = slice_mut(out, n, "out")?;
        for (d, v) in dst.iter_mut().zip(rows.into_iter().flatten()) {
            *d = v;
        }
        Ok(())
    })
}

/// AUC and AUC90 in percent. `labels` are 0 or nonzero.
///
/// # Safety
/// `scores` and `labels` must hold `n` elements; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn nsz_auc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    auc: *mut f64,
    auc90: *mut f64,
) -> NszStatus {
    guard(|| {
        let s = slice(scores, n, "scores")?;
        let l: Vec<bool> = slice(labels, n, "labels")?.iter().map(|&v| v != 0).collect();
        let auc = out_ref(auc, "auc")?;
        let auc90 = out_ref(auc90, "auc90")?;
        (*auc, *auc90) = auc_pair(s, &l)?;
        Ok(())
    })
}

/// Default post-processing: channel max, 60 s moving average, 30 s collar.
#[no_mangle]
pub extern "C" fn nsz_postproc_default() -> NszPostproc {
    let d = PostprocConfig::default();
    NszPostproc {
        fuse: d.fuse,
        smooth: d.smooth,
        smooth_window_s: d.smooth_window_s,
        adapt: d.adapt,
        adapt_time_constant_s: d.adapt_time_constant_s,
        adapt_beta: d.adapt_beta,
        collar: d.collar,
        collar_s: d.collar_s,
    }
}

/// Post-processes per-channel probabilities `[n_channels][n_epochs]`
/// sampled every `period_s` seconds into one trace of `n_epochs` values.
/// With `fuse` off, `n_channels` must be 1.
///
/// # Safety
/// `probs` must hold `n_channels * n_epochs` doubles, `out` `n_epochs`,
/// and `config` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn nsz_postprocess(
    probs: *const f64,
    n_channels: usize,
    n_epochs: usize,
    period_s: f64,
    config: *const NszPostproc,
    out: *mut f64,
) -> NszStatus {
    guard(|| {
        let c = deref(config, "config")?;
        if n_channels == 0 || n_epochs == 0 {
            return fail(NszStatus::InvalidArgument, "need at least one channel and one epoch");
        }
        let x = slice(probs, n_channels * n_epochs, "probs")?;
        let rows: Vec<Vec<f64>> = x.chunks(n_epochs).map(<[f64]>::to_vec).collect();
        let cfg = PostprocConfig {
            fuse: c.fuse,
            smooth: c.smooth,
            smooth_window_s: c.smooth_window_s,
            adapt: c.adapt,
            adapt_time_constant_s: c.adapt_time_constant_s,
            adapt_beta: c.adapt_beta,
            collar: c.collar,
            collar_s: c.collar_s,
        };
        let trace = postprocess_chain(&rows, period_s, 0.0, &cfg)?;
        slice_mut(out, n_epochs, "out")?.copy_from_slice(trace.values());
        Ok(())
    })
}

/// Loads a NEEG or CSV record. Release with [`nsz_record_free`].
///
/// # Safety
/// `path` must be null or NUL-terminated; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn nsz_record_load(path_: *const c_char, out: *mut *mut NszRecord) -> NszStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let rec = load_record(path(path_)?)?;
        *out = Box::into_raw(Box::new(NszRecord(rec)));
        Ok(())
    })
}

/// Band-pass filters and resamples to 32 Hz into a new record.
///
/// # Safety
/// `record` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn nsz_record_preprocess(record: *const NszRecord, out: *mut *mut NszRecord) -> NszStatus {
    guard(|| {
        let r = deref(record, "record")?;
        let out = out_ref(out, "out")?;
        let p = preprocess_record(&r.0, &PreprocessConfig::default())?;
        *out = Box::into_raw(Box::new(NszRecord(p)));
        Ok(())
    })
}

/// Releases a record; null is ignored.
///
/// # Safety
/// `record` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nsz_record_free(record: *mut NszRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Channel count, samples per channel and sample rate.
///
/// # Safety
/// `record` must be null or a live handle; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn nsz_record_shape(
    record: *const NszRecord,
    n_channels: *mut usize,
    n_samples: *mut usize,
    sample_rate: *mut f64,
) -> NszStatus {
    guard(|| {
        let r = deref(record, "record")?;
        *out_ref(n_channels, "n_channels")? = r.0.n_channels();
        *out_ref(n_samples, "n_samples")? = r.0.n_samples();
        *out_ref(sample_rate, "sample_rate")? = r.0.sample_rate();
        Ok(())
    })
}

/// Copies channel `channel` (microvolts) into `out`, which must have room
/// for `capacity >= n_samples` values.
///
/// # Safety
/// `record` must be null or a live handle; `out` must hold `capacity`
/// floats.
#[no_mangle]
pub unsafe extern "C" fn nsz_record_channel(record: *const NszRecord, channel: usize, out: *mut f32, capacity: usize) -> NszStatus {
    guard(|| {
        let r = deref(record, "record")?;
        if channel >= r.0.n_channels() {
            return fail(NszStatus::InvalidArgument, &format!("channel {channel} out of range"));
        }
        let src = r.0.channel(channel);
        if capacity < src.len() {
            return fail(NszStatus::Shape, &format!("buffer of {capacity} for {} samples", src.len()));
        }
        slice_mut(out, capacity, "out")?[..src.len()].copy_from_slice(src);
        Ok(())
    })
}

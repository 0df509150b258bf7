//! C interface to `raven-core`.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every function returns a [`RavenStatus`];
//! on failure a message is kept per thread and can be read with
//! [`raven_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use raven_core::data::{load_dataset, AlignedUtterance, DataError, LoadOptions};
use raven_core::model::{shift_embedding, ModelLoadError};
use raven_core::training::{evaluate, MetricsOptions};

/// Result code of every `raven_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RavenStatus {
    Ok = 0,
    /// A null pointer, a bad length or a non-UTF-8 path.
    InvalidArgument = 1,
    Io = 2,
    /// Malformed checkpoint or dataset contents.
    Parse = 3,
    /// Input does not fit the model (dimensions, task, ablation).
    Model = 4,
    IndexOutOfRange = 5,
    /// The output buffer is shorter than the model output.
    BufferTooSmall = 6,
    /// Internal error; the library state is unchanged.
    Panic = 7,
}

/// Opaque loaded model.
pub struct RavenModel {
    inner: raven_core::model::RavenModel,
}

/// Opaque loaded dataset.
pub struct RavenDataset {
    utterances: Vec<AlignedUtterance>,
}

/// Evaluation summary. `has_*` flags are 0 when the metric is undefined
/// (for example Pearson on constant predictions), in which case the value
/// is NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RavenMetrics {
    pub count: usize,
    pub loss: f64,
    pub mae: f64,
    pub pearson: f64,
    pub acc2: f64,
    pub acc7: f64,
    pub has_pearson: i32,
    pub has_acc2: i32,
    pub has_acc7: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("NULs removed"));
}

type Failure = (RavenStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RavenStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RavenStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RavenStatus::Panic
        }
    }
}

fn invalid(msg: &str) -> Failure {
    (RavenStatus::InvalidArgument, msg.to_string())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(invalid("path is null"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_ref<'a>(m: *const RavenModel) -> Result<&'a RavenModel, Failure> {
    m.as_ref().ok_or_else(|| invalid("model handle is null"))
}

unsafe fn dataset_ref<'a>(d: *const RavenDataset) -> Result<&'a RavenDataset, Failure> {
    d.as_ref().ok_or_else(|| invalid("dataset handle is null"))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next `raven_*` call on the same thread.
#[no_mangle]
pub extern "C" fn raven_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn raven_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint written by `raven train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn raven_model_load(path: *const c_char, out: *mut *mut RavenModel) -> RavenStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path)?;
        let inner = raven_core::model::RavenModel::load(&path).map_err(|e| {
            let status = match e {
                ModelLoadError::Io { .. } => RavenStatus::Io,
                ModelLoadError::Model(_) => RavenStatus::Model,
                _ => RavenStatus::Parse,
            };
            (status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(RavenModel { inner }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`raven_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn raven_model_free(model: *mut RavenModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of values [`raven_model_predict`] writes.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn raven_model_output_dim(model: *const RavenModel, out: *mut usize) -> RavenStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = m.inner.config().task.outputs();
        Ok(())
    })
}

/// Overrides the shift threshold β of a loaded model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn raven_model_set_beta(model: *mut RavenModel, beta: f64) -> RavenStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| invalid("model handle is null"))?;
        m.inner.set_beta(beta).map_err(|e| (RavenStatus::InvalidArgument, e.to_string()))
    })
}

/// Loads a JSON-lines dataset; lines must carry inline embeddings. Frame
/// widths for imputed empty spans come from `model`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `model` a live handle; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn raven_dataset_load(
    path: *const c_char,
    model: *const RavenModel,
    out: *mut *mut RavenDataset,
) -> RavenStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path)?;
        let cfg = model_ref(model)?.inner.config();
        let opts = LoadOptions {
            embeddings: None,
            visual_dim: Some(cfg.visual_dim),
            acoustic_dim: Some(cfg.acoustic_dim),
        };
        let utterances = load_dataset(&path, &opts).map_err(|e| {
            let status = match e {
                DataError::Io { .. } => RavenStatus::Io,
                _ => RavenStatus::Parse,
            };
            (status, e.to_string())
        })?;
        *out = Box::into_raw(Box::new(RavenDataset { utterances }));
        Ok(())
    })
}

/// Number of utterances; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn raven_dataset_len(dataset: *const RavenDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.utterances.len())
}

/// Releases a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must come from [`raven_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn raven_dataset_free(dataset: *mut RavenDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Writes the model output for utterance `index` into `out[0..out_len]`.
/// Regression models produce one value, multilabel models one logit per
/// class.
///
/// # Safety
/// Handles must be live; `out` must have room for `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn raven_model_predict(
    model: *const RavenModel,
    dataset: *const RavenDataset,
    index: usize,
    out: *mut f64,
    out_len: usize,
) -> RavenStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = dataset_ref(dataset)?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let utt = d.utterances.get(index).ok_or_else(|| {
            (
                RavenStatus::IndexOutOfRange,
                format!("index {index} out of range for {} utterances", d.utterances.len()),
            )
        })?;
        let pred = m.inner.predict(utt).map_err(|e| (RavenStatus::Model, e.to_string()))?;
        if out_len < pred.output.len() {
            return Err((
                RavenStatus::BufferTooSmall,
                format!("output needs {} values, buffer holds {out_len}", pred.output.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, pred.output.len()).copy_from_slice(&pred.output);
        Ok(())
    })
}

/// Evaluates the model on every utterance of `dataset` (zero predictions
/// count as positive for Acc-2).
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn raven_model_evaluate(
    model: *const RavenModel,
    dataset: *const RavenDataset,
    threads: usize,
    out: *mut RavenMetrics,
) -> RavenStatus {
    guard(|| {
        let m = model_ref(model)?;
        let d = dataset_ref(dataset)?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let eval = evaluate(&m.inner, &d.utterances, threads.max(1), &MetricsOptions::default())
            .map_err(|e| (RavenStatus::Model, e.to_string()))?;
        let r = &eval.metrics;
        let split = |v: Option<f64>| v.map_or((f64::NAN, 0), |x| (x, 1));
        let (pearson, has_pearson) = split(r.pearson);
        let (acc2, has_acc2) = split(r.acc2);
        let (acc7, has_acc7) = split(r.acc7);
        *out = RavenMetrics {
            count: r.count,
            loss: eval.loss,
            mae: r.mae,
            pearson,
            acc2,
            acc7,
            has_pearson,
            has_acc2,
            has_acc7,
        };
        Ok(())
    })
}

/// Shifts word vector `e` by `h` with threshold `beta`:
/// `e_m = e + α·h`, `α = min(β‖e‖/‖h‖, 1)` (α = 0 when `h` is zero).
/// Writes `e_m` into `out` and α into `alpha`.
///
/// # Safety
/// `e`, `h` and `out` must each point to `dim` doubles; `alpha` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn raven_shift_embedding(
    e: *const f64,
    h: *const f64,
    dim: usize,
    beta: f64,
    out: *mut f64,
    alpha: *mut f64,
) -> RavenStatus {
    guard(|| {
        if e.is_null() || h.is_null() || out.is_null() || alpha.is_null() {
            return Err(invalid("null pointer argument"));
        }
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(invalid("beta must be a nonnegative number"));
        }
        let e = std::slice::from_raw_parts(e, dim);
        let h = std::slice::from_raw_parts(h, dim);
        let (em, a) = shift_embedding(e, h, beta).map_err(|err| (RavenStatus::InvalidArgument, err.to_string()))?;
        std::slice::from_raw_parts_mut(out, dim).copy_from_slice(&em);
        *alpha = a;
        Ok(())
    })
}

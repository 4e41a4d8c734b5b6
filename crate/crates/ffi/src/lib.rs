//! C ABI for loading checkpoints, serving pCTR and computing metrics.
//!
//! Every fallible function returns a [`PdStatus`]. On failure the message is
//! kept per thread and can be read with [`pd_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use posdistill::checkpoint::{load_model, LoadedModel};
use posdistill::data::Features;
use posdistill::eval::{auc, logloss};
use posdistill::Error;

/// Opaque handle to a loaded model.
pub struct PdModel {
    inner: LoadedModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Artifact = 4,
    AucUndefined = 5,
    Panic = 99,
}

/// Field counts a caller needs to lay out feature arrays.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PdSchema {
    pub user_fields: usize,
    pub ctx_fields: usize,
    pub ad_fields: usize,
    pub max_behaviors: usize,
    pub num_positions: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(status: PdStatus, msg: impl Into<String>) -> PdStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> PdStatus {
    let status = match e {
        Error::Io { .. } => PdStatus::Io,
        Error::Artifact(_) => PdStatus::Artifact,
        Error::AucUndefined => PdStatus::AucUndefined,
        _ => PdStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> PdStatus) -> PdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(PdStatus::Panic, "panic inside posdistill"))
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn view<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(ptr, len))
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a checkpoint. On success `*out` owns a handle to release with
/// [`pd_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pd_model_load(path: *const c_char, out: *mut *mut PdModel) -> PdStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(PdStatus::NullPointer, "path and out must be non-null");
        }
        let Ok(p) = CStr::from_ptr(path).to_str() else {
            return fail(PdStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match load_model(Path::new(p)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(PdModel { inner }));
                PdStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or come from [`pd_model_load`], and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pd_model_free(model: *mut PdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pd_model_schema(model: *const PdModel, out: *mut PdSchema) -> PdStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out.is_null()) else {
            return fail(PdStatus::NullPointer, "model and out must be non-null");
        };
        let s = &m.inner.network.schema;
        *out = PdSchema {
            user_fields: s.user_vocab.len(),
            ctx_fields: s.ctx_vocab.len(),
            ad_fields: s.ad_vocab.len(),
            max_behaviors: s.max_behaviors,
            num_positions: s.num_positions,
        };
        PdStatus::Ok
    })
}

/// Serving pCTR for `n` impressions. Feature arrays are row-major
/// (`n × user_fields` and so on); `behaviors` holds every sequence back to
/// back with lengths in `behavior_lens`. No position is taken.
///
/// # Safety
/// Every pointer must address the number of values implied by `n`, the
/// model schema and `behavior_lens`; `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pd_model_serve(
    model: *const PdModel,
    n: usize,
    user: *const usize,
    ctx: *const usize,
    ad: *const usize,
    behaviors: *const usize,
    behavior_lens: *const usize,
    out: *mut f64,
) -> PdStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(PdStatus::NullPointer, "model is null");
        };
        if n == 0 {
            return PdStatus::Ok;
        }
        let s = &m.inner.network.schema;
        let (nu, nc, na) = (s.user_vocab.len(), s.ctx_vocab.len(), s.ad_vocab.len());
        let (Some(user), Some(ctx), Some(ad), Some(lens)) = (
            view(user, n * nu),
            view(ctx, n * nc),
            view(ad, n * na),
            view(behavior_lens, n),
        ) else {
            return fail(PdStatus::NullPointer, "feature array is null");
        };
        let total: usize = lens.iter().sum();
        let Some(beh) = view(behaviors, total) else {
            return fail(PdStatus::NullPointer, "behaviors is null");
        };
        if out.is_null() {
            return fail(PdStatus::NullPointer, "out is null");
        }
        let mut offset = 0;
        let feats: Vec<Features> = (0..n)
            .map(|i| {
                let f = Features {
                    user: user[i * nu..(i + 1) * nu].to_vec(),
                    ctx: ctx[i * nc..(i + 1) * nc].to_vec(),
                    ad: ad[i * na..(i + 1) * na].to_vec(),
                    behaviors: beh[offset..offset + lens[i]].to_vec(),
                };
                offset += lens[i];
                f
            })
            .collect();
        let refs: Vec<&Features> = feats.iter().collect();
        let lm = &m.inner;
        match lm.method.serve(&lm.network, &lm.params, &refs) {
            Ok(scores) => {
                slice::from_raw_parts_mut(out, n).copy_from_slice(&scores);
                PdStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> PdStatus {
    guard(|| {
        let (Some(s), Some(l)) = (view(scores, n), view(labels, n)) else {
            return fail(PdStatus::NullPointer, "scores and labels must be non-null");
        };
        if out.is_null() {
            return fail(PdStatus::NullPointer, "out is null");
        }
        let labels: Vec<bool> = l.iter().map(|&y| y != 0).collect();
        match auc(s, &labels) {
            Ok(v) => {
                *out = v;
                PdStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pd_logloss(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> PdStatus {
    guard(|| {
        let (Some(s), Some(l)) = (view(scores, n), view(labels, n)) else {
            return fail(PdStatus::NullPointer, "scores and labels must be non-null");
        };
        if out.is_null() {
            return fail(PdStatus::NullPointer, "out is null");
        }
        let labels: Vec<bool> = l.iter().map(|&y| y != 0).collect();
        *out = logloss(s, &labels);
        PdStatus::Ok
    })
}

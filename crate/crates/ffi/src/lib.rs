//! C interface to the xtransfer core: load, build, save and score networks,
//! evaluate them on manifests, and compute ranking metrics.
//!
//! Every fallible function returns an `XtStatus`. On failure the message is
//! kept per thread and read back with `xt_last_error_message`. Handles are
//! opaque and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use xtransfer::autodiff::Tensor;
use xtransfer::blocknet::{BlockNet, NetSpec};
use xtransfer::checkpoint::{decode, infer_spec, save_checkpoint};
use xtransfer::dataforge::{Dataset, SampleManifest};
use xtransfer::metrics::{auc_exact, average_precision};
use xtransfer::trainer::evaluate;
use xtransfer::Error;

/// Status codes. Values 2 to 5 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XtStatus {
    Ok = 0,
    Internal = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    DegenerateData = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Ranking metrics of one evaluation.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct XtEvalReport {
    pub auc: f64,
    pub ap: f64,
    pub acc_at_half: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// A network. Opaque to C.
pub struct XtNet {
    net: BlockNet,
}

/// A labeled image set loaded from a manifest. Opaque to C.
pub struct XtDataset {
    data: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> XtStatus {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Shape { .. } | Error::OddDimension { .. } | Error::TooFewSegments(_) => {
            XtStatus::InvalidArgument
        }
        Error::Io { .. } | Error::Csv(_) | Error::Format(_) => XtStatus::Io,
        Error::CheckpointMismatch(_) => XtStatus::Checkpoint,
        Error::DegenerateBatch(_) | Error::EmptyBatch | Error::InvalidLabel(_) => XtStatus::DegenerateData,
        _ => XtStatus::Internal,
    }
}

struct Failure(XtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(XtStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> XtStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            XtStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(XtStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn net_arg<'a>(p: *const XtNet) -> Result<&'a XtNet, Failure> {
    p.as_ref().ok_or_else(|| null("net"))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn xt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a freshly initialized network with `num_segments` segments whose
/// output channels are `channels[0..num_segments]`.
///
/// # Safety
/// `channels` must point to `num_segments` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xt_net_build(
    input_channels: usize,
    channels: *const usize,
    num_segments: usize,
    kernel_size: usize,
    seed: u64,
    out: *mut *mut XtNet,
) -> XtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let channels = slice_arg(channels, num_segments, "channels")?;
        let spec = NetSpec::uniform(input_channels, channels, kernel_size);
        let net = BlockNet::build(&spec, seed)?;
        *out = Box::into_raw(Box::new(XtNet { net }));
        Ok(())
    })
}

/// Loads a checkpoint, inferring the architecture from its tensor shapes.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xt_net_load(path: *const c_char, out: *mut *mut XtNet) -> XtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = path_arg(path, "path")?;
        let ckpt = |e: Error| Failure(XtStatus::Checkpoint, e.to_string());
        let bytes = std::fs::read(&path).map_err(|e| ckpt(Error::Io { path: path.clone(), source: e }))?;
        let spec = infer_spec(&bytes).map_err(ckpt)?;
        let net = decode(&bytes, &spec).map_err(ckpt)?;
        *out = Box::into_raw(Box::new(XtNet { net }));
        Ok(())
    })
}

/// # Safety
/// `net` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn xt_net_save(net: *const XtNet, path: *const c_char) -> XtStatus {
    guard(|| {
        let net = net_arg(net)?;
        let path = path_arg(path, "path")?;
        save_checkpoint(&net.net, path)?;
        Ok(())
    })
}

/// Number of segments, or 0 for a NULL handle.
///
/// # Safety
/// `net` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn xt_net_num_segments(net: *const XtNet) -> usize {
    net.as_ref().map_or(0, |n| n.net.num_segments())
}

/// Scores `batch` images of shape `channels x height x width`, stored
/// contiguously in `pixels`, writing one probability per image to `scores`.
///
/// # Safety
/// `pixels` must hold `batch * channels * height * width` values and
/// `scores` room for `batch` values.
#[no_mangle]
pub unsafe extern "C" fn xt_net_score(
    net: *const XtNet,
    pixels: *const f64,
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    scores: *mut f64,
) -> XtStatus {
    guard(|| {
        let net = net_arg(net)?;
        let n = batch
            .checked_mul(channels)
            .and_then(|v| v.checked_mul(height))
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Failure(XtStatus::InvalidArgument, "image dimensions overflow".into()))?;
        if n == 0 {
            return Err(Failure(XtStatus::InvalidArgument, "empty input".into()));
        }
        let pixels = slice_arg(pixels, n, "pixels")?;
        if scores.is_null() {
            return Err(null("scores"));
        }
        let input = Tensor::new(vec![batch, channels, height, width], pixels.to_vec())?;
        let out = net.net.scores(&input)?;
        std::slice::from_raw_parts_mut(scores, batch).copy_from_slice(&out);
        Ok(())
    })
}

/// Scores a loaded dataset and reports AUC, AP and accuracy at 0.5.
///
/// # Safety
/// Handles must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xt_net_evaluate(net: *const XtNet, data: *const XtDataset, out: *mut XtEvalReport) -> XtStatus {
    guard(|| {
        let net = net_arg(net)?;
        let data = data.as_ref().ok_or_else(|| null("data"))?;
        let out = out_arg(out, "out")?;
        let r = evaluate(&net.net, &data.data, 64)?;
        *out = XtEvalReport {
            auc: r.auc,
            ap: r.ap,
            acc_at_half: r.acc_at_half,
            n_pos: r.n_pos,
            n_neg: r.n_neg,
        };
        Ok(())
    })
}

/// # Safety
/// `net` must be NULL or come from `xt_net_build` / `xt_net_load`, and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xt_net_free(net: *mut XtNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Loads every image listed in a manifest CSV.
///
/// # Safety
/// `manifest` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xt_dataset_load(manifest: *const c_char, out: *mut *mut XtDataset) -> XtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = path_arg(manifest, "manifest")?;
        let manifest = SampleManifest::read(path)?;
        let data = Dataset::from_manifest(&manifest)?;
        *out = Box::into_raw(Box::new(XtDataset { data }));
        Ok(())
    })
}

/// Number of samples, or 0 for a NULL handle.
///
/// # Safety
/// `data` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn xt_dataset_len(data: *const XtDataset) -> usize {
    data.as_ref().map_or(0, |d| d.data.len())
}

/// # Safety
/// `data` must be NULL or come from `xt_dataset_load`, and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn xt_dataset_free(data: *mut XtDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

unsafe fn metric(
    scores: *const f64,
    labels: *const f64,
    n: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> xtransfer::Result<f64>,
) -> XtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = slice_arg(scores, n, "scores")?;
        let l = slice_arg(labels, n, "labels")?;
        *out = f(s, l)?;
        Ok(())
    })
}

/// Exact AUC with ties counted as one half. Labels must be 0 or 1.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xt_auc_exact(scores: *const f64, labels: *const f64, n: usize, out: *mut f64) -> XtStatus {
    metric(scores, labels, n, out, auc_exact)
}

/// Average precision. Labels must be 0 or 1.
///
/// # Safety
/// `scores` and `labels` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xt_average_precision(scores: *const f64, labels: *const f64, n: usize, out: *mut f64) -> XtStatus {
    metric(scores, labels, n, out, average_precision)
}

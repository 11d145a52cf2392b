//! C ABI over the posefuse core.
//!
//! Every fallible call returns a [`PfStatus`]; on failure the message is
//! kept per thread and can be read with [`pf_last_error_message`]. Handles
//! are opaque pointers created by `*_new`/`*_from_json` and released with
//! the matching `*_free`. Output buffers are caller-owned: when a buffer is
//! too small the call returns `PF_STATUS_BUFFER_TOO_SMALL` and stores the
//! required length.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use posefuse::bayes::{expected_improvement_from_moments, GpModel, GpParams};
use posefuse::ingest::wire::{self, MsgType, WireError};
use posefuse::pipeline::{self, PipelineConfig};
use posefuse::pose::LimbTopology;
use posefuse::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Config = 4,
    Stream = 5,
    BadMagic = 6,
    BadVersion = 7,
    Truncated = 8,
    CrcMismatch = 9,
    UnknownType = 10,
    TrailingBytes = 11,
    Factorization = 12,
    Evaluation = 13,
    BufferTooSmall = 14,
    Io = 15,
    Panic = 16,
    Other = 17,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn wire_status(e: &WireError) -> PfStatus {
    match e {
        WireError::BadMagic(_) => PfStatus::BadMagic,
        WireError::BadVersion(_) => PfStatus::BadVersion,
        WireError::Truncated { .. } => PfStatus::Truncated,
        WireError::CrcMismatch { .. } => PfStatus::CrcMismatch,
        WireError::UnknownType(_) => PfStatus::UnknownType,
        WireError::TrailingBytes(_) => PfStatus::TrailingBytes,
        WireError::Oversized(_) | WireError::BadPayload(_) => PfStatus::InvalidArgument,
    }
}

fn status_of(e: &Error) -> PfStatus {
    match e {
        Error::Shape(_) => PfStatus::Shape,
        Error::InvalidArgument(_) => PfStatus::InvalidArgument,
        Error::Layer { source, .. } => status_of(source),
        Error::Factorization { .. } => PfStatus::Factorization,
        Error::Config(_) => PfStatus::Config,
        Error::Stream { .. } | Error::Unsorted(_) => PfStatus::Stream,
        Error::Evaluation(_) => PfStatus::Evaluation,
        Error::Wire(w) => wire_status(w),
        Error::Io(_) => PfStatus::Io,
        _ => PfStatus::Other,
    }
}

fn fail(status: PfStatus, msg: impl Into<String>) -> PfStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), PfStatus>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PfStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(PfStatus::Panic, "panic across the C boundary"),
    }
}

fn core<T>(r: posefuse::Result<T>) -> Result<T, PfStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), PfStatus> {
    if p.is_null() {
        Err(fail(PfStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn bytes<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], PfStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, PfStatus> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn copy_out(src: &[u8], out: *mut u8, cap: usize, out_len: *mut usize) -> Result<(), PfStatus> {
    non_null(out_len, "out_len")?;
    *out_len = src.len();
    if src.len() > cap {
        return Err(fail(
            PfStatus::BufferTooSmall,
            format!("need {} bytes, buffer holds {cap}", src.len()),
        ));
    }
    if !src.is_empty() {
        non_null(out, "out")?;
        ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// CRC-32 (IEEE) of `len` bytes; null with `len == 0` is accepted.
#[no_mangle]
pub unsafe extern "C" fn pf_crc32(data: *const u8, len: usize) -> u32 {
    match bytes(data, len, "data") {
        Ok(b) => wire::crc32(b),
        Err(_) => 0,
    }
}

/// Frames a payload. `msg_type` is 1 (camera), 2 (imu) or 3 (end of stream).
#[no_mangle]
pub unsafe extern "C" fn pf_encode_message(
    msg_type: u8,
    payload: *const u8,
    payload_len: usize,
    out: *mut u8,
    out_cap: usize,
    out_len: *mut usize,
) -> PfStatus {
    guard(|| {
        let t = MsgType::from_byte(msg_type)
            .ok_or_else(|| fail(PfStatus::UnknownType, format!("unknown message type {msg_type}")))?;
        let p = bytes(payload, payload_len, "payload")?;
        let msg = core(wire::encode_message(t, p).map_err(Error::from))?;
        copy_out(&msg, out, out_cap, out_len)
    })
}

/// Validates one complete message and copies out its payload.
#[no_mangle]
pub unsafe extern "C" fn pf_decode_message(
    data: *const u8,
    len: usize,
    msg_type: *mut u8,
    payload: *mut u8,
    payload_cap: usize,
    payload_len: *mut usize,
) -> PfStatus {
    guard(|| {
        non_null(msg_type, "msg_type")?;
        let b = bytes(data, len, "data")?;
        let (t, p) = core(wire::decode_message(b).map_err(Error::from))?;
        *msg_type = t as u8;
        copy_out(&p, payload, payload_cap, payload_len)
    })
}

/// Ranked-list average precision: `hits[i]` is non-zero when the i-th
/// detection (in descending score order) is a true positive.
#[no_mangle]
pub unsafe extern "C" fn pf_average_precision(
    hits: *const u8,
    n: usize,
    ground_truth: usize,
    out: *mut f64,
) -> PfStatus {
    guard(|| {
        non_null(out, "out")?;
        let h: Vec<bool> = bytes(hits, n, "hits")?.iter().map(|&b| b != 0).collect();
        *out = pipeline::average_precision(&h, ground_truth);
        Ok(())
    })
}

/// Opaque Gaussian-process surrogate over the unit cube.
pub struct PfGp {
    model: GpModel,
    dim: usize,
}

#[no_mangle]
pub unsafe extern "C" fn pf_gp_new(
    length_scale: f64,
    signal_variance: f64,
    noise_variance: f64,
    dim: usize,
    out: *mut *mut PfGp,
) -> PfStatus {
    guard(|| {
        non_null(out, "out")?;
        if dim == 0 {
            return Err(fail(PfStatus::InvalidArgument, "dim must be at least 1"));
        }
        let model = core(GpModel::new(GpParams {
            length_scale,
            signal_variance,
            noise_variance,
        }))?;
        *out = Box::into_raw(Box::new(PfGp { model, dim }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pf_gp_free(gp: *mut PfGp) {
    if !gp.is_null() {
        drop(Box::from_raw(gp));
    }
}

unsafe fn point<'a>(gp: *const PfGp, x: *const f64) -> Result<(&'a PfGp, &'a [f64]), PfStatus> {
    non_null(gp, "gp")?;
    non_null(x, "x")?;
    let gp = &*gp;
    Ok((gp, slice::from_raw_parts(x, gp.dim)))
}

/// Adds an observation; `x` points at `dim` coordinates in `[0, 1]`.
#[no_mangle]
pub unsafe extern "C" fn pf_gp_add(gp: *mut PfGp, x: *const f64, y: f64) -> PfStatus {
    guard(|| {
        let (_, xs) = point(gp, x)?;
        let xs = xs.to_vec();
        core((*gp).model.add_observation(xs, y))
    })
}

#[no_mangle]
pub unsafe extern "C" fn pf_gp_len(gp: *const PfGp) -> usize {
    if gp.is_null() {
        0
    } else {
        (*gp).model.observations().len()
    }
}

#[no_mangle]
pub unsafe extern "C" fn pf_gp_posterior(
    gp: *const PfGp,
    x: *const f64,
    mean: *mut f64,
    variance: *mut f64,
) -> PfStatus {
    guard(|| {
        let (gp, xs) = point(gp, x)?;
        non_null(mean, "mean")?;
        non_null(variance, "variance")?;
        let (m, v) = core(gp.model.fit())?.posterior(xs);
        *mean = m;
        *variance = v;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pf_gp_expected_improvement(
    gp: *const PfGp,
    x: *const f64,
    f_best: f64,
    out: *mut f64,
) -> PfStatus {
    guard(|| {
        let (gp, xs) = point(gp, x)?;
        non_null(out, "out")?;
        let (m, v) = core(gp.model.fit())?.posterior(xs);
        *out = expected_improvement_from_moments(m, v.sqrt(), f_best);
        Ok(())
    })
}

/// Opaque, validated pipeline configuration.
pub struct PfConfig {
    cfg: PipelineConfig,
}

/// Parses a JSON config; a null `json` yields the defaults.
#[no_mangle]
pub unsafe extern "C" fn pf_config_from_json(json: *const c_char, out: *mut *mut PfConfig) -> PfStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = if json.is_null() {
            PipelineConfig::default()
        } else {
            core(PipelineConfig::from_json(c_str(json, "json")?))?
        };
        *out = Box::into_raw(Box::new(PfConfig { cfg }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pf_config_free(cfg: *mut PfConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Serialized config as UTF-8 JSON (no terminator).
#[no_mangle]
pub unsafe extern "C" fn pf_config_to_json(
    cfg: *const PfConfig,
    out: *mut u8,
    out_cap: usize,
    out_len: *mut usize,
) -> PfStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        copy_out((*cfg).cfg.to_json().as_bytes(), out, out_cap, out_len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn pf_config_set_seed(cfg: *mut PfConfig, seed: u64) -> PfStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        (*cfg).cfg.seed = seed;
        Ok(())
    })
}

/// Runs the batch pipeline on a scene manifest and writes the skeleton,
/// action and metrics files into `output_dir`. `map` receives the mean AP,
/// or NaN when the scene carries no ground truth.
#[no_mangle]
pub unsafe extern "C" fn pf_run_manifest(
    cfg: *const PfConfig,
    manifest: *const c_char,
    output_dir: *const c_char,
    map: *mut f64,
) -> PfStatus {
    guard(|| {
        non_null(cfg, "cfg")?;
        let manifest = c_str(manifest, "manifest")?;
        let output_dir = c_str(output_dir, "output_dir")?;
        let (run, _) = core(pipeline::run_pipeline(&(*cfg).cfg, manifest))?;
        core(pipeline::write_run(output_dir, &run, &LimbTopology::standard()))?;
        if !map.is_null() {
            *map = run.metrics.and_then(|m| m.map).unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

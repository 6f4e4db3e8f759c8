//! C ABI over `csfft`.
//!
//! Handles are opaque and owned by the caller once returned; free each with
//! its `*_free` function. Every fallible call returns a [`CsfftStatus`] and,
//! on failure, leaves a message readable through [`csfft_last_error`] on the
//! same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use csfft::{recover, Complex64, CsfftError, NoiseModel, RecoveryConfig, RecoveryReport, SignalSource, Tone, ToneSet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsfftStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Infeasible = 3,
    Domain = 4,
    Budget = 5,
    RankDeficient = 6,
    Invariant = 7,
    Io = 8,
    OutOfRange = 9,
    Panic = 10,
}

/// `v = re + i·im` at frequency `f` Hz.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsfftTone {
    pub f: f64,
    pub re: f64,
    pub im: f64,
}

pub struct CsfftConfig {
    inner: RecoveryConfig,
}

pub struct CsfftSignal {
    inner: SignalSource,
    eta: f64,
}

pub struct CsfftReport {
    inner: RecoveryReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &CsfftError) -> CsfftStatus {
    match err {
        CsfftError::Config(_) => CsfftStatus::Config,
        CsfftError::InfeasibleDuration { .. } => CsfftStatus::Infeasible,
        CsfftError::Domain { .. } => CsfftStatus::Domain,
        CsfftError::Budget { .. } => CsfftStatus::Budget,
        CsfftError::RankDeficient(..) => CsfftStatus::RankDeficient,
        CsfftError::Invariant(_) => CsfftStatus::Invariant,
        CsfftError::Io(_) | CsfftError::Json(_) | CsfftError::Csv(_) => CsfftStatus::Io,
    }
}

fn fail(status: CsfftStatus, msg: impl Into<String>) -> CsfftStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CsfftStatus) -> CsfftStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(CsfftStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn into_status<T>(r: csfft::Result<T>, out: impl FnOnce(T)) -> CsfftStatus {
    match r {
        Ok(v) => {
            out(v);
            CsfftStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(CsfftStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message for the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn csfft_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static, nul-terminated library version.
#[no_mangle]
pub extern "C" fn csfft_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default recovery configuration.
#[no_mangle]
pub extern "C" fn csfft_config_new() -> *mut CsfftConfig {
    Box::into_raw(Box::new(CsfftConfig { inner: RecoveryConfig::default() }))
}

/// Parses a JSON recovery config; missing fields take their defaults.
///
/// # Safety
/// `json` must be a valid nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csfft_config_from_json(json: *const c_char, out: *mut *mut CsfftConfig) -> CsfftStatus {
    non_null!(json, out);
    guard(|| {
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(s) => s,
            Err(_) => return fail(CsfftStatus::Config, "config is not valid UTF-8"),
        };
        let parsed = serde_json::from_str::<RecoveryConfig>(text)
            .map_err(CsfftError::from)
            .and_then(|c| c.validate().map(|_| c));
        into_status(parsed, |inner| unsafe { *out = Box::into_raw(Box::new(CsfftConfig { inner })) })
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn csfft_config_free(cfg: *mut CsfftConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csfft_config_set_delta(cfg: *mut CsfftConfig, delta: f64) -> CsfftStatus {
    non_null!(cfg);
    if !(delta > 0.0 && delta < 1.0) {
        return fail(CsfftStatus::Config, format!("delta must lie in (0, 1), got {delta}"));
    }
    unsafe { (*cfg).inner.delta = delta };
    CsfftStatus::Ok
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csfft_config_set_alpha(cfg: *mut CsfftConfig, alpha: f64) -> CsfftStatus {
    non_null!(cfg);
    if !(alpha > 0.0 && alpha < 1.0) {
        return fail(CsfftStatus::Config, format!("alpha must lie in (0, 1), got {alpha}"));
    }
    unsafe { (*cfg).inner.alpha = alpha };
    CsfftStatus::Ok
}

/// Shortest duration `recover` accepts for sparsity `k` and separation `eta`.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csfft_min_duration(cfg: *const CsfftConfig, k: usize, eta: f64, out: *mut f64) -> CsfftStatus {
    non_null!(cfg, out);
    guard(|| into_status(unsafe { &(*cfg).inner }.min_duration(k, eta), |t| unsafe { *out = t }))
}

/// Builds a signal from `n` tones on `[0, duration]` with band limit
/// `band_limit`. `noise_variance > 0` adds complex Gaussian noise keyed by
/// `noise_seed`.
///
/// # Safety
/// `tones` must point to `n` readable tones (or be null with `n == 0`) and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csfft_signal_new(
    tones: *const CsfftTone,
    n: usize,
    eta: f64,
    duration: f64,
    band_limit: f64,
    noise_variance: f64,
    noise_seed: u64,
    out: *mut *mut CsfftSignal,
) -> CsfftStatus {
    non_null!(out);
    if tones.is_null() && n > 0 {
        return fail(CsfftStatus::NullPointer, "tones is null");
    }
    guard(|| {
        let raw = if n == 0 { &[][..] } else { unsafe { std::slice::from_raw_parts(tones, n) } };
        let list = raw.iter().map(|t| Tone::new(Complex64::new(t.re, t.im), t.f)).collect();
        let noise = if noise_variance > 0.0 { NoiseModel::Gaussian { variance: noise_variance } } else { NoiseModel::None };
        let built = ToneSet::new(list, eta).and_then(|set| SignalSource::new(set, noise, duration, band_limit, noise_seed));
        into_status(built, |inner| unsafe { *out = Box::into_raw(Box::new(CsfftSignal { inner, eta })) })
    })
}

/// # Safety
/// `sig` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn csfft_signal_free(sig: *mut CsfftSignal) {
    if !sig.is_null() {
        drop(unsafe { Box::from_raw(sig) });
    }
}

/// One metered sample `x(t)`.
///
/// # Safety
/// `sig` must be a live handle; `re` and `im` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn csfft_signal_sample(sig: *const CsfftSignal, t: f64, re: *mut f64, im: *mut f64) -> CsfftStatus {
    non_null!(sig, re, im);
    guard(|| {
        into_status(unsafe { &(*sig).inner }.sample(t), |x| unsafe {
            *re = x.re;
            *im = x.im;
        })
    })
}

/// Samples drawn so far.
///
/// # Safety
/// `sig` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn csfft_signal_samples_taken(sig: *const CsfftSignal) -> u64 {
    if sig.is_null() {
        return 0;
    }
    unsafe { &(*sig).inner }.samples_taken()
}

/// Recovers `k` tones. `cfg` may be null for the defaults.
///
/// # Safety
/// `sig` must be a live handle, `cfg` live or null, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csfft_recover(
    sig: *const CsfftSignal,
    k: usize,
    cfg: *const CsfftConfig,
    seed: u64,
    out: *mut *mut CsfftReport,
) -> CsfftStatus {
    non_null!(sig, out);
    guard(|| {
        let default = RecoveryConfig::default();
        let config = if cfg.is_null() { &default } else { unsafe { &(*cfg).inner } };
        let sig = unsafe { &*sig };
        into_status(recover(&sig.inner, k, sig.eta, config, seed), |inner| unsafe {
            *out = Box::into_raw(Box::new(CsfftReport { inner }))
        })
    })
}

/// # Safety
/// `rep` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn csfft_report_free(rep: *mut CsfftReport) {
    if !rep.is_null() {
        drop(unsafe { Box::from_raw(rep) });
    }
}

/// Number of recovered tones.
///
/// # Safety
/// `rep` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn csfft_report_len(rep: *const CsfftReport) -> usize {
    if rep.is_null() {
        return 0;
    }
    unsafe { &(*rep).inner }.tones.len()
}

/// # Safety
/// `rep` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn csfft_report_tone(rep: *const CsfftReport, index: usize, out: *mut CsfftTone) -> CsfftStatus {
    non_null!(rep, out);
    let tones = &unsafe { &(*rep).inner }.tones;
    match tones.get(index) {
        Some(t) => {
            unsafe { *out = CsfftTone { f: t.f, re: t.v.re, im: t.v.im } };
            CsfftStatus::Ok
        }
        None => fail(CsfftStatus::OutOfRange, format!("tone index {index} out of range for {} tones", tones.len())),
    }
}

/// Samples the recovery consumed.
///
/// # Safety
/// `rep` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn csfft_report_samples_used(rep: *const CsfftReport) -> u64 {
    if rep.is_null() {
        return 0;
    }
    unsafe { &(*rep).inner }.samples_used
}

/// The full report as JSON; free with [`csfft_string_free`]. Null on failure.
///
/// # Safety
/// `rep` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn csfft_report_to_json(rep: *const CsfftReport) -> *mut c_char {
    if rep.is_null() {
        set_error("rep is null");
        return ptr::null_mut();
    }
    match serde_json::to_string(&unsafe { &*rep }.inner) {
        Ok(s) => CString::new(s).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must come from [`csfft_report_to_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn csfft_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

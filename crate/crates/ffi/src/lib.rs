//! C ABI over the `fmqkd` simulator.
//!
//! Every function returns an [`FmqkdStatus`] and writes results through out
//! pointers. Handles are opaque and must be released with their `_free`
//! function. After a failure, [`fmqkd_last_error`] describes it; the message
//! is per thread.
//!
//! Bit strings cross the boundary one bit per byte, values 0 or 1.
//!
//! # Safety
//!
//! All pointer arguments must be null or valid for the access the function
//! documents: strings NUL-terminated, buffers at least `cap` bytes, handles
//! obtained from this library and not yet freed. A handle must not be used
//! from two threads at once.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fmqkd::config::RunConfig;
use fmqkd::detector::{self, GatedDetectorConfig};
use fmqkd::protocol::{self, ProtocolVariant, SessionResult};
use fmqkd::transport::{self, ChannelMode, FrameError, Message};
use fmqkd::{interferometer, keyfile, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FmqkdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Channel = 4,
    Io = 5,
    Protocol = 6,
    UndefinedRate = 7,
    KeyFile = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Session parameters and channel mode.
pub struct FmqkdConfig {
    run: RunConfig,
}

/// Outcome of a completed session.
pub struct FmqkdResult {
    result: SessionResult,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> FmqkdStatus {
    match e {
        Error::InvalidArgument(_) => FmqkdStatus::InvalidArgument,
        Error::Config(_) => FmqkdStatus::Config,
        Error::UndefinedRate(_) => FmqkdStatus::UndefinedRate,
        Error::KeyFile(_) => FmqkdStatus::KeyFile,
        Error::Protocol(_) | Error::Frame(FrameError::ProtocolViolation(_)) => FmqkdStatus::Protocol,
        Error::Io(_) => FmqkdStatus::Io,
        _ if e.is_channel() => FmqkdStatus::Channel,
        _ => FmqkdStatus::Protocol,
    }
}

fn fail(e: Error) -> FmqkdStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn guard(f: impl FnOnce() -> FmqkdStatus) -> FmqkdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            FmqkdStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!(stringify!($p), " is null"));
            return FmqkdStatus::NullPointer;
        })+
    };
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, FmqkdStatus> {
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        FmqkdStatus::InvalidArgument
    })
}

fn write_f64(out: *mut f64, r: fmqkd::Result<f64>) -> FmqkdStatus {
    match r {
        Ok(v) => {
            unsafe { *out = v };
            FmqkdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Copy the last error message for this thread into `buf` as a
/// NUL-terminated string. `needed` receives the full size including the
/// terminator; a short buffer gets a truncated copy and BUFFER_TOO_SMALL.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> FmqkdStatus {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !needed.is_null() {
            *needed = bytes.len() + 1;
        }
        if buf.is_null() || len == 0 {
            return if bytes.is_empty() { FmqkdStatus::Ok } else { FmqkdStatus::BufferTooSmall };
        }
        let n = bytes.len().min(len - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
        if n < bytes.len() {
            FmqkdStatus::BufferTooSmall
        } else {
            FmqkdStatus::Ok
        }
    })
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fmqkd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A config with the default parameters, in-process channel.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_new(out: *mut *mut FmqkdConfig) -> FmqkdStatus {
    guard(|| {
        non_null!(out);
        *out = Box::into_raw(Box::new(FmqkdConfig { run: RunConfig::default() }));
        FmqkdStatus::Ok
    })
}

/// Parse `key = value` config text. Relative key-file paths are taken as is.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_parse(text: *const c_char, out: *mut *mut FmqkdConfig) -> FmqkdStatus {
    guard(|| {
        non_null!(text, out);
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match RunConfig::parse(text, None) {
            Ok(run) => {
                *out = Box::into_raw(Box::new(FmqkdConfig { run }));
                FmqkdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_free(cfg: *mut FmqkdConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn with_config(cfg: *mut FmqkdConfig, f: impl FnOnce(&mut RunConfig)) -> FmqkdStatus {
    guard(|| {
        non_null!(cfg);
        let mut next = (*cfg).run.clone();
        f(&mut next);
        match next.session.validate() {
            Ok(()) => {
                (*cfg).run = next;
                FmqkdStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_set_pulses(cfg: *mut FmqkdConfig, n_pulses: u64) -> FmqkdStatus {
    with_config(cfg, |r| r.session.n_pulses = n_pulses)
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_set_mu(cfg: *mut FmqkdConfig, mu_pair: f64) -> FmqkdStatus {
    with_config(cfg, |r| r.session.setup.mu_pair = mu_pair)
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_set_seeds(
    cfg: *mut FmqkdConfig,
    alice: u64,
    bob: u64,
    physics: u64,
) -> FmqkdStatus {
    with_config(cfg, |r| r.session.seeds = protocol::Seeds { alice, bob, physics })
}

/// 0 selects BB92, 1 selects BB84.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_set_variant(cfg: *mut FmqkdConfig, variant: u8) -> FmqkdStatus {
    let v = match ProtocolVariant::from_wire(variant) {
        Ok(v) => v,
        Err(_) => {
            set_error(format!("unknown variant {variant}"));
            return FmqkdStatus::InvalidArgument;
        }
    };
    with_config(cfg, |r| r.session.variant = v)
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_set_detector(
    cfg: *mut FmqkdConfig,
    efficiency: f64,
    dark_prob: f64,
) -> FmqkdStatus {
    with_config(cfg, |r| {
        r.session.detector.efficiency = efficiency;
        r.session.detector.dark_prob_per_gate = dark_prob;
    })
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_set_disclosure(cfg: *mut FmqkdConfig, fraction: f64) -> FmqkdStatus {
    with_config(cfg, |r| r.session.disclosure_fraction = fraction)
}

/// `"in_process"` or `"socket:host:port"`; port 0 picks a free port.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_config_set_channel(cfg: *mut FmqkdConfig, mode: *const c_char) -> FmqkdStatus {
    guard(|| {
        non_null!(cfg, mode);
        let mode = match str_arg(mode).map(str::parse::<ChannelMode>) {
            Ok(Ok(m)) => m,
            Ok(Err(e)) => return fail(e),
            Err(s) => return s,
        };
        (*cfg).run.channel = mode;
        FmqkdStatus::Ok
    })
}

/// Run a session with both stations in this process.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_run_session(cfg: *const FmqkdConfig, out: *mut *mut FmqkdResult) -> FmqkdStatus {
    guard(|| {
        non_null!(cfg, out);
        let run = &(*cfg).run;
        match protocol::run_session(&run.session, &run.channel) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(FmqkdResult { result }));
                FmqkdStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                if e.source.is_channel() {
                    FmqkdStatus::Channel
                } else {
                    status_of(&e.source)
                }
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_result_free(res: *mut FmqkdResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Counts from a finished session. Any out pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_result_counts(
    res: *const FmqkdResult,
    clicks: *mut u64,
    sifted_bits: *mut u64,
    mismatches: *mut u64,
) -> FmqkdStatus {
    guard(|| {
        non_null!(res);
        let r = &(*res).result;
        for (p, v) in [(clicks, r.clicks), (sifted_bits, r.sifted_bits() as u64), (mismatches, r.mismatches)] {
            if !p.is_null() {
                *p = v;
            }
        }
        FmqkdStatus::Ok
    })
}

/// Error rate over the full sifted key; UNDEFINED_RATE when it is empty.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_result_error_rate(res: *const FmqkdResult, out: *mut f64) -> FmqkdStatus {
    guard(|| {
        non_null!(res, out);
        write_f64(out, (*res).result.measured_er.ok_or(Error::UndefinedRate("sifted key is empty")))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_result_sift_rate(res: *const FmqkdResult, out: *mut f64) -> FmqkdStatus {
    guard(|| {
        non_null!(res, out);
        *out = (*res).result.sift_rate_per_1000();
        FmqkdStatus::Ok
    })
}

/// Copy a sifted key: `party` 0 for Alice, 1 for Bob. `len` receives the
/// bit count; pass a null `buf` to query it.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_result_sifted_key(
    res: *const FmqkdResult,
    party: u8,
    buf: *mut u8,
    cap: usize,
    len: *mut usize,
) -> FmqkdStatus {
    guard(|| {
        non_null!(res, len);
        let r = &(*res).result;
        let key = match party {
            0 => &r.sifted_key_alice,
            1 => &r.sifted_key_bob,
            _ => {
                set_error(format!("party must be 0 or 1, got {party}"));
                return FmqkdStatus::InvalidArgument;
            }
        };
        *len = key.len();
        if buf.is_null() {
            return FmqkdStatus::Ok;
        }
        if cap < key.len() {
            set_error(format!("key needs {} bytes, buffer holds {cap}", key.len()));
            return FmqkdStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(key.as_ptr(), buf, key.len());
        FmqkdStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_visibility_from_extinction_db(extinction_db: f64, out: *mut f64) -> FmqkdStatus {
    guard(|| {
        non_null!(out);
        write_f64(out, interferometer::visibility_from_extinction_db(extinction_db))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_er_opt_from_visibility(visibility: f64, out: *mut f64) -> FmqkdStatus {
    guard(|| {
        non_null!(out);
        write_f64(out, interferometer::er_opt_from_visibility(visibility))
    })
}

fn detector_cfg(efficiency: f64, dark_prob: f64) -> fmqkd::Result<GatedDetectorConfig> {
    let cfg = GatedDetectorConfig { efficiency, dark_prob_per_gate: dark_prob, ..Default::default() };
    cfg.validate().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(cfg)
}

#[no_mangle]
pub unsafe extern "C" fn fmqkd_click_probability(
    mu_eff: f64,
    efficiency: f64,
    dark_prob: f64,
    out: *mut f64,
) -> FmqkdStatus {
    guard(|| {
        non_null!(out);
        write_f64(out, detector_cfg(efficiency, dark_prob).and_then(|c| detector::click_probability(mu_eff, &c)))
    })
}

/// Detector-induced error rate for pairs of `mu_pair` photons behind
/// `loss_db` of loss.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_er_det_analytic(
    mu_pair: f64,
    loss_db: f64,
    efficiency: f64,
    dark_prob: f64,
    visibility: f64,
    out: *mut f64,
) -> FmqkdStatus {
    guard(|| {
        non_null!(out);
        write_f64(
            out,
            detector_cfg(efficiency, dark_prob)
                .and_then(|c| detector::er_det_analytic(mu_pair, loss_db, &c, visibility)),
        )
    })
}

/// Wire bytes of a DETECTIONS frame. `written` receives the frame size;
/// pass a null `buf` to query it.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_encode_detections(
    indices: *const u64,
    count: usize,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> FmqkdStatus {
    guard(|| {
        non_null!(written);
        if count > 0 {
            non_null!(indices);
        }
        let indices = if count == 0 { Vec::new() } else { std::slice::from_raw_parts(indices, count).to_vec() };
        let bytes = match transport::encode_frame(&Message::Detections { indices }) {
            Ok(b) => b,
            Err(e) => return fail(e.into()),
        };
        *written = bytes.len();
        if buf.is_null() {
            return FmqkdStatus::Ok;
        }
        if cap < bytes.len() {
            set_error(format!("frame needs {} bytes, buffer holds {cap}", bytes.len()));
            return FmqkdStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        FmqkdStatus::Ok
    })
}

/// Write `bits` (one per byte, 0 or 1) as a key file.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_write_key_file(path: *const c_char, bits: *const u8, count: usize) -> FmqkdStatus {
    guard(|| {
        non_null!(path);
        if count > 0 {
            non_null!(bits);
        }
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let bits = if count == 0 { &[][..] } else { std::slice::from_raw_parts(bits, count) };
        match keyfile::write_key_file(Path::new(path), bits) {
            Ok(()) => FmqkdStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Read a key file. `len` receives the bit count; pass a null `buf` to
/// query it.
#[no_mangle]
pub unsafe extern "C" fn fmqkd_read_key_file(
    path: *const c_char,
    buf: *mut u8,
    cap: usize,
    len: *mut usize,
) -> FmqkdStatus {
    guard(|| {
        non_null!(path, len);
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let bits = match keyfile::read_key_file(Path::new(path)) {
            Ok(b) => b,
            Err(e) => return fail(e),
        };
        *len = bits.len();
        if buf.is_null() {
            return FmqkdStatus::Ok;
        }
        if cap < bits.len() {
            set_error(format!("key needs {} bytes, buffer holds {cap}", bits.len()));
            return FmqkdStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(bits.as_ptr(), buf, bits.len());
        FmqkdStatus::Ok
    })
}

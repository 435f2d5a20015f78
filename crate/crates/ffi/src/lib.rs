//! C interface to the semibandit simulator.
//!
//! Environments and traces are opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible call
//! returns an [`SbStatus`]; on failure the message is available from
//! [`sb_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use semibandit::config::LoadedEnvConfig;
use semibandit::envs::Environment;
use semibandit::harness::{self, RegretTrace};
use semibandit::policies::{Mode, PolicyConfig, PolicyKind};
use semibandit::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Io = 5,
    Simulation = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque environment handle.
pub struct SbEnv {
    env: Environment,
}

/// Opaque regret trace handle.
pub struct SbTrace {
    trace: RegretTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SbStatus, msg: impl Into<String>) -> SbStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> SbStatus {
    match e {
        Error::Io(_) | Error::Transactions { .. } | Error::TransactionLine { .. } => SbStatus::Io,
        Error::Config(_) | Error::UnsupportedMode { .. } => SbStatus::Config,
        Error::Round { .. } | Error::Seed { .. } => SbStatus::Simulation,
        _ => SbStatus::InvalidArgument,
    }
}

fn from_error(e: Error) -> SbStatus {
    let status = status_of(&e);
    fail(status, e.to_string())
}

fn guard<F: FnOnce() -> SbStatus>(f: F) -> SbStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SbStatus::Panic, "panic inside semibandit"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, SbStatus> {
    if p.is_null() {
        return Err(fail(SbStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(SbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an environment from TOML text. Relative paths inside the
/// description resolve against `base_dir`, or the working directory when
/// `base_dir` is null.
///
/// # Safety
/// `toml` and a non-null `base_dir` must be NUL-terminated strings; `out`
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_env_from_toml(toml: *const c_char, base_dir: *const c_char, out: *mut *mut SbEnv) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return fail(SbStatus::NullPointer, "out is null");
        }
        let text = match str_arg(toml, "toml") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let base = if base_dir.is_null() {
            "."
        } else {
            match str_arg(base_dir, "base_dir") {
                Ok(s) => s,
                Err(s) => return s,
            }
        };
        match LoadedEnvConfig::from_toml_str(text, base).and_then(|c| c.build()) {
            Ok(env) => {
                *out = Box::into_raw(Box::new(SbEnv { env }));
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Builds an environment from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_env_from_file(path: *const c_char, out: *mut *mut SbEnv) -> SbStatus {
    guard(|| {
        if out.is_null() {
            return fail(SbStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        match LoadedEnvConfig::from_file(path).and_then(|c| c.build()) {
            Ok(env) => {
                *out = Box::into_raw(Box::new(SbEnv { env }));
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `env` must be null or a handle from `sb_env_from_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_env_free(env: *mut SbEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of arms, or 0 for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_env_arm_count(env: *const SbEnv) -> usize {
    env.as_ref().map_or(0, |e| e.env.n())
}

/// Value of the best action under the true means.
///
/// # Safety
/// `env` must be null or a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_env_optimal_value(env: *const SbEnv, out: *mut f64) -> SbStatus {
    match (env.as_ref(), out.is_null()) {
        (Some(e), false) => {
            *out = e.env.instance().optimal_value();
            SbStatus::Ok
        }
        _ => fail(SbStatus::NullPointer, "env or out is null"),
    }
}

/// Runs `policy` (`escb-c`, `escb-c-sparse`, `escb-c-v`, `cucb-v`,
/// `cucb-kl`) in `mode` (`exact`, `greedy`, `lovasz`; null means exact)
/// for `horizon` rounds.
///
/// # Safety
/// `env` must be a live handle, `policy` and a non-null `mode`
/// NUL-terminated strings, and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sb_run(
    env: *const SbEnv,
    policy: *const c_char,
    mode: *const c_char,
    horizon: u64,
    seed: u64,
    out: *mut *mut SbTrace,
) -> SbStatus {
    guard(|| {
        let Some(env) = env.as_ref() else {
            return fail(SbStatus::NullPointer, "env is null");
        };
        if out.is_null() {
            return fail(SbStatus::NullPointer, "out is null");
        }
        let kind: PolicyKind = match str_arg(policy, "policy").map(str::parse) {
            Ok(Ok(k)) => k,
            Ok(Err(e)) => return from_error(e),
            Err(s) => return s,
        };
        let mode: Mode = if mode.is_null() {
            Mode::Exact
        } else {
            match str_arg(mode, "mode").map(str::parse) {
                Ok(Ok(m)) => m,
                Ok(Err(e)) => return from_error(e),
                Err(s) => return s,
            }
        };
        match harness::run(&PolicyConfig::new(kind, mode), &env.env, horizon, seed) {
            Ok(trace) => {
                *out = Box::into_raw(Box::new(SbTrace { trace }));
                SbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of rounds in the trace, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_trace_len(trace: *const SbTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.records.len())
}

/// Copies the cumulative regret of every round into `buf`, which must hold
/// at least `sb_trace_len` values.
///
/// # Safety
/// `trace` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sb_trace_regret(trace: *const SbTrace, buf: *mut f64, len: usize) -> SbStatus {
    let Some(t) = trace.as_ref() else {
        return fail(SbStatus::NullPointer, "trace is null");
    };
    if buf.is_null() {
        return fail(SbStatus::NullPointer, "buf is null");
    }
    let recs = &t.trace.records;
    if len < recs.len() {
        return fail(SbStatus::BufferTooSmall, format!("need {} values, got {len}", recs.len()));
    }
    let dst = std::slice::from_raw_parts_mut(buf, recs.len());
    for (d, r) in dst.iter_mut().zip(recs) {
        *d = r.cum_regret;
    }
    SbStatus::Ok
}

/// Writes the trace as CSV (`seed,t,action,gap,cum_regret`).
///
/// # Safety
/// `trace` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sb_trace_write_csv(trace: *const SbTrace, path: *const c_char) -> SbStatus {
    guard(|| {
        let Some(t) = trace.as_ref() else {
            return fail(SbStatus::NullPointer, "trace is null");
        };
        let path = match str_arg(path, "path") {
            Ok(s) => s,
            Err(s) => return s,
        };
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(Path::new(path))?);
            harness::write_traces_csv(std::slice::from_ref(&t.trace), &mut w)?;
            w.flush()
        };
        match write() {
            Ok(()) => SbStatus::Ok,
            Err(e) => fail(SbStatus::Io, format!("{path}: {e}")),
        }
    })
}

/// # Safety
/// `trace` must be null or a handle from [`sb_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sb_trace_free(trace: *mut SbTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Largest `x ∈ [p, 1]` with `n · kl(p, x) ≤ budget`.
#[no_mangle]
pub extern "C" fn sb_kl_index(p: f64, n: u64, budget: f64) -> f64 {
    semibandit::confidence::kl_index(p, n, budget)
}

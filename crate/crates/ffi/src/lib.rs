//! C ABI over `rdasim`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! and released by the matching `*_free`. Every fallible call returns an
//! [`RdaStatus`]; on failure the message is kept per thread and can be
//! fetched with [`rda_last_error`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rdasim::canbus::{self, CanLabel, CanLog, CanMessage, OrdF64, TransitionModel};
use rdasim::config::{Profile, ScenarioFile};
use rdasim::detect::{self, AutoencoderModel};
use rdasim::engine::{Simulation, VehicleKind};
use rdasim::metrics;
use rdasim::network::Lane;
use rdasim::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    RuntimeAbort = 4,
    Io = 5,
    LengthMismatch = 6,
    Panic = 7,
}

/// Lane codes in [`RdaVehicle::lane`]: main lanes count from 0 at the
/// right edge; ramps use these negative codes.
pub const RDA_LANE_ONRAMP: i32 = -1;
pub const RDA_LANE_OFFRAMP: i32 = -2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdaVehicle {
    pub id: u64,
    /// 0 human, 1 ACC, 2 compromised ACC.
    pub kind: u8,
    pub attack_active: u8,
    pub lane: i32,
    pub position_m: f64,
    pub speed_mps: f64,
    pub accel_mps2: f64,
}

pub struct RdaSimulation {
    sim: Simulation,
}

pub struct RdaModel {
    model: AutoencoderModel,
}

pub struct RdaTransition {
    model: TransitionModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> RdaStatus {
    match e {
        _ if e.is_runtime_abort() => RdaStatus::RuntimeAbort,
        Error::Io(_) => RdaStatus::Io,
        Error::LengthMismatch { .. } | Error::WrongLength { .. } => RdaStatus::LengthMismatch,
        Error::TraceTooShort { .. } | Error::NonPositiveSpeed(_) | Error::WindowOutOfRange { .. } => {
            RdaStatus::InvalidArgument
        }
        _ => RdaStatus::Config,
    }
}

struct Fail(RdaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RdaStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RdaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RdaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RdaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(RdaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rda_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// in bytes, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rda_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Creates a simulation from a scenario document (JSON). A null `config`
/// gives the desk defaults.
///
/// # Safety
/// `config` must be null or a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rda_simulation_new(config: *const c_char, out: *mut *mut RdaSimulation) -> RdaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let file =
            if config.is_null() { ScenarioFile::default() } else { ScenarioFile::parse(str_arg(config, "config")?)? };
        let cfg = file.resolve(Profile::Desk)?;
        let sim = Simulation::new(&cfg)?;
        *out = Box::into_raw(Box::new(RdaSimulation { sim }));
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a handle from [`rda_simulation_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn rda_simulation_free(sim: *mut RdaSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances `steps` time steps. Stops early on a runtime abort.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rda_simulation_step(sim: *mut RdaSimulation, steps: u64) -> RdaStatus {
    guard(|| {
        let sim = out_arg(sim, "sim")?;
        for _ in 0..steps {
            sim.sim.step()?;
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `time` valid.
#[no_mangle]
pub unsafe extern "C" fn rda_simulation_time(sim: *const RdaSimulation, time: *mut f64) -> RdaStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        *out_arg(time, "time")? = sim.sim.time();
        Ok(())
    })
}

fn lane_code(l: Lane) -> i32 {
    match l {
        Lane::Main(i) => i as i32,
        Lane::OnRamp => RDA_LANE_ONRAMP,
        Lane::OffRamp => RDA_LANE_OFFRAMP,
    }
}

/// Copies up to `cap` vehicles into `buf` and stores the number of
/// vehicles on the network in `count` (which may exceed `cap`).
///
/// # Safety
/// `buf` must point to `cap` writable entries (or be null with `cap == 0`).
#[no_mangle]
pub unsafe extern "C" fn rda_simulation_vehicles(
    sim: *const RdaSimulation,
    buf: *mut RdaVehicle,
    cap: usize,
    count: *mut usize,
) -> RdaStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let count = out_arg(count, "count")?;
        let vs = sim.sim.vehicles();
        *count = vs.len();
        if cap > 0 && buf.is_null() {
            return Err(null("buf"));
        }
        for (i, v) in vs.iter().take(cap).enumerate() {
            let kind = match v.kind {
                VehicleKind::Human => 0,
                VehicleKind::Acc => 1,
                VehicleKind::CompromisedAcc => 2,
            };
            *buf.add(i) = RdaVehicle {
                id: v.id,
                kind,
                attack_active: v.attack_active as u8,
                lane: lane_code(v.lane),
                position_m: v.x,
                speed_mps: v.speed,
                accel_mps2: v.accel,
            };
        }
        Ok(())
    })
}

/// Writes the trajectories recorded so far as CSV.
///
/// # Safety
/// `sim` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rda_simulation_write_csv(sim: *const RdaSimulation, path: *const c_char) -> RdaStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let path = str_arg(path, "path")?;
        let mut w = BufWriter::new(File::create(Path::new(path)).map_err(Error::from)?);
        sim.sim.store().write_csv(&mut w)?;
        w.flush().map_err(Error::from)?;
        Ok(())
    })
}

/// Average attack cost, USD per km-hour; speeds in m/s.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rda_aac(v_base: f64, v_att: f64, throughput: f64, vot: f64, out: *mut f64) -> RdaStatus {
    guard(|| {
        *out_arg(out, "out")? = metrics::aac(v_base, v_att, throughput, vot)?;
        Ok(())
    })
}

/// Loads a detector model written by `rdasim detector train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rda_model_load(path: *const c_char, out: *mut *mut RdaModel) -> RdaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = AutoencoderModel::load(Path::new(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(RdaModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`rda_model_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn rda_model_free(model: *mut RdaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn rda_model_threshold(model: *const RdaModel, out: *mut f64) -> RdaStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_arg(out, "out")? = m.model.lmax;
        Ok(())
    })
}

/// Scores a raw speed series (m/s) and reports whether it is flagged
/// (`malicious` set to 1) against the model threshold.
///
/// # Safety
/// `speeds` must point to `n` values; `score` and `malicious` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rda_model_score(
    model: *const RdaModel,
    speeds: *const f64,
    n: usize,
    score: *mut f64,
    malicious: *mut u8,
) -> RdaStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let speeds = slice_arg(speeds, n, "speeds")?;
        let s = detect::score_vehicle(&m.model, speeds)?;
        *out_arg(score, "score")? = s;
        *out_arg(malicious, "malicious")? = detect::classify(s, m.model.lmax).is_positive() as u8;
        Ok(())
    })
}

fn id_log(ids: &[u32]) -> CanLog {
    CanLog {
        messages: ids
            .iter()
            .enumerate()
            .map(|(i, &id)| CanMessage { timestamp: OrdF64(i as f64), id, payload: [0; 8], label: CanLabel::Benign })
            .collect(),
    }
}

/// Learns the set of adjacent ID pairs of a benign ID sequence.
///
/// # Safety
/// `ids` must point to `n` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rda_transition_train(ids: *const u32, n: usize, out: *mut *mut RdaTransition) -> RdaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = canbus::train_transition(&id_log(slice_arg(ids, n, "ids")?))?;
        *out = Box::into_raw(Box::new(RdaTransition { model }));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle from [`rda_transition_train`], freed once.
#[no_mangle]
pub unsafe extern "C" fn rda_transition_free(t: *mut RdaTransition) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Writes 1 into `flags[i]` when message `i` forms an unseen pair with its
/// predecessor, else 0.
///
/// # Safety
/// `ids` and `flags` must each point to `n` entries.
#[no_mangle]
pub unsafe extern "C" fn rda_transition_score(
    t: *const RdaTransition,
    ids: *const u32,
    n: usize,
    flags: *mut u8,
) -> RdaStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transition"))?;
        let labels = canbus::score_transition(&t.model, &id_log(slice_arg(ids, n, "ids")?));
        if n > 0 && flags.is_null() {
            return Err(null("flags"));
        }
        for (i, l) in labels.iter().enumerate() {
            *flags.add(i) = l.is_positive() as u8;
        }
        Ok(())
    })
}

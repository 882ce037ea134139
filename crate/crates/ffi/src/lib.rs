//! C interface to voxresp.
//!
//! Every function returns a [`VoxStatus`]; on failure the message is kept per
//! thread and read with [`vox_last_error_message`]. Objects are opaque
//! handles released with their `_free` function. Strings returned through
//! `char **` out-parameters belong to the caller and are released with
//! [`vox_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use voxresp::analyzer::{self, RecordingPair};
use voxresp::fo_tracker;
use voxresp::orthomix::CombinationCatalog;
use voxresp::service::{Service, ServiceConfig, SimRig};
use voxresp::rt_engine::SimClock;
use voxresp::session;
use voxresp::stimulus::{self, StimulusSpec, TestSignal};
use voxresp::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidState = 3,
    Storage = 4,
    Analysis = 5,
    Device = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

pub struct VoxCatalog {
    inner: Arc<CombinationCatalog>,
}

pub struct VoxSignal {
    inner: TestSignal,
}

pub struct VoxService {
    inner: Service,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<(VoxStatus, CString)>> = const { RefCell::new(None) };
}

fn status_of(e: &Error) -> VoxStatus {
    match e {
        Error::InvalidState(_) | Error::NotSaved(_) | Error::AnalysisPending(_) | Error::AlreadyCalibrated | Error::EngineBusy => {
            VoxStatus::InvalidState
        }
        Error::Io(_) | Error::Wav(_) | Error::NothingToSave => VoxStatus::Storage,
        Error::NoVoicing
        | Error::InsufficientVoicing { .. }
        | Error::LoopbackMismatch { .. }
        | Error::AnalysisFailed { .. }
        | Error::UnstableLevel { .. } => VoxStatus::Analysis,
        Error::DeviceUnavailable(_) => VoxStatus::Device,
        _ => VoxStatus::InvalidArgument,
    }
}

fn set_error(status: VoxStatus, msg: String) -> VoxStatus {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|l| *l.borrow_mut() = Some((status, c)));
    status
}

fn fail(e: Error) -> VoxStatus {
    set_error(status_of(&e), format!("[{}] {e}", e.code()))
}

/// Run `f`, turning panics into `Panic` and clearing the last error on success.
fn guard(f: impl FnOnce() -> Result<(), VoxStatus>) -> VoxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|l| *l.borrow_mut() = None);
            VoxStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => set_error(VoxStatus::Panic, "internal panic".into()),
    }
}

fn null(what: &str) -> VoxStatus {
    set_error(VoxStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, VoxStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| set_error(VoxStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn to_c_string(s: String) -> Result<*mut c_char, VoxStatus> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| set_error(VoxStatus::InvalidArgument, "string contains NUL".into()))
}

/// Parse a spec, taking unspecified fields from the default spec.
fn parse_spec(text: &str) -> Result<StimulusSpec, VoxStatus> {
    let bad = |e: serde_json::Error| fail(Error::InvalidInput(format!("spec: {e}")));
    let given: serde_json::Value = serde_json::from_str(text).map_err(bad)?;
    let serde_json::Value::Object(given) = given else {
        return Err(fail(Error::InvalidInput("spec must be a JSON object".into())));
    };
    let mut merged = serde_json::to_value(StimulusSpec::default()).map_err(bad)?;
    if let serde_json::Value::Object(m) = &mut merged {
        m.extend(given);
    }
    serde_json::from_value(merged).map_err(bad)
}

fn json_out<T: serde::Serialize>(value: &T, out: *mut *mut c_char) -> Result<(), VoxStatus> {
    let text = serde_json::to_string(value).map_err(|e| fail(e.into()))?;
    // SAFETY: checked non-null by callers.
    unsafe { *out = to_c_string(text)? };
    Ok(())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn vox_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Status of the last failed call on this thread, `VOX_STATUS_OK` if none.
#[no_mangle]
pub extern "C" fn vox_last_error_code() -> VoxStatus {
    LAST_ERROR.with(|l| l.borrow().as_ref().map_or(VoxStatus::Ok, |e| e.0))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vox_last_error_message() -> *const c_char {
    LAST_ERROR.with(|l| l.borrow().as_ref().map_or(ptr::null(), |e| e.1.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vox_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in catalog of kernel combinations (44100 Hz).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vox_catalog_default(out: *mut *mut VoxCatalog) -> VoxStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let c = Box::new(VoxCatalog {
            inner: Arc::new(CombinationCatalog::default_catalog()),
        });
        *out = Box::into_raw(c);
        Ok(())
    })
}

/// Load a catalog JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vox_catalog_load(path: *const c_char, out: *mut *mut VoxCatalog) -> VoxStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let p = str_arg(path, "path")?;
        let c = CombinationCatalog::load(&PathBuf::from(p)).map_err(fail)?;
        *out = Box::into_raw(Box::new(VoxCatalog { inner: Arc::new(c) }));
        Ok(())
    })
}

/// # Safety
/// `c` must come from a `vox_catalog_*` constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vox_catalog_free(c: *mut VoxCatalog) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Generate a test signal from a JSON stimulus spec. Missing fields take
/// their default values; NULL means the default spec.
///
/// # Safety
/// `catalog` must be a live handle, `spec_json` NULL or a NUL-terminated
/// string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vox_signal_generate(
    catalog: *const VoxCatalog,
    spec_json: *const c_char,
    out: *mut *mut VoxSignal,
) -> VoxStatus {
    if catalog.is_null() {
        return null("catalog");
    }
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let spec = if spec_json.is_null() {
            StimulusSpec::default()
        } else {
            parse_spec(str_arg(spec_json, "spec_json")?)?
        };
        let sig = stimulus::make_test_signal(&spec, &(*catalog).inner).map_err(fail)?;
        *out = Box::into_raw(Box::new(VoxSignal { inner: sig }));
        Ok(())
    })
}

/// Number of samples in the signal.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vox_signal_len(s: *const VoxSignal) -> usize {
    if s.is_null() {
        return 0;
    }
    (*s).inner.samples.len()
}

/// Copy the waveform (`which` = 0) or the modulation in cents (`which` = 1)
/// into `buf`. `written` receives the full length even when `cap` is too small.
///
/// # Safety
/// `s` must be a live handle, `buf` must hold `cap` doubles, `written` valid.
#[no_mangle]
pub unsafe extern "C" fn vox_signal_copy(
    s: *const VoxSignal,
    which: u32,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> VoxStatus {
    if s.is_null() {
        return null("signal");
    }
    if buf.is_null() || written.is_null() {
        return null("buffer");
    }
    guard(|| {
        let src = match which {
            0 => &(*s).inner.samples,
            1 => &(*s).inner.m_cents,
            _ => return Err(set_error(VoxStatus::InvalidArgument, format!("unknown channel {which}"))),
        };
        *written = src.len();
        if cap < src.len() {
            return Err(set_error(
                VoxStatus::BufferTooSmall,
                format!("need {} samples, buffer holds {cap}", src.len()),
            ));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
        Ok(())
    })
}

/// # Safety
/// `s` must come from [`vox_signal_generate`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vox_signal_free(s: *mut VoxSignal) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// f_o of one analysis segment (`n` samples, window length `n - 1`) searched
/// in `[lo, hi]` Hz.
///
/// # Safety
/// `samples` must hold `n` doubles; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_fo_estimate(
    samples: *const f64,
    n: usize,
    fs: f64,
    lo: f64,
    hi: f64,
    fo_hz: *mut f64,
    quality: *mut f64,
) -> VoxStatus {
    if samples.is_null() || fo_hz.is_null() || quality.is_null() {
        return null("argument");
    }
    guard(|| {
        let seg = std::slice::from_raw_parts(samples, n);
        let e = fo_tracker::estimate_if_frame(seg, fs, lo, hi).map_err(fail)?;
        *fo_hz = e.fo_hz;
        *quality = e.quality;
        Ok(())
    })
}

/// Analyze a stereo WAV (voice, loop-back). The spec comes from `spec_json`
/// or, when NULL, from the sidecar next to the file. `out_json` receives the
/// result document.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vox_analyze_wav(
    catalog: *const VoxCatalog,
    wav_path: *const c_char,
    spec_json: *const c_char,
    out_json: *mut *mut c_char,
) -> VoxStatus {
    if catalog.is_null() {
        return null("catalog");
    }
    if out_json.is_null() {
        return null("out_json");
    }
    guard(|| {
        let path = PathBuf::from(str_arg(wav_path, "wav_path")?);
        let spec: StimulusSpec = if spec_json.is_null() {
            session::read_sidecar(&session::sidecar_path_for(&path))
                .map_err(fail)?
                .spec
                .ok_or_else(|| fail(Error::InvalidInput("sidecar has no spec".into())))?
        } else {
            parse_spec(str_arg(spec_json, "spec_json")?)?
        };
        let data = session::wav::read_wav(&path).map_err(fail)?;
        if data.channels.len() < 2 {
            return Err(fail(Error::InvalidInput("recording is not stereo".into())));
        }
        let mut ch = data.channels.into_iter();
        let rec = RecordingPair {
            voice: ch.next().unwrap_or_default(),
            loopback: ch.next().unwrap_or_default(),
            fs: data.fs,
            spec,
            calibration_gain: None,
        };
        let result = analyzer::analyze_recording(&rec, &(*catalog).inner).map_err(fail)?;
        json_out(&result, out_json)
    })
}

/// Open a control service on the simulated device. `speed` scales the device
/// clock relative to real time.
///
/// # Safety
/// `root` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vox_service_open(root: *const c_char, speed: f64, out: *mut *mut VoxService) -> VoxStatus {
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let root = str_arg(root, "root")?;
        if !(speed > 0.0) {
            return Err(set_error(VoxStatus::InvalidArgument, "speed must be positive".into()));
        }
        let mut cfg = ServiceConfig::new(root);
        cfg.rig = SimRig {
            clock: SimClock::Paced { speed },
            ..SimRig::default()
        };
        let svc = Service::new(cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(VoxService { inner: svc }));
        Ok(())
    })
}

/// Execute one protocol message; `out_reply` receives the reply JSON. A
/// refused command still returns `VOX_STATUS_OK` with `"ok": false` inside.
///
/// # Safety
/// Pointers must be valid; `request` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn vox_service_handle(
    svc: *mut VoxService,
    request: *const c_char,
    out_reply: *mut *mut c_char,
) -> VoxStatus {
    if svc.is_null() {
        return null("service");
    }
    if out_reply.is_null() {
        return null("out_reply");
    }
    guard(|| {
        let text = str_arg(request, "request")?;
        let reply = (*svc).inner.handle_text(text);
        json_out(&reply, out_reply)
    })
}

/// Advance loops and analyses; `out_events` receives a JSON array of events.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_service_poll(svc: *mut VoxService, out_events: *mut *mut c_char) -> VoxStatus {
    if svc.is_null() {
        return null("service");
    }
    if out_events.is_null() {
        return null("out_events");
    }
    guard(|| {
        let s = &mut (*svc).inner;
        s.poll();
        json_out(&s.drain_events(), out_events)
    })
}

/// # Safety
/// `svc` must come from [`vox_service_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vox_service_free(svc: *mut VoxService) {
    if !svc.is_null() {
        drop(Box::from_raw(svc));
    }
}

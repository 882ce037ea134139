use std::ffi::{CStr, CString};
use std::ptr;

use voxresp_ffi::*;

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { vox_string_free(p) };
    s
}

fn last_message() -> String {
    let p = vox_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(vox_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/voxresp.h")).unwrap();
    for name in [
        "VOX_STATUS_OK",
        "VOX_STATUS_BUFFER_TOO_SMALL",
        "typedef struct VoxCatalog VoxCatalog",
        "vox_catalog_default",
        "vox_signal_generate",
        "vox_signal_copy",
        "vox_fo_estimate",
        "vox_analyze_wav",
        "vox_service_open",
        "vox_service_handle",
        "vox_service_poll",
        "vox_string_free",
        "vox_last_error_message",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn null_pointers_are_reported() {
    let st = unsafe { vox_catalog_default(ptr::null_mut()) };
    assert_eq!(st, VoxStatus::NullPointer);
    assert_eq!(vox_last_error_code(), VoxStatus::NullPointer);
    assert!(last_message().contains("null"));
    assert_eq!(unsafe { vox_signal_len(ptr::null()) }, 0);
    // freeing null is a no-op
    unsafe {
        vox_catalog_free(ptr::null_mut());
        vox_signal_free(ptr::null_mut());
        vox_service_free(ptr::null_mut());
        vox_string_free(ptr::null_mut());
    }
}

#[test]
fn generate_and_copy_signal() {
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { vox_catalog_default(&mut cat) }, VoxStatus::Ok);
    let spec = CString::new(r#"{"duration_s": 2.0}"#).unwrap();
    let mut sig = ptr::null_mut();
    let st = unsafe { vox_signal_generate(cat, spec.as_ptr(), &mut sig) };
    assert_eq!(st, VoxStatus::Ok, "{}", if st == VoxStatus::Ok { String::new() } else { last_message() });
    let n = unsafe { vox_signal_len(sig) };
    assert!(n > 0);

    let mut small = vec![0.0; 10];
    let mut written = 0usize;
    let st = unsafe { vox_signal_copy(sig, 0, small.as_mut_ptr(), small.len(), &mut written) };
    assert_eq!(st, VoxStatus::BufferTooSmall);
    assert_eq!(written, n);

    let mut buf = vec![0.0; n];
    assert_eq!(unsafe { vox_signal_copy(sig, 0, buf.as_mut_ptr(), n, &mut written) }, VoxStatus::Ok);
    let peak = buf.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(peak > 0.1 && peak <= 1.0);
    assert_eq!(vox_last_error_code(), VoxStatus::Ok);

    let st = unsafe { vox_signal_copy(sig, 7, buf.as_mut_ptr(), n, &mut written) };
    assert_eq!(st, VoxStatus::InvalidArgument);

    unsafe {
        vox_signal_free(sig);
        vox_catalog_free(cat);
    }
}

#[test]
fn bad_spec_is_invalid_argument() {
    let mut cat = ptr::null_mut();
    unsafe { vox_catalog_default(&mut cat) };
    let spec = CString::new("{not json").unwrap();
    let mut sig = ptr::null_mut();
    assert_eq!(unsafe { vox_signal_generate(cat, spec.as_ptr(), &mut sig) }, VoxStatus::InvalidArgument);
    assert!(sig.is_null());
    unsafe { vox_catalog_free(cat) };
}

#[test]
fn fo_estimate_of_a_sine() {
    let fs = 44100.0;
    let n = 2049;
    let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 187.0 * i as f64 / fs).sin()).collect();
    let (mut fo, mut q) = (0.0, 0.0);
    let st = unsafe { vox_fo_estimate(x.as_ptr(), n, fs, 80.0, 400.0, &mut fo, &mut q) };
    assert_eq!(st, VoxStatus::Ok);
    assert!((fo - 187.0).abs() < 0.05, "fo {fo}");
    assert!(q > 0.9);
}

#[test]
fn analyze_missing_file_is_storage_error() {
    let mut cat = ptr::null_mut();
    unsafe { vox_catalog_default(&mut cat) };
    let path = CString::new("/nonexistent/x.wav").unwrap();
    let spec = CString::new("{}").unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { vox_analyze_wav(cat, path.as_ptr(), spec.as_ptr(), &mut out) };
    assert_eq!(st, VoxStatus::Storage);
    assert!(out.is_null());
    unsafe { vox_catalog_free(cat) };
}

#[test]
fn analyze_a_saved_recording_from_its_sidecar() {
    use voxresp::analyzer::RecordingPair;
    use voxresp::orthomix::CombinationCatalog;
    use voxresp::session::{SaveContext, SessionStore};
    use voxresp::sim_subject::{self, SubjectModel};
    use voxresp::stimulus::{self, StimulusSpec};

    let dir = tempfile::tempdir().unwrap();
    let catalog = CombinationCatalog::default_catalog();
    let spec = StimulusSpec::default();
    let test = stimulus::make_test_signal(&spec, &catalog).unwrap();
    let model = SubjectModel::smoothed(spec.target_fo, 0.14, 0.06, 1.0, spec.fs);
    let voice = sim_subject::simulate_subject(&test, &model, 1.0).unwrap();
    let rec = RecordingPair {
        voice,
        loopback: test.samples,
        fs: spec.fs,
        spec,
        calibration_gain: None,
    };
    let mut store = SessionStore::open(dir.path()).unwrap();
    let ctx = SaveContext {
        actor: "c".into(),
        calibration: None,
        device: None,
        presentation: None,
        loop_report: None,
    };
    let id = store.save_recording(&rec, &ctx).unwrap();

    let mut cat = ptr::null_mut();
    unsafe { vox_catalog_default(&mut cat) };
    let path = CString::new(store.wav_path(&id).to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { vox_analyze_wav(cat, path.as_ptr(), ptr::null(), &mut out) };
    assert_eq!(st, VoxStatus::Ok, "{}", last_message());
    let doc: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    let d = &doc["decomposition"];
    let (lag, linear) = (d["lag"].as_array().unwrap(), d["linear"].as_array().unwrap());
    let peak = (0..lag.len())
        .max_by(|&a, &b| linear[a].as_f64().unwrap().total_cmp(&linear[b].as_f64().unwrap()))
        .unwrap();
    let at = lag[peak].as_f64().unwrap();
    assert!((at - 0.14).abs() <= 0.01, "{at}");
    unsafe { vox_catalog_free(cat) };
}

#[test]
fn service_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut svc = ptr::null_mut();
    assert_eq!(unsafe { vox_service_open(root.as_ptr(), 50.0, &mut svc) }, VoxStatus::Ok);

    let req = CString::new(r#"{"id": 1, "cmd": "get_state"}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { vox_service_handle(svc, req.as_ptr(), &mut out) }, VoxStatus::Ok);
    let reply: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(reply["id"], 1);
    assert_eq!(reply["ok"], true);

    // refused commands are still a successful call
    let req = CString::new(r#"{"id": 2, "cmd": "save"}"#).unwrap();
    assert_eq!(unsafe { vox_service_handle(svc, req.as_ptr(), &mut out) }, VoxStatus::Ok);
    let reply: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(reply["ok"], false);
    assert!(reply["error"]["code"].is_string());

    assert_eq!(unsafe { vox_service_poll(svc, &mut out) }, VoxStatus::Ok);
    let events: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert!(events.is_array());

    let bad = unsafe { vox_service_open(root.as_ptr(), 0.0, &mut svc) };
    assert_eq!(bad, VoxStatus::InvalidArgument);
    unsafe { vox_service_free(svc) };
}

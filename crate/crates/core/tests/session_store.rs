//! Storage root behaviour: artifacts survive a reopen, names never repeat,
//! analyses exist only for saved recordings, and the log replays.

use std::collections::HashSet;
use std::fs;

use chrono::{TimeZone, Utc};
use serde_json::{json, Value};
use voxresp::analyzer::RecordingPair;
use voxresp::calibration::{Calibrator, LevelHistory, ReferenceLevel};
use voxresp::orthomix::CombinationCatalog;
use voxresp::session::{self, wav, ArtifactKind, Presentation, SaveContext, SessionStore};
use voxresp::sim_subject::{self, SubjectModel};
use voxresp::stimulus::{self, StimulusSpec};
use voxresp::Error;

fn context() -> SaveContext {
    let mut h = LevelHistory::new();
    for i in 0..=40 {
        h.push(i as f64 * 0.05, -31.5);
    }
    let gain = Calibrator::new().bind(&h, ReferenceLevel::Spl80, Utc::now()).unwrap().clone();
    SaveContext {
        actor: "tester".into(),
        calibration: Some(gain),
        device: Some("sim".into()),
        presentation: Some(Presentation::Loudspeaker),
        loop_report: None,
    }
}

fn recording(catalog: &CombinationCatalog, voiced: bool) -> RecordingPair {
    let spec = StimulusSpec {
        seed: 8,
        ..StimulusSpec::default()
    };
    let test = stimulus::make_test_signal(&spec, catalog).unwrap();
    let voice = if voiced {
        let model = SubjectModel::smoothed(spec.target_fo, 0.12, 0.06, 1.0, spec.fs);
        sim_subject::simulate_subject(&test, &model, 1.0).unwrap()
    } else {
        vec![0.0; test.samples.len()]
    };
    RecordingPair {
        voice,
        loopback: test.samples,
        fs: spec.fs,
        spec,
        calibration_gain: None,
    }
}

fn as_f32(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v as f32 as f64).collect()
}

#[test]
fn recording_round_trips_through_a_reopened_store() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = CombinationCatalog::default_catalog();
    let rec = recording(&catalog, true);
    let ctx = context();
    let id = {
        let mut store = SessionStore::open(dir.path()).unwrap();
        store.save_recording(&rec, &ctx).unwrap()
    };
    let store = SessionStore::open(dir.path()).unwrap();
    let id2 = store.artifact(id.as_str()).unwrap();
    assert_eq!(store.kind_of(&id2), ArtifactKind::Recording);
    let back = store.load_recording(&id2).unwrap();
    // samples are stored as 32-bit floats
    assert_eq!(back.voice, as_f32(&rec.voice));
    assert_eq!(back.loopback, as_f32(&rec.loopback));
    assert_eq!(back.spec, rec.spec);
    assert_eq!(back.calibration_gain, ctx.calibration.as_ref().map(|g| g.offset_db));

    let sidecar = store.sidecar(&id2).unwrap();
    assert_eq!(sidecar.id, id.as_str());
    assert_eq!(sidecar.channels, ["voice", "loopback"]);
    assert_eq!(sidecar.n_samples, rec.voice.len());
    assert_eq!(sidecar.device.as_deref(), Some("sim"));
    assert_eq!(sidecar.presentation, Some(Presentation::Loudspeaker));
    assert_eq!(sidecar.calibration, ctx.calibration);
    let wav_path = store.wav_path(&id2);
    assert_eq!(wav::read_info_comment(&wav_path).unwrap().as_deref(), Some(id.as_str()));
    assert!(wav_path.starts_with(dir.path().join("recordings")));
}

#[test]
fn names_never_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let ts = Utc.with_ymd_and_hms(2024, 3, 9, 8, 7, 6).unwrap();
    let mut store = SessionStore::open(dir.path()).unwrap();
    let names: Vec<String> = (0..50).map(|_| store.allocate_name(ts, "rec")).collect();
    let unique: HashSet<&String> = names.iter().collect();
    assert_eq!(unique.len(), names.len());
    assert!(names.iter().all(|n| n.starts_with("20240309T080706000_rec")));

    // saved artifacts keep their names reserved after a reopen
    let ctx = context();
    let ids: Vec<String> = (0..5)
        .map(|_| store.save_memo(&[0.1, -0.1, 0.2], 44100.0, &ctx).unwrap().as_str().to_string())
        .collect();
    assert_eq!(ids.iter().collect::<HashSet<_>>().len(), 5);
    let mut reopened = SessionStore::open(dir.path()).unwrap();
    for id in &ids {
        let (stem, _) = id.rsplit_once("_memo").unwrap();
        let ts = chrono::NaiveDateTime::parse_from_str(stem, "%Y%m%dT%H%M%S%3f").unwrap().and_utc();
        let fresh = reopened.allocate_name(ts, "memo");
        assert!(!ids.contains(&fresh), "{fresh} reused");
    }
    assert_eq!(session::sanitize_kind("../../x"), "x");
}

#[test]
fn analyses_exist_only_for_saved_recordings() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = CombinationCatalog::default_catalog();
    let mut store = SessionStore::open(dir.path()).unwrap();
    assert!(matches!(store.analysis_by_name("nope"), Err(Error::NotSaved(_))));

    let memo = store.save_memo(&[0.5; 100], 44100.0, &context()).unwrap();
    assert!(store.analysis_job(&memo).is_err());

    let id = store.save_recording(&recording(&catalog, true), &context()).unwrap();
    assert!(matches!(store.analysis(&id), Err(Error::AnalysisPending(_))));
    let job = store.analysis_job(&id).unwrap();
    let result = job.run(&catalog).unwrap();
    // unvoiced frames hold NaN, so compare the documents
    let stored = store.analysis_by_name(id.as_str()).unwrap();
    assert_eq!(serde_json::to_value(&stored).unwrap(), serde_json::to_value(&result).unwrap());
    let lag = result.decomposition.linear_peak_lag();
    assert!((lag - 0.12).abs() <= 0.01, "{lag}");

    // the stored document is what the control panel plots
    let doc: Value = serde_json::from_str(&fs::read_to_string(store.result_path(&id)).unwrap()).unwrap();
    let d = &doc["decomposition"];
    let n = d["lag"].as_array().unwrap().len();
    for key in ["stimulation", "linear", "random_tv"] {
        assert_eq!(d[key].as_array().unwrap().len(), n);
    }
    assert_eq!(d["voiced_span"].as_array().unwrap().len(), 2);
    assert!(d["n_averages"].as_u64().unwrap() >= 3 * 4);
    assert!(doc["diagnostics"]["voice_median_fo"].as_f64().unwrap() > 0.0);

    let silent = store.save_recording(&recording(&catalog, false), &context()).unwrap();
    let err = store.analysis_job(&silent).unwrap().run(&catalog).unwrap_err();
    assert_eq!(err.code(), "no-voicing");
    match store.analysis(&silent) {
        Err(Error::AnalysisFailed { code, .. }) => assert_eq!(code, "no-voicing"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn replay_lists_artifacts_in_log_order() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = CombinationCatalog::default_catalog();
    let mut store = SessionStore::open(dir.path()).unwrap();
    let ctx = context();
    store
        .log_action("tester", "set_spec", json!({"spec": StimulusSpec { fo: 220.0, ..StimulusSpec::default() }}))
        .unwrap();
    let sig = stimulus::make_test_signal(&StimulusSpec::default(), &catalog).unwrap();
    let a = store.save_test_signal(&sig, &ctx).unwrap();
    let b = store.save_memo(&[0.25; 64], 44100.0, &ctx).unwrap();
    store.log_action("tester", "calibrate", json!({"calibration": ctx.calibration})).unwrap();

    let state = session::replay(dir.path()).unwrap();
    assert_eq!(state.entries, 4);
    let ids: Vec<&str> = state.artifacts.iter().map(|l| l.id.as_str()).collect();
    assert_eq!(ids, [a.as_str(), b.as_str()]);
    assert_eq!(state.artifacts[0].kind, ArtifactKind::TestSignal);
    assert_eq!(state.artifacts[0].sidecar.applied_gain, Some(sig.applied_gain));
    assert_eq!(state.artifacts[1].sidecar.n_samples, 64);
    assert_eq!(state.menu.spec.fo, 220.0);
    assert_eq!(state.menu.calibration, ctx.calibration);

    // a sidecar that names another artifact breaks the lineage
    let path = store.sidecar_path(&b);
    let mut side: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    side["id"] = json!("someone_else");
    fs::write(&path, side.to_string()).unwrap();
    assert!(matches!(session::replay(dir.path()), Err(Error::Validation(_))));

    // a damaged log line is reported with its line number
    let mut log = fs::read_to_string(store.log_path()).unwrap();
    log.push_str("{broken\n");
    fs::write(store.log_path(), log).unwrap();
    match session::read_log(&store.log_path()) {
        Err(Error::Parse { message, .. }) => assert!(message.starts_with("line 5"), "{message}"),
        other => panic!("{other:?}"),
    }
}

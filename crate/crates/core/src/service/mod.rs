//! Experiment control: binds calibration, stimulus generation, the audio
//! loops, storage and analysis behind the command protocol in [`protocol`].
//!
//! [`Service::handle`] serializes commands; [`Service::poll`] moves data from
//! the running loop to events and picks up finished loops and analyses.

pub mod protocol;
pub mod server;
pub mod workflow;

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::Utc;
use crossbeam::queue::ArrayQueue;
use serde_json::{json, Value};

use crate::analyzer::{AnalysisResult, RecordingPair};
use crate::calibration::{self, Calibrator, LevelHistory};
use crate::error::{Error, Result};
use crate::orthomix::CombinationCatalog;
use crate::rng::SeededRng;
use crate::rt_engine::{
    self, BlockSource, BufferSource, CaptureSink, Engine, LoopHandle, LoopMode, LoopReport, LoopbackMode,
    LoopingSource, MeterEvent, MeterSink, MicSource, NullSink, PitchEvent, PitchSink, SilenceSource, SimClock,
    SimulatedDevice, BLOCK_SIZE, MEMO_SECONDS, SAMPLE_RATE,
};
use crate::session::{self, ArtifactId, MenuState, SaveContext, SessionStore};
use crate::sim_subject::{self, SubjectModel};
use crate::stimulus::{self, StimulusSpec};

pub use protocol::{Command, ErrorBody, Event, Reply, Request};
pub use workflow::{Completion, Phase, Workflow};

/// Environment variable that overrides the storage root.
pub const ROOT_ENV: &str = "VOXRESP_ROOT";
pub const ACTOR: &str = "experimenter";
const EVENT_QUEUE: usize = 4096;
const CALIBRATION_NOISE_S: f64 = 10.0;
const ELAPSED_INTERVAL: Duration = Duration::from_millis(250);

/// Storage root: `$VOXRESP_ROOT` if set, else `fallback`.
pub fn storage_root(fallback: impl Into<PathBuf>) -> PathBuf {
    std::env::var_os(ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| fallback.into())
}

/// The simulated rig: device timing plus the simulated participant who
/// answers the microphone.
#[derive(Debug, Clone)]
pub struct SimRig {
    pub clock: SimClock,
    pub latency: usize,
    pub loopback: LoopbackMode,
    /// Voice model; `base_fo` is replaced by the target f_o of each trial.
    pub subject: SubjectModel,
    pub onset: f64,
    /// Gain from loudspeaker to microphone during calibration.
    pub room_gain: f64,
}

impl Default for SimRig {
    fn default() -> Self {
        SimRig {
            clock: SimClock::Paced { speed: 1.0 },
            latency: 0,
            loopback: LoopbackMode::Digital,
            subject: SubjectModel::smoothed(110.0, 0.15, 0.08, 1.0, SAMPLE_RATE),
            onset: 1.0,
            room_gain: 0.5,
        }
    }
}

impl SimRig {
    fn engine(&self, mic: MicSource) -> Engine {
        let dev = SimulatedDevice::new(SAMPLE_RATE, BLOCK_SIZE)
            .with_latency(self.latency)
            .with_clock(self.clock)
            .with_mic(mic);
        Engine::new(Box::new(dev), self.loopback)
    }

    fn subject_at(&self, fo: f64) -> SubjectModel {
        let mut m = self.subject.clone();
        m.base_fo = fo;
        m
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub root: PathBuf,
    pub rig: SimRig,
    /// Seeds the per-trial signal seeds.
    pub trial_seed: u64,
}

impl ServiceConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            root: root.into(),
            rig: SimRig::default(),
            trial_seed: Utc::now().timestamp_millis() as u64,
        }
    }
}

enum Running {
    Calibration {
        handle: LoopHandle<MeterSink>,
        meter: Arc<ArrayQueue<MeterEvent>>,
    },
    VoiceCheck {
        handle: LoopHandle<PitchSink>,
        pitch: Arc<ArrayQueue<PitchEvent>>,
    },
    Test {
        handle: LoopHandle<CaptureSink>,
        spec: StimulusSpec,
    },
    Playback {
        handle: LoopHandle<NullSink>,
    },
}

impl Running {
    fn mode(&self) -> LoopMode {
        match self {
            Running::Calibration { .. } => LoopMode::Calibration,
            Running::VoiceCheck { .. } => LoopMode::VoiceCheck,
            Running::Test { .. } => LoopMode::ResponseTest,
            Running::Playback { .. } => LoopMode::Playback,
        }
    }

    fn elapsed(&self) -> f64 {
        match self {
            Running::Calibration { handle, .. } => handle.elapsed(),
            Running::VoiceCheck { handle, .. } => handle.elapsed(),
            Running::Test { handle, .. } => handle.elapsed(),
            Running::Playback { handle } => handle.elapsed(),
        }
    }

    fn is_finished(&self) -> bool {
        match self {
            Running::Calibration { handle, .. } => handle.is_finished(),
            Running::VoiceCheck { handle, .. } => handle.is_finished(),
            Running::Test { handle, .. } => handle.is_finished(),
            Running::Playback { handle } => handle.is_finished(),
        }
    }

    fn stop(&self) {
        match self {
            Running::Calibration { handle, .. } => handle.stop(),
            Running::VoiceCheck { handle, .. } => handle.stop(),
            Running::Test { handle, .. } => handle.stop(),
            Running::Playback { handle } => handle.stop(),
        }
    }
}

struct Recording {
    pair: RecordingPair,
    report: LoopReport,
}

pub struct Service {
    cfg: ServiceConfig,
    workflow: Workflow,
    menu: MenuState,
    store: SessionStore,
    catalog: Arc<CombinationCatalog>,
    calibrator: Calibrator,
    history: LevelHistory,
    device: String,
    running: Option<Running>,
    recording: Option<Recording>,
    current: Option<ArtifactId>,
    workers: Vec<(ArtifactId, JoinHandle<Result<AnalysisResult>>)>,
    pink: Option<Arc<Vec<f64>>>,
    seeds: SeededRng,
    outbox: VecDeque<Event>,
    seq: u64,
    started: Instant,
    last_elapsed: Instant,
}

impl Service {
    pub fn new(cfg: ServiceConfig) -> Result<Self> {
        Self::with_catalog(cfg, Arc::new(CombinationCatalog::default_catalog()))
    }

    pub fn with_catalog(cfg: ServiceConfig, catalog: Arc<CombinationCatalog>) -> Result<Self> {
        let store = SessionStore::open(&cfg.root)?;
        let seeds = SeededRng::new(cfg.trial_seed);
        let now = Instant::now();
        Ok(Service {
            workflow: Workflow::default(),
            menu: MenuState::default(),
            store,
            catalog,
            calibrator: Calibrator::new(),
            history: LevelHistory::new(),
            device: rt_engine::list_devices()[0].clone(),
            running: None,
            recording: None,
            current: None,
            workers: Vec::new(),
            pink: None,
            seeds,
            outbox: VecDeque::new(),
            seq: 0,
            started: now,
            last_elapsed: now,
            cfg,
        })
    }

    pub fn workflow(&self) -> Workflow {
        self.workflow
    }

    pub fn menu(&self) -> &MenuState {
        &self.menu
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn current_artifact(&self) -> Option<&ArtifactId> {
        self.current.as_ref()
    }

    /// Replace the calibration level history (e.g. from a scripted meter).
    pub fn level_history_mut(&mut self) -> &mut LevelHistory {
        &mut self.history
    }

    /// Parse and execute one raw JSON message.
    pub fn handle_text(&mut self, text: &str) -> Reply {
        match serde_json::from_str::<Request>(text) {
            Ok(req) => self.handle(&req),
            Err(e) => Reply::err(Value::Null, &Error::InvalidInput(format!("malformed message: {e}"))),
        }
    }

    pub fn handle(&mut self, req: &Request) -> Reply {
        let result = Command::parse(&req.cmd, &req.params).and_then(|cmd| self.execute(&cmd));
        match result {
            Ok(payload) => Reply::ok(req.id.clone(), payload),
            Err(e) => Reply::err(req.id.clone(), &e),
        }
    }

    /// Run a command. On success the workflow advances and state-changing
    /// commands have written exactly one log line.
    pub fn execute(&mut self, cmd: &Command) -> Result<Value> {
        let next = self.workflow.next(cmd)?;
        let payload = match cmd {
            Command::ListDevices => json!({
                "devices": rt_engine::list_devices(),
                "selected": self.device,
                "fs": SAMPLE_RATE,
                "block_size": BLOCK_SIZE,
            }),
            Command::GetState => self.state_json(),
            Command::ListArtifacts => json!(self
                .store
                .artifacts()
                .into_iter()
                .map(|(id, kind)| json!({"artifact": id, "kind": kind}))
                .collect::<Vec<_>>()),
            Command::SelectDevice { name } => {
                if !rt_engine::list_devices().contains(name) {
                    return Err(Error::DeviceUnavailable(name.clone()));
                }
                self.device = name.clone();
                self.log("select_device", json!({ "device": name }))?;
                json!({ "device": name })
            }
            Command::CalibStart => {
                self.start_calibration()?;
                self.log("calib_start", Value::Null)?;
                Value::Null
            }
            Command::CalibStop => {
                self.stop_running();
                self.log("calib_stop", Value::Null)?;
                Value::Null
            }
            Command::BindReference { reference } => {
                self.drain_meter();
                let gain = self.calibrator.bind(&self.history, *reference, Utc::now())?.clone();
                self.menu.calibration = Some(gain.clone());
                self.log(
                    "calibrate",
                    json!({
                        "reference": reference.db(),
                        "measured_dbfs": gain.measured_dbfs,
                        "offset_db": gain.offset_db,
                        "calibration": gain,
                    }),
                )?;
                json!({ "calibration": gain, "text": gain.describe() })
            }
            Command::ResetCalibration => {
                self.calibrator.reset();
                self.history.clear();
                self.menu.calibration = None;
                self.log("reset_calibration", json!({ "calibration": null }))?;
                Value::Null
            }
            Command::SetSpec(update) => {
                let mut menu = self.menu.clone();
                menu.apply_update(update)?;
                self.menu = menu;
                self.log(
                    "set_spec",
                    json!({ "spec": self.menu.spec, "presentation": self.menu.presentation }),
                )?;
                json!({ "spec": self.menu.spec, "presentation": self.menu.presentation })
            }
            Command::UpdateSettings { path } => {
                let c = session::load_condition_file(path, self.catalog.combinations().len())?;
                self.menu.apply_conditions(c);
                self.store.save_conditions(&self.menu.conditions)?;
                self.log(
                    "update_settings",
                    json!({ "path": path, "conditions": self.menu.conditions, "spec": self.menu.spec }),
                )?;
                json!({ "conditions": self.menu.conditions, "spec": self.menu.spec })
            }
            Command::SaveTestSignal => {
                let sig = stimulus::make_test_signal(&self.menu.spec, &self.catalog)?;
                let id = self.store.save_test_signal(&sig, &self.save_context(None))?;
                json!({ "artifact": id })
            }
            Command::VoiceCheckStart => {
                self.start_voice_check()?;
                self.log("voice_check_start", json!({ "target_fo": self.menu.spec.target_fo }))?;
                Value::Null
            }
            Command::VoiceCheckStop => {
                self.stop_running();
                self.log("voice_check_stop", Value::Null)?;
                Value::Null
            }
            Command::TestStart => {
                let mut spec = self.menu.spec.clone();
                spec.seed = self.seeds.below(u32::MAX as usize) as u64;
                self.start_test(spec.clone())?;
                self.menu.spec = spec;
                self.recording = None;
                self.current = None;
                self.log("test_start", json!({ "spec": self.menu.spec }))?;
                json!({ "duration": self.menu.spec.duration, "seed": self.menu.spec.seed })
            }
            Command::TestStop => {
                self.stop_running();
                self.log("test_stop", Value::Null)?;
                Value::Null
            }
            Command::Play => {
                self.start_playback()?;
                self.log("play", Value::Null)?;
                Value::Null
            }
            Command::PlayStop => {
                self.stop_running();
                self.log("play_stop", Value::Null)?;
                Value::Null
            }
            Command::Save => {
                let rec = self.recording.as_ref().ok_or(Error::NothingToSave)?;
                let ctx = self.save_context(Some(rec.report.clone()));
                let id = self.store.save_recording(&rec.pair, &ctx)?;
                let job = self.store.analysis_job(&id)?;
                let catalog = Arc::clone(&self.catalog);
                let worker = std::thread::Builder::new()
                    .name("voxresp-analysis".into())
                    .spawn(move || job.run(&catalog))?;
                self.workers.push((id.clone(), worker));
                self.current = Some(id.clone());
                json!({ "artifact": id })
            }
            Command::Memo5s => {
                let id = self.record_memo()?;
                json!({ "artifact": id, "seconds": MEMO_SECONDS })
            }
            Command::GetAnalysis { artifact } => {
                let result = match artifact {
                    Some(name) => self.store.analysis_by_name(name)?,
                    None => {
                        let id = self.current.clone().ok_or_else(|| Error::NotSaved("current recording".into()))?;
                        self.store.analysis(&id)?
                    }
                };
                serde_json::to_value(result)?
            }
        };
        let changed = next != self.workflow;
        self.workflow = next;
        if changed {
            self.emit("state", self.state_json());
        }
        Ok(payload)
    }

    fn log(&mut self, action: &str, payload: Value) -> Result<()> {
        self.store.log_action(ACTOR, action, payload)?;
        Ok(())
    }

    fn save_context(&self, report: Option<LoopReport>) -> SaveContext {
        SaveContext {
            actor: ACTOR.into(),
            calibration: self.menu.calibration.clone(),
            device: Some(self.device.clone()),
            presentation: Some(self.menu.presentation),
            loop_report: report,
        }
    }

    pub fn state_json(&self) -> Value {
        json!({
            "phase": self.workflow.phase,
            "calibrated": self.workflow.calibrated,
            "calibrating": self.workflow.calibrating,
            "playing": self.workflow.playing,
            "can_save": self.workflow.can_save(),
            "can_play": self.workflow.can_play(),
            "device": self.device,
            "spec": self.menu.spec,
            "conditions": self.menu.conditions,
            "presentation": self.menu.presentation,
            "calibration": self.menu.calibration,
            "calibration_text": self.menu.calibration.as_ref().map(|g| g.describe()),
            "last_artifact": self.current,
        })
    }

    fn emit(&mut self, event: &str, data: Value) {
        let e = Event {
            seq: self.seq,
            event: event.to_string(),
            time: self.started.elapsed().as_secs_f64(),
            data,
        };
        self.seq += 1;
        self.outbox.push_back(e);
    }

    pub fn drain_events(&mut self) -> Vec<Event> {
        self.outbox.drain(..).collect()
    }

    fn pink(&mut self) -> Result<Arc<Vec<f64>>> {
        if self.pink.is_none() {
            self.pink = Some(Arc::new(calibration::generate_pink_noise(
                CALIBRATION_NOISE_S,
                SAMPLE_RATE,
                self.cfg.trial_seed,
            )?));
        }
        Ok(Arc::clone(self.pink.as_ref().expect("just generated")))
    }

    fn vowel(&self, seconds: f64) -> Result<Arc<Vec<f64>>> {
        let n = (seconds * SAMPLE_RATE) as usize;
        let model = self.cfg.rig.subject_at(self.menu.spec.target_fo);
        let mut model = model;
        model.jitter_rms = 0.0;
        Ok(Arc::new(sim_subject::simulate_voice(&vec![0.0; n], &model, 0.0, SAMPLE_RATE)?))
    }

    fn start_calibration(&mut self) -> Result<()> {
        let pink = self.pink()?;
        let engine = self.cfg.rig.engine(MicSource::Echo {
            gain: self.cfg.rig.room_gain,
        });
        let meter = Arc::new(ArrayQueue::new(EVENT_QUEUE));
        let sink = MeterSink::new(SAMPLE_RATE, Arc::clone(&meter));
        self.history.clear();
        let handle = engine.spawn(Box::new(LoopingSource::new(pink)), sink, LoopMode::Calibration, None)?;
        self.running = Some(Running::Calibration { handle, meter });
        self.last_elapsed = Instant::now();
        Ok(())
    }

    fn start_voice_check(&mut self) -> Result<()> {
        let target = Arc::new(stimulus::make_target_signal(&self.menu.spec)?);
        let engine = self.cfg.rig.engine(MicSource::Looping(self.vowel(2.0)?));
        let pitch = Arc::new(ArrayQueue::new(EVENT_QUEUE));
        let sink = PitchSink::new(SAMPLE_RATE, self.menu.spec.target_fo, Arc::clone(&pitch));
        let handle = engine.spawn(Box::new(LoopingSource::new(target)), sink, LoopMode::VoiceCheck, None)?;
        self.running = Some(Running::VoiceCheck { handle, pitch });
        self.last_elapsed = Instant::now();
        Ok(())
    }

    fn start_test(&mut self, spec: StimulusSpec) -> Result<()> {
        let test = stimulus::make_test_signal(&spec, &self.catalog)?;
        let model = self.cfg.rig.subject_at(spec.target_fo);
        let voice = sim_subject::simulate_subject(&test, &model, self.cfg.rig.onset)?;
        let engine = self.cfg.rig.engine(MicSource::Samples(Arc::new(voice)));
        let n = test.samples.len();
        let source: Box<dyn BlockSource> = Box::new(BufferSource::new(Arc::new(test.samples)));
        let handle = engine.spawn(source, CaptureSink::new(n), LoopMode::ResponseTest, Some(spec.duration))?;
        self.running = Some(Running::Test { handle, spec });
        self.last_elapsed = Instant::now();
        Ok(())
    }

    fn start_playback(&mut self) -> Result<()> {
        let rec = self.recording.as_ref().ok_or(Error::NothingToSave)?;
        let engine = self.cfg.rig.engine(MicSource::Silence);
        let voice = Arc::new(rec.pair.voice.clone());
        let handle = engine.spawn(Box::new(BufferSource::new(voice)), NullSink, LoopMode::Playback, None)?;
        self.running = Some(Running::Playback { handle });
        self.last_elapsed = Instant::now();
        Ok(())
    }

    fn record_memo(&mut self) -> Result<ArtifactId> {
        let engine = self.cfg.rig.engine(MicSource::Looping(self.vowel(1.0)?));
        let n = (MEMO_SECONDS * SAMPLE_RATE) as usize;
        let mut sink = CaptureSink::new(n);
        let report = engine.run_duplex(&mut SilenceSource, &mut sink, LoopMode::Memo, Some(MEMO_SECONDS))?;
        self.emit("loop_complete", json!({ "mode": LoopMode::Memo, "report": report }));
        let (voice, _) = sink.into_channels();
        self.store.save_memo(&voice, SAMPLE_RATE, &self.save_context(Some(report)))
    }

    /// Stop the running loop and wait for it; its data is discarded.
    fn stop_running(&mut self) {
        if let Some(r) = self.running.take() {
            r.stop();
            let mode = r.mode();
            let report = match r {
                Running::Calibration { handle, .. } => handle.join().map(|x| x.0),
                Running::VoiceCheck { handle, .. } => handle.join().map(|x| x.0),
                Running::Test { handle, .. } => handle.join().map(|x| x.0),
                Running::Playback { handle } => handle.join().map(|x| x.0),
            };
            match report {
                Ok(report) => self.emit("loop_stopped", json!({ "mode": mode, "report": report })),
                Err(e) => self.emit("loop_failed", json!({ "mode": mode, "error": ErrorBody::from(&e) })),
            }
        }
    }

    fn drain_meter(&mut self) {
        let Some(Running::Calibration { meter, .. }) = &self.running else {
            return;
        };
        let meter = Arc::clone(meter);
        while let Some(m) = meter.pop() {
            self.history.push(m.time, m.level_dbfs);
            let spl = self.menu.calibration.as_ref().map(|g| g.dbfs_to_spl(m.level_dbfs));
            self.emit(
                "meter",
                json!({
                    "time": m.time,
                    "rms_dbfs": calibration::display_level(m.level_dbfs),
                    "peak_dbfs": calibration::display_level(m.peak_dbfs),
                    "spl_db": spl,
                }),
            );
        }
    }

    fn drain_pitch(&mut self) {
        let Some(Running::VoiceCheck { pitch, .. }) = &self.running else {
            return;
        };
        let pitch = Arc::clone(pitch);
        while let Some(p) = pitch.pop() {
            self.emit(
                "pitch",
                json!({
                    "time": p.time,
                    "fo_hz": p.fo_hz,
                    "cents_re_target": p.cents_re_target,
                    "voiced": p.fo_hz.is_some(),
                    "level_dbfs": calibration::display_level(p.level_dbfs),
                }),
            );
        }
    }

    /// Forward loop data as events, and finish loops and analyses that are done.
    pub fn poll(&mut self) {
        self.drain_meter();
        self.drain_pitch();
        if let Some(r) = &self.running {
            let finished = r.is_finished();
            if finished || self.last_elapsed.elapsed() >= ELAPSED_INTERVAL {
                let data = json!({ "mode": r.mode(), "seconds": r.elapsed() });
                self.last_elapsed = Instant::now();
                self.emit("elapsed", data);
            }
            if finished {
                self.finish_loop();
            }
        }
        let mut i = 0;
        while i < self.workers.len() {
            if self.workers[i].1.is_finished() {
                let (id, h) = self.workers.swap_remove(i);
                match h.join() {
                    Ok(Ok(r)) => self.emit(
                        "analysis_complete",
                        json!({
                            "artifact": id,
                            "n_averages": r.decomposition.n_averages,
                            "linear_peak_lag": r.decomposition.linear_peak_lag(),
                        }),
                    ),
                    Ok(Err(e)) => self.emit("analysis_failed", json!({ "artifact": id, "error": ErrorBody::from(&e) })),
                    Err(_) => self.emit("analysis_failed", json!({ "artifact": id })),
                }
            } else {
                i += 1;
            }
        }
    }

    fn finish_loop(&mut self) {
        let Some(r) = self.running.take() else { return };
        let mode = r.mode();
        let before = self.workflow;
        match r {
            Running::Test { handle, spec } => match handle.join() {
                Ok((report, sink)) => {
                    let (voice, loopback) = sink.into_channels();
                    let pair = RecordingPair {
                        voice,
                        loopback,
                        fs: SAMPLE_RATE,
                        spec,
                        calibration_gain: self.menu.calibration.as_ref().map(|g| g.offset_db),
                    };
                    self.emit("test_complete", json!({ "report": report, "samples": pair.voice.len() }));
                    self.recording = Some(Recording { pair, report });
                    self.workflow = self.workflow.complete(Completion::TestFinished);
                    let _ = self.store.log_action("engine", "test_complete", Value::Null);
                }
                Err(e) => {
                    self.emit("loop_failed", json!({ "mode": mode, "error": ErrorBody::from(&e) }));
                    self.workflow = self.workflow.complete(Completion::TestFailed);
                }
            },
            Running::Playback { handle } => {
                let out = handle.join();
                self.report_finished(mode, out.map(|x| x.0));
                self.workflow = self.workflow.complete(Completion::PlaybackFinished);
            }
            Running::Calibration { handle, .. } => {
                let out = handle.join();
                self.report_finished(mode, out.map(|x| x.0));
                self.workflow = self.workflow.complete(Completion::CalibrationFinished);
            }
            Running::VoiceCheck { handle, .. } => {
                let out = handle.join();
                self.report_finished(mode, out.map(|x| x.0));
                self.workflow = self.workflow.complete(Completion::VoiceCheckFinished);
            }
        }
        if self.workflow != before {
            self.emit("state", self.state_json());
        }
    }

    fn report_finished(&mut self, mode: LoopMode, out: Result<LoopReport>) {
        match out {
            Ok(report) => self.emit("loop_complete", json!({ "mode": mode, "report": report })),
            Err(e) => self.emit("loop_failed", json!({ "mode": mode, "error": ErrorBody::from(&e) })),
        }
    }

    /// Poll until no loop runs and every analysis has finished, or `timeout`.
    pub fn wait_idle(&mut self, timeout: Duration) -> bool {
        let until = Instant::now() + timeout;
        loop {
            self.poll();
            if self.running.is_none() && self.workers.is_empty() {
                return true;
            }
            if Instant::now() >= until {
                return false;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }

    /// Stop everything; used on shutdown.
    pub fn shutdown(&mut self) {
        self.stop_running();
        for (_, h) in self.workers.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.shutdown();
    }
}

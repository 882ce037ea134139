//! Storage root layout, time-stamped artifact names, WAV files with JSON
//! sidecars, the append-only action log, experiment condition files, and log
//! replay.
//!
//! Analysis results are reachable only through an [`ArtifactId`], and ids are
//! only handed out for artifacts that are on disk.

pub mod wav;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analyzer::{self, AnalysisResult, RecordingPair};
use crate::calibration::CalibrationGain;
use crate::error::{Error, Result};
use crate::orthomix::CombinationCatalog;
use crate::rt_engine::LoopReport;
use crate::sim_subject::SubjectModel;
use crate::stimulus::{Normalization, PhaseAlloc, SignalType, StimulusSpec, TestSignal};

pub const SCHEMA_VERSION: u32 = 1;
pub const LOG_FILE: &str = "log.jsonl";
pub const CONDITIONS_FILE: &str = "conditions.json";
pub const RESULTS_DIR: &str = "results";

/// `YYYYMMDDThhmmssSSS_<kind>`, with `kind` reduced to `[A-Za-z0-9_-]`.
pub fn unique_name(ts: DateTime<Utc>, kind: &str) -> String {
    format!("{}_{}", ts.format("%Y%m%dT%H%M%S%3f"), sanitize_kind(kind))
}

pub fn sanitize_kind(kind: &str) -> String {
    let s: String = kind
        .chars()
        .filter(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '-')
        .collect();
    if s.is_empty() {
        "artifact".to_string()
    } else {
        s
    }
}

pub fn iso_time(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Recording,
    TestSignal,
    Memo,
}

impl ArtifactKind {
    pub fn dir(self) -> &'static str {
        match self {
            ArtifactKind::Recording => "recordings",
            ArtifactKind::TestSignal => "testsignals",
            ArtifactKind::Memo => "memos",
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            ArtifactKind::Recording => "rec",
            ArtifactKind::TestSignal => "testsignal",
            ArtifactKind::Memo => "memo",
        }
    }

    pub const ALL: [ArtifactKind; 3] = [ArtifactKind::Recording, ArtifactKind::TestSignal, ArtifactKind::Memo];
}

/// Name of an artifact that exists in the store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ArtifactId(String);

impl ArtifactId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArtifactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presentation {
    #[default]
    Headphone,
    Loudspeaker,
}

/// Metadata written next to every WAV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub id: String,
    pub kind: ArtifactKind,
    pub created: DateTime<Utc>,
    pub fs: f64,
    pub channels: Vec<String>,
    pub n_samples: usize,
    #[serde(default)]
    pub spec: Option<StimulusSpec>,
    #[serde(default)]
    pub calibration: Option<CalibrationGain>,
    #[serde(default)]
    pub device: Option<String>,
    #[serde(default)]
    pub presentation: Option<Presentation>,
    #[serde(default)]
    pub loop_report: Option<LoopReport>,
    #[serde(default)]
    pub applied_gain: Option<f64>,
    #[serde(default)]
    pub n_periods: Option<usize>,
    /// Model behind a simulated voice channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<SubjectModel>,
}

impl Sidecar {
    pub fn new(id: &str, kind: ArtifactKind, fs: f64, channels: &[&str], n_samples: usize) -> Self {
        Sidecar {
            schema_version: SCHEMA_VERSION,
            id: id.to_string(),
            kind,
            created: Utc::now(),
            fs,
            channels: channels.iter().map(|c| c.to_string()).collect(),
            n_samples,
            spec: None,
            calibration: None,
            device: None,
            presentation: None,
            loop_report: None,
            applied_gain: None,
            n_periods: None,
            subject: None,
        }
    }
}

/// Sidecar location for a WAV file outside the store: same stem, `.json`.
pub fn sidecar_path_for(wav_path: &Path) -> PathBuf {
    wav_path.with_extension("json")
}

/// Write a WAV file and its sidecar outside the store (offline tools).
pub fn write_standalone(wav_path: &Path, channels: &[&[f64]], sidecar: &Sidecar) -> Result<()> {
    wav::write_wav(wav_path, sidecar.fs, channels)?;
    wav::append_info_comment(wav_path, &sidecar.id)?;
    write_json_atomic(&sidecar_path_for(wav_path), sidecar)
}

/// Context recorded with a saved artifact.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SaveContext {
    pub actor: String,
    pub calibration: Option<CalibrationGain>,
    pub device: Option<String>,
    pub presentation: Option<Presentation>,
    pub loop_report: Option<LoopReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub time: String,
    pub actor: String,
    pub action: String,
    #[serde(default)]
    pub payload: Value,
}

fn default_fo_choices() -> Vec<f64> {
    vec![110.0, 220.0, 440.0]
}

fn default_combination_ids() -> Vec<usize> {
    (0..crate::orthomix::CATALOG_COMBINATIONS).collect()
}

/// Menu contents and modulation depth, read from a JSON condition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConditions {
    pub schema_version: u32,
    #[serde(default = "default_fo_choices")]
    pub fo_choices: Vec<f64>,
    #[serde(default = "default_fo_choices")]
    pub target_fo_choices: Vec<f64>,
    pub depth: f64,
    #[serde(default = "default_combination_ids")]
    pub combination_ids: Vec<usize>,
    #[serde(default = "default_type")]
    pub default_type: SignalType,
    #[serde(default = "default_normalization")]
    pub default_normalization: Normalization,
    #[serde(default = "default_phase")]
    pub default_phase: PhaseAlloc,
}

fn default_type() -> SignalType {
    SignalType::Sines
}

fn default_normalization() -> Normalization {
    Normalization::Peak
}

fn default_phase() -> PhaseAlloc {
    PhaseAlloc::Sch
}

impl Default for ExperimentConditions {
    fn default() -> Self {
        ExperimentConditions {
            schema_version: SCHEMA_VERSION,
            fo_choices: default_fo_choices(),
            target_fo_choices: default_fo_choices(),
            depth: 100.0,
            combination_ids: default_combination_ids(),
            default_type: default_type(),
            default_normalization: default_normalization(),
            default_phase: default_phase(),
        }
    }
}

impl ExperimentConditions {
    pub fn validate(&self, n_combinations: usize) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (name, list) in [("fo_choices", &self.fo_choices), ("target_fo_choices", &self.target_fo_choices)] {
            if list.is_empty() {
                return Err(Error::Validation(format!("{name} is empty")));
            }
            if let Some(f) = list.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
                return Err(Error::Validation(format!("{name} contains nonpositive frequency {f}")));
            }
        }
        if !(self.depth >= 0.0) || !self.depth.is_finite() {
            return Err(Error::Validation(format!("depth {} must be non-negative", self.depth)));
        }
        if self.combination_ids.is_empty() {
            return Err(Error::Validation("combination_ids is empty".into()));
        }
        if let Some(id) = self.combination_ids.iter().find(|&&id| id >= n_combinations) {
            return Err(Error::Validation(format!("unknown combination id {id}")));
        }
        Ok(())
    }
}

/// Read and validate a condition file. A missing or malformed file is a
/// parse error; well-formed but out-of-range content is a validation error.
pub fn load_condition_file(path: &Path, n_combinations: usize) -> Result<ExperimentConditions> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let c: ExperimentConditions = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    c.validate(n_combinations)?;
    Ok(c)
}

/// Menu selections the experimenter can change from the control panel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpecUpdate {
    #[serde(default)]
    pub signal_type: Option<SignalType>,
    #[serde(default)]
    pub fo: Option<f64>,
    #[serde(default)]
    pub target_fo: Option<f64>,
    #[serde(default)]
    pub combination_id: Option<usize>,
    #[serde(default)]
    pub normalization: Option<Normalization>,
    #[serde(default)]
    pub phase_alloc: Option<PhaseAlloc>,
    #[serde(default)]
    pub presentation: Option<Presentation>,
}

/// Everything the control panel shows that replay must reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuState {
    pub conditions: ExperimentConditions,
    pub spec: StimulusSpec,
    pub presentation: Presentation,
    pub calibration: Option<CalibrationGain>,
}

impl Default for MenuState {
    fn default() -> Self {
        let conditions = ExperimentConditions::default();
        let mut state = MenuState {
            spec: StimulusSpec::default(),
            conditions: conditions.clone(),
            presentation: Presentation::default(),
            calibration: None,
        };
        state.apply_conditions(conditions);
        state
    }
}

impl MenuState {
    /// Replace the menus; selections no longer on a menu fall back to its first entry.
    pub fn apply_conditions(&mut self, c: ExperimentConditions) {
        let s = &mut self.spec;
        s.depth = c.depth;
        if !c.fo_choices.contains(&s.fo) {
            s.fo = c.fo_choices[0];
        }
        if !c.target_fo_choices.contains(&s.target_fo) {
            s.target_fo = c.target_fo_choices[0];
        }
        if !c.combination_ids.contains(&s.combination_id) {
            s.combination_id = c.combination_ids[0];
        }
        s.signal_type = c.default_type;
        s.normalization = c.default_normalization;
        s.phase_alloc = c.default_phase;
        self.conditions = c;
    }

    /// Apply menu selections; values must come from the current menus.
    pub fn apply_update(&mut self, u: &SpecUpdate) -> Result<()> {
        let mut spec = self.spec.clone();
        if let Some(f) = u.fo {
            if !self.conditions.fo_choices.contains(&f) {
                return Err(Error::Validation(format!("fo {f} is not on the menu")));
            }
            spec.fo = f;
        }
        if let Some(f) = u.target_fo {
            if !self.conditions.target_fo_choices.contains(&f) {
                return Err(Error::Validation(format!("target_fo {f} is not on the menu")));
            }
            spec.target_fo = f;
        }
        if let Some(id) = u.combination_id {
            if !self.conditions.combination_ids.contains(&id) {
                return Err(Error::Validation(format!("combination id {id} is not on the menu")));
            }
            spec.combination_id = id;
        }
        if let Some(t) = u.signal_type {
            spec.signal_type = t;
        }
        if let Some(n) = u.normalization {
            spec.normalization = n;
        }
        if let Some(p) = u.phase_alloc {
            spec.phase_alloc = p;
        }
        spec.validate()?;
        self.spec = spec;
        if let Some(p) = u.presentation {
            self.presentation = p;
        }
        Ok(())
    }

    /// Fold one log entry into the state. Entries carry the resulting values
    /// under the keys `conditions`, `spec`, `presentation` and `calibration`.
    pub fn apply_entry(&mut self, e: &LogEntry) -> Result<()> {
        let obj = match e.payload.as_object() {
            Some(o) => o,
            None => return Ok(()),
        };
        if let Some(c) = obj.get("conditions") {
            self.conditions = serde_json::from_value(c.clone())?;
        }
        if let Some(s) = obj.get("spec") {
            self.spec = serde_json::from_value(s.clone())?;
        }
        if let Some(p) = obj.get("presentation") {
            self.presentation = serde_json::from_value(p.clone())?;
        }
        if let Some(c) = obj.get("calibration") {
            self.calibration = serde_json::from_value(c.clone())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactLineage {
    pub id: String,
    pub kind: ArtifactKind,
    pub logged_at: String,
    pub sidecar: Sidecar,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayState {
    pub menu: MenuState,
    pub artifacts: Vec<ArtifactLineage>,
    pub entries: usize,
}

/// Rebuild the menu state and the artifact lineage from `<root>/log.jsonl`
/// and the sidecars it refers to.
pub fn replay(root: &Path) -> Result<ReplayState> {
    let entries = read_log(&root.join(LOG_FILE))?;
    let mut menu = MenuState::default();
    let mut artifacts = Vec::new();
    for e in &entries {
        menu.apply_entry(e)?;
        let (Some(id), Some(kind)) = (e.payload.get("artifact"), e.payload.get("kind")) else {
            continue;
        };
        let id: String = serde_json::from_value(id.clone())?;
        let kind: ArtifactKind = serde_json::from_value(kind.clone())?;
        let path = root.join(kind.dir()).join(format!("{id}.json"));
        let sidecar = read_sidecar(&path)?;
        if sidecar.id != id {
            return Err(Error::Validation(format!("sidecar {} names artifact {}", path.display(), sidecar.id)));
        }
        artifacts.push(ArtifactLineage {
            id,
            kind,
            logged_at: e.time.clone(),
            sidecar,
        });
    }
    Ok(ReplayState {
        menu,
        artifacts,
        entries: entries.len(),
    })
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// A stereo recording and its sidecar as a [`RecordingPair`].
pub fn load_recording_files(wav_path: &Path, sidecar_path: &Path) -> Result<RecordingPair> {
    let sidecar = read_sidecar(sidecar_path)?;
    let data = wav::read_wav(wav_path)?;
    let mut ch = data.channels.into_iter();
    let (Some(voice), Some(loopback)) = (ch.next(), ch.next()) else {
        return Err(Error::InvalidInput(format!("{} is not stereo", wav_path.display())));
    };
    Ok(RecordingPair {
        voice,
        loopback,
        fs: data.fs,
        spec: sidecar
            .spec
            .ok_or_else(|| Error::Validation(format!("{} has no spec", sidecar_path.display())))?,
        calibration_gain: sidecar.calibration.map(|g| g.offset_db),
    })
}

/// Analysis of one saved recording, read back from disk.
#[derive(Debug, Clone)]
pub struct AnalysisJob {
    pub id: ArtifactId,
    wav: PathBuf,
    sidecar: PathBuf,
    result: PathBuf,
    error: PathBuf,
}

impl AnalysisJob {
    /// Analyze and store the result, or store the error and return it.
    pub fn run(&self, catalog: &CombinationCatalog) -> Result<AnalysisResult> {
        let outcome = load_recording_files(&self.wav, &self.sidecar)
            .and_then(|rec| analyzer::analyze_recording(&rec, catalog));
        match outcome {
            Ok(r) => {
                write_json_atomic(&self.result, &r)?;
                Ok(r)
            }
            Err(e) => {
                write_json_atomic(
                    &self.error,
                    &json!({ "artifact": self.id.0, "code": e.code(), "message": e.to_string() }),
                )?;
                Err(e)
            }
        }
    }
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub struct SessionStore {
    root: PathBuf,
    next_seq: u64,
    saved: BTreeMap<String, ArtifactKind>,
    used_names: HashSet<String>,
}

impl SessionStore {
    /// Open (creating if needed) a storage root and index what is already saved.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for kind in ArtifactKind::ALL {
            fs::create_dir_all(root.join(kind.dir()))?;
        }
        fs::create_dir_all(root.join(RESULTS_DIR))?;
        let entries = read_log(&root.join(LOG_FILE))?;
        let next_seq = entries.last().map_or(0, |e| e.seq + 1);
        let mut saved = BTreeMap::new();
        for kind in ArtifactKind::ALL {
            for entry in fs::read_dir(root.join(kind.dir()))? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "json") {
                    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                    if p.with_extension("wav").exists() {
                        saved.insert(stem, kind);
                    }
                }
            }
        }
        let used_names = saved.keys().cloned().collect();
        Ok(SessionStore {
            root,
            next_seq,
            saved,
            used_names,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log_path(&self) -> PathBuf {
        self.root.join(LOG_FILE)
    }

    /// Append one line to the action log.
    pub fn log_action(&mut self, actor: &str, action: &str, payload: Value) -> Result<LogEntry> {
        let entry = LogEntry {
            seq: self.next_seq,
            time: iso_time(Utc::now()),
            actor: actor.to_string(),
            action: action.to_string(),
            payload,
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(self.log_path())?;
        f.write_all(line.as_bytes())?;
        f.flush()?;
        self.next_seq += 1;
        Ok(entry)
    }

    pub fn log_entries(&self) -> Result<Vec<LogEntry>> {
        read_log(&self.log_path())
    }

    /// Allocate a name not used before in this store.
    pub fn allocate_name(&mut self, ts: DateTime<Utc>, kind: &str) -> String {
        let base = unique_name(ts, kind);
        let mut name = base.clone();
        let mut k = 1;
        while self.used_names.contains(&name) {
            name = format!("{base}_{k}");
            k += 1;
        }
        self.used_names.insert(name.clone());
        name
    }

    /// Id of a saved artifact; `not-saved` otherwise.
    pub fn artifact(&self, name: &str) -> Result<ArtifactId> {
        if self.saved.contains_key(name) {
            Ok(ArtifactId(name.to_string()))
        } else {
            Err(Error::NotSaved(name.to_string()))
        }
    }

    pub fn artifacts(&self) -> Vec<(ArtifactId, ArtifactKind)> {
        self.saved.iter().map(|(k, v)| (ArtifactId(k.clone()), *v)).collect()
    }

    pub fn kind_of(&self, id: &ArtifactId) -> ArtifactKind {
        self.saved[&id.0]
    }

    pub fn wav_path(&self, id: &ArtifactId) -> PathBuf {
        self.root.join(self.kind_of(id).dir()).join(format!("{}.wav", id.0))
    }

    pub fn sidecar_path(&self, id: &ArtifactId) -> PathBuf {
        self.root.join(self.kind_of(id).dir()).join(format!("{}.json", id.0))
    }

    pub fn result_path(&self, id: &ArtifactId) -> PathBuf {
        self.root.join(RESULTS_DIR).join(format!("{}.json", id.0))
    }

    pub fn sidecar(&self, id: &ArtifactId) -> Result<Sidecar> {
        read_sidecar(&self.sidecar_path(id))
    }

    fn save_artifact(
        &mut self,
        kind: ArtifactKind,
        fs_hz: f64,
        channels: &[(&str, &[f64])],
        fill: impl FnOnce(&mut Sidecar),
        ctx: &SaveContext,
    ) -> Result<ArtifactId> {
        if channels.is_empty() || channels[0].1.is_empty() {
            return Err(Error::NothingToSave);
        }
        let now = Utc::now();
        let name = self.allocate_name(now, kind.suffix());
        let dir = self.root.join(kind.dir());
        let wav_path = dir.join(format!("{name}.wav"));
        let data: Vec<&[f64]> = channels.iter().map(|c| c.1).collect();
        wav::write_wav(&wav_path, fs_hz, &data)?;
        wav::append_info_comment(&wav_path, &name)?;
        let names: Vec<&str> = channels.iter().map(|c| c.0).collect();
        let mut sidecar = Sidecar::new(&name, kind, fs_hz, &names, channels[0].1.len());
        sidecar.created = now;
        sidecar.calibration = ctx.calibration.clone();
        sidecar.device = ctx.device.clone();
        sidecar.presentation = ctx.presentation;
        sidecar.loop_report = ctx.loop_report.clone();
        fill(&mut sidecar);
        write_json_atomic(&dir.join(format!("{name}.json")), &sidecar)?;
        self.saved.insert(name.clone(), kind);
        let action = match kind {
            ArtifactKind::Recording => "save",
            ArtifactKind::TestSignal => "save_test_signal",
            ArtifactKind::Memo => "memo",
        };
        self.log_action(
            &ctx.actor,
            action,
            json!({ "artifact": name, "kind": kind, "n_samples": sidecar.n_samples }),
        )?;
        Ok(ArtifactId(name))
    }

    /// Stereo WAV (voice, loop-back) plus sidecar.
    pub fn save_recording(&mut self, rec: &RecordingPair, ctx: &SaveContext) -> Result<ArtifactId> {
        if rec.voice.len() != rec.loopback.len() {
            return Err(Error::InvalidInput("voice and loop-back lengths differ".into()));
        }
        let spec = rec.spec.clone();
        self.save_artifact(
            ArtifactKind::Recording,
            rec.fs,
            &[("voice", &rec.voice), ("loopback", &rec.loopback)],
            |s| s.spec = Some(spec),
            ctx,
        )
    }

    pub fn save_test_signal(&mut self, sig: &TestSignal, ctx: &SaveContext) -> Result<ArtifactId> {
        let spec = sig.spec.clone();
        let (gain, n_periods) = (sig.applied_gain, sig.n_periods);
        self.save_artifact(
            ArtifactKind::TestSignal,
            sig.spec.fs,
            &[("stimulus", &sig.samples)],
            |s| {
                s.spec = Some(spec);
                s.applied_gain = Some(gain);
                s.n_periods = Some(n_periods);
            },
            ctx,
        )
    }

    pub fn save_memo(&mut self, samples: &[f64], fs_hz: f64, ctx: &SaveContext) -> Result<ArtifactId> {
        self.save_artifact(ArtifactKind::Memo, fs_hz, &[("voice", samples)], |_| {}, ctx)
    }

    pub fn load_recording(&self, id: &ArtifactId) -> Result<RecordingPair> {
        if self.kind_of(id) != ArtifactKind::Recording {
            return Err(Error::InvalidInput(format!("{id} is not a recording")));
        }
        load_recording_files(&self.wav_path(id), &self.sidecar_path(id))
    }

    /// Everything a worker thread needs to analyze a saved recording.
    pub fn analysis_job(&self, id: &ArtifactId) -> Result<AnalysisJob> {
        if self.kind_of(id) != ArtifactKind::Recording {
            return Err(Error::InvalidInput(format!("{id} is not a recording")));
        }
        Ok(AnalysisJob {
            id: id.clone(),
            wav: self.wav_path(id),
            sidecar: self.sidecar_path(id),
            result: self.result_path(id),
            error: self.error_path(id),
        })
    }

    pub fn store_analysis(&self, id: &ArtifactId, result: &AnalysisResult) -> Result<PathBuf> {
        let p = self.result_path(id);
        write_json_atomic(&p, result)?;
        Ok(p)
    }

    fn error_path(&self, id: &ArtifactId) -> PathBuf {
        self.root.join(RESULTS_DIR).join(format!("{}.error.json", id.0))
    }

    /// Record why the analysis of `id` could not be produced.
    pub fn store_analysis_error(&self, id: &ArtifactId, err: &Error) -> Result<()> {
        write_json_atomic(
            &self.error_path(id),
            &json!({ "artifact": id.0, "code": err.code(), "message": err.to_string() }),
        )
    }

    /// The stored analysis of a saved recording.
    pub fn analysis(&self, id: &ArtifactId) -> Result<AnalysisResult> {
        let p = self.result_path(id);
        if !p.exists() {
            let e = self.error_path(id);
            if e.exists() {
                let v: Value = serde_json::from_str(&fs::read_to_string(&e)?)?;
                let field = |k: &str| v.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
                return Err(Error::AnalysisFailed {
                    artifact: id.0.clone(),
                    code: field("code"),
                    message: field("message"),
                });
            }
            return Err(Error::AnalysisPending(id.0.clone()));
        }
        let text = fs::read_to_string(&p)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: p,
            message: e.to_string(),
        })
    }

    /// Lookup by name: `not-saved` for anything that is not a saved artifact.
    pub fn analysis_by_name(&self, name: &str) -> Result<AnalysisResult> {
        let id = self.artifact(name)?;
        self.analysis(&id)
    }

    pub fn save_conditions(&self, c: &ExperimentConditions) -> Result<()> {
        write_json_atomic(&self.root.join(CONDITIONS_FILE), c)
    }
}

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use voxresp::analyzer::{self, RecordingPair};
use voxresp::capricep::{self, CapricepParams};
use voxresp::orthomix::CombinationCatalog;
use voxresp::rt_engine::{
    BufferSource, CaptureSink, Engine, LoopMode, MicSource, SilenceSource, SimClock, SimulatedDevice, BLOCK_SIZE,
    MEMO_SECONDS, SAMPLE_RATE,
};
use voxresp::service::{self, server, workflow, ServiceConfig, SimRig};
use voxresp::session::{self, ArtifactKind, SaveContext, SessionStore, Sidecar};
use voxresp::sim_subject::{self, SubjectModel};
use voxresp::stimulus::{self, Normalization, PhaseAlloc, SignalType, StimulusSpec};
use voxresp::{dsp, fo_tracker, Error, Result};

#[derive(Parser)]
#[command(name = "voxresp", version, about = "Voice fo response measurement with orthogonalized FM test signals")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a test signal as WAV plus JSON sidecar.
    Gen(GenArgs),
    /// Analyze a stereo recording (voice, loop-back).
    Analyze(AnalyzeArgs),
    /// Produce a simulated recording from a subject model.
    Simulate(SimulateArgs),
    /// Run the control service (WebSocket protocol and static files).
    Serve(ServeArgs),
    /// Run the built-in checks on the simulated device.
    Selftest,
}

#[derive(Args)]
struct SpecArgs {
    /// Spec JSON; the flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long = "type")]
    signal_type: Option<SignalType>,
    #[arg(long)]
    fo: Option<f64>,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    norm: Option<Normalization>,
    #[arg(long)]
    phase: Option<PhaseAlloc>,
    #[arg(long)]
    comb: Option<usize>,
    /// Peak modulation depth in cents.
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<StimulusSpec> {
        let mut spec = match &self.spec {
            Some(p) => read_json::<StimulusSpec>(p)?,
            None => StimulusSpec::default(),
        };
        if let Some(v) = self.signal_type {
            spec.signal_type = v;
        }
        if let Some(v) = self.fo {
            spec.fo = v;
            if self.target.is_none() && self.spec.is_none() {
                spec.target_fo = v;
            }
        }
        if let Some(v) = self.target {
            spec.target_fo = v;
        }
        if let Some(v) = self.norm {
            spec.normalization = v;
        }
        if let Some(v) = self.phase {
            spec.phase_alloc = v;
        }
        if let Some(v) = self.comb {
            spec.combination_id = v;
        }
        if let Some(v) = self.depth {
            spec.depth = v;
        }
        if let Some(v) = self.duration {
            spec.duration = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Output WAV; without it the signal is saved into the storage root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Storage root (default: $VOXRESP_ROOT or ./voxresp-data).
    #[arg(long)]
    root: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    recording: PathBuf,
    /// Spec JSON when the recording has no sidecar.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Result JSON (default: next to the recording, `.result.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the three traces as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Subject model JSON (default: 150 ms latency, 80 ms smoothing).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Voicing onset in seconds.
    #[arg(long, default_value_t = 1.0)]
    onset: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    addr: String,
    #[arg(long)]
    root: Option<PathBuf>,
    /// Directory with the control-panel bundle.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    /// Simulated device speed relative to real time.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Simulated output-to-input latency in samples.
    #[arg(long, default_value_t = 0)]
    latency: usize,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn root_or_default(root: Option<PathBuf>) -> PathBuf {
    root.unwrap_or_else(|| service::storage_root("voxresp-data"))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let spec = a.spec.resolve()?;
    let catalog = CombinationCatalog::default_catalog();
    let sig = stimulus::make_test_signal(&spec, &catalog)?;
    let path = match a.out {
        Some(out) => {
            let id = out.file_stem().and_then(|s| s.to_str()).unwrap_or("testsignal").to_string();
            let mut sc = Sidecar::new(&id, ArtifactKind::TestSignal, spec.fs, &["stimulus"], sig.samples.len());
            sc.spec = Some(spec.clone());
            sc.applied_gain = Some(sig.applied_gain);
            sc.n_periods = Some(sig.n_periods);
            session::write_standalone(&out, &[&sig.samples], &sc)?;
            out
        }
        None => {
            let mut store = SessionStore::open(root_or_default(a.root))?;
            let ctx = SaveContext {
                actor: "cli".into(),
                ..Default::default()
            };
            let id = store.save_test_signal(&sig, &ctx)?;
            store.wav_path(&id)
        }
    };
    println!("wrote {}", path.display());
    println!(
        "type {} fo {} Hz comb {} norm {} phase {} depth {} cents",
        spec.signal_type, spec.fo, spec.combination_id, spec.normalization, spec.phase_alloc, spec.depth
    );
    println!(
        "peak {:.6}  rms {:.2} dBFS  crest {:.3}  periods {}",
        dsp::peak(&sig.samples),
        dsp::amp_to_db(dsp::rms(&sig.samples)),
        stimulus::crest_factor(&sig.samples),
        sig.n_periods
    );
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let data = session::wav::read_wav(&a.recording)?;
    if data.channels.len() < 2 {
        return Err(Error::InvalidInput(format!("{} is not a stereo recording", a.recording.display())));
    }
    let sidecar_path = session::sidecar_path_for(&a.recording);
    let sidecar = sidecar_path.exists().then(|| session::read_sidecar(&sidecar_path)).transpose()?;
    let spec = match (&a.spec, sidecar.as_ref().and_then(|s| s.spec.clone())) {
        (Some(p), _) => read_json::<StimulusSpec>(p)?,
        (None, Some(s)) => s,
        (None, None) => return Err(Error::InvalidInput("no sidecar next to the recording; pass --spec".into())),
    };
    let mut ch = data.channels.into_iter();
    let rec = RecordingPair {
        voice: ch.next().unwrap_or_default(),
        loopback: ch.next().unwrap_or_default(),
        fs: data.fs,
        spec,
        calibration_gain: sidecar.as_ref().and_then(|s| s.calibration.as_ref().map(|g| g.offset_db)),
    };
    let catalog = CombinationCatalog::default_catalog();
    let result = analyzer::analyze_recording(&rec, &catalog)?;
    let out = a.out.unwrap_or_else(|| a.recording.with_extension("result.json"));
    session::write_json_atomic(&out, &result)?;
    if let Some(csv) = &a.csv {
        result.decomposition.write_csv(std::fs::File::create(csv)?)?;
    }
    let d = &result.decomposition;
    println!("wrote {}", out.display());
    println!(
        "voiced {:.2}-{:.2} s  averages {}  voice median fo {:.2} Hz",
        d.voiced_span.0, d.voiced_span.1, d.n_averages, result.diagnostics.voice_median_fo
    );
    println!(
        "stimulation peak {:.2} cents  linear peak {:.2} cents at {:.3} s  random_tv median {:.2} cents",
        dsp::peak(&d.stimulation),
        dsp::peak(&d.linear),
        d.linear_peak_lag(),
        dsp::median(&d.random_tv).unwrap_or(f64::NAN)
    );
    if let Some(model) = sidecar.and_then(|s| s.subject) {
        let dt = result.diagnostics.voice.hop as f64 / rec.fs;
        let predicted = sim_subject::predicted_linear(&d.stimulation, dt, &model, rec.fs);
        println!("correlation with model prediction {:.4}", dsp::normalized_correlation(&d.linear, &predicted));
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let spec = a.spec.resolve()?;
    let mut model = match &a.model {
        Some(p) => read_json::<SubjectModel>(p)?,
        None => SubjectModel::smoothed(spec.target_fo, 0.15, 0.08, 1.0, spec.fs),
    };
    if a.model.is_none() {
        model.base_fo = spec.target_fo;
    }
    let catalog = CombinationCatalog::default_catalog();
    let test = stimulus::make_test_signal(&spec, &catalog)?;
    let voice = sim_subject::simulate_subject(&test, &model, a.onset)?;
    let id = a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("simulated").to_string();
    let mut sc = Sidecar::new(&id, ArtifactKind::Recording, spec.fs, &["voice", "loopback"], voice.len());
    sc.spec = Some(spec);
    sc.subject = Some(model);
    sc.device = Some("simulated".into());
    session::write_standalone(&a.out, &[&voice, &test.samples], &sc)?;
    println!("wrote {} ({} samples per channel)", a.out.display(), voice.len());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::new(root_or_default(a.root));
    cfg.rig = SimRig {
        clock: SimClock::Paced { speed: a.speed },
        latency: a.latency,
        ..SimRig::default()
    };
    let root = cfg.root.clone();
    let mut svc = service::Service::new(cfg)?;
    let listener = TcpListener::bind(&a.addr)?;
    println!("serving on http://{} (storage {})", listener.local_addr()?, root.display());
    let stop = AtomicBool::new(false);
    server::serve(&mut svc, listener, a.static_dir.as_deref(), &stop)
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    let detail = format!("{detail} ({:.2} s)", t.elapsed().as_secs_f64());
    Check { name, passed, detail }
}

fn cmd_selftest() -> Result<bool> {
    let checks = vec![
        check("capricep flatness", || {
            let p = CapricepParams::default();
            let u = capricep::generate_unit_capricep(1, p.fs, p.length, p.t_eff, p.n_sections)?;
            let spec = dsp::fft_real(u.samples());
            let (lo, hi) = spec
                .iter()
                .map(|c| dsp::amp_to_db(c.norm()))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let dev = hi.max(-lo);
            Ok((dev <= 0.5, format!("flatness deviation {dev:.2e} dB")))
        }),
        check("pure tone tracking", || {
            let fs = SAMPLE_RATE;
            let x: Vec<f64> = (0..fs as usize)
                .map(|i| 0.5 * (std::f64::consts::TAU * 220.0 * i as f64 / fs).sin())
                .collect();
            let t = fo_tracker::track(&x, fs, fo_tracker::HOP_OFFLINE, 220.0)?;
            let err = t
                .frames
                .iter()
                .map(|f| (f.fo_hz - 220.0).abs())
                .fold(0.0, f64::max);
            Ok((err < 1e-3 && t.voiced_count() == t.frames.len(), format!("max error {err:.2e} Hz")))
        }),
        check("response test loop at 2x real time", || {
            let n = (20.0 * SAMPLE_RATE) as usize;
            let sig: Arc<Vec<f64>> = Arc::new((0..n).map(|i| ((i % 1000) as f64 / 1000.0) - 0.5).collect());
            let dev = SimulatedDevice::new(SAMPLE_RATE, BLOCK_SIZE)
                .with_clock(SimClock::Free { deadline_speed: 2.0 })
                .with_mic(MicSource::Echo { gain: 0.5 });
            let engine = Engine::simulated(dev);
            let mut cap = CaptureSink::new(n);
            let r = engine.run_duplex(&mut BufferSource::new(Arc::clone(&sig)), &mut cap, LoopMode::ResponseTest, Some(20.0))?;
            let ok = r.underruns == 0 && r.overruns == 0 && r.speed >= 2.0 && cap.voice.len() == n && cap.loopback == *sig;
            Ok((ok, format!("{} samples, {} underruns, {:.0}x real time", cap.voice.len(), r.underruns, r.speed)))
        }),
        check("memo capture length", || {
            let engine = Engine::simulated(SimulatedDevice::new(SAMPLE_RATE, BLOCK_SIZE));
            let n = (MEMO_SECONDS * SAMPLE_RATE) as usize;
            let mut cap = CaptureSink::new(n);
            engine.run_duplex(&mut SilenceSource, &mut cap, LoopMode::Memo, Some(MEMO_SECONDS))?;
            Ok((cap.voice.len() == 220_500, format!("{} samples", cap.voice.len())))
        }),
        check("workflow sequences up to length 6", || match workflow::explore(6) {
            Ok(x) => Ok((true, format!("{} sequences", x.sequences))),
            Err((seq, msg)) => Ok((false, format!("{msg} after {seq:?}"))),
        }),
    ];
    let mut all = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        all &= c.passed;
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Cmd::Gen(a) => cmd_gen(a).map(|_| true),
        Cmd::Analyze(a) => cmd_analyze(a).map(|_| true),
        Cmd::Simulate(a) => cmd_simulate(a).map(|_| true),
        Cmd::Serve(a) => cmd_serve(a).map(|_| true),
        Cmd::Selftest => cmd_selftest(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}

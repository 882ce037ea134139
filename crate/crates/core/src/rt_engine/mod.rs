//! Block-based duplex streaming: every loop (calibration, voice check,
//! response test, playback, memo) runs through [`Engine::run_duplex`] with a
//! precomputed [`BlockSource`] and a preallocated [`BlockSink`].

pub mod blocks;
pub mod device;
pub mod ring;

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use blocks::{
    BlockSink, BlockSource, BufferSource, CaptureSink, LoopingSource, MeterEvent, MeterSink, NullSink, PitchEvent,
    PitchSink, SilenceSource,
};
pub use device::{list_devices, AudioBackend, MicSource, SimClock, SimulatedDevice, StreamStats};
pub use ring::RingBuffer;

pub const BLOCK_SIZE: usize = 1024;
pub const SAMPLE_RATE: f64 = 44100.0;
pub const MEMO_SECONDS: f64 = 5.0;
/// Loop-back samples kept for the post-loop latency estimate.
pub const LATENCY_PROBE_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMode {
    Calibration,
    VoiceCheck,
    ResponseTest,
    Playback,
    Memo,
}

impl LoopMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LoopMode::Calibration => "calibration",
            LoopMode::VoiceCheck => "voice_check",
            LoopMode::ResponseTest => "response_test",
            LoopMode::Playback => "playback",
            LoopMode::Memo => "memo",
        }
    }
}

/// Where the capture's second channel comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopbackMode {
    /// The emitted block itself, copied inside the engine.
    Digital,
    /// The device's input channel 1, which may lag the output.
    Device,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub mode: LoopMode,
    pub blocks: u64,
    pub block_size: usize,
    pub fs: f64,
    pub underruns: u64,
    pub overruns: u64,
    /// Stream time in seconds.
    pub elapsed: f64,
    pub wall_time: f64,
    /// Stream time over wall time.
    #[serde(with = "crate::float_serde")]
    pub speed: f64,
    pub max_callback_ms: f64,
    pub stopped: bool,
    /// Loop-back lag against the emitted signal, device loop-back only.
    pub latency_samples: Option<usize>,
}

/// Counters readable from the control thread while a loop runs.
#[derive(Debug, Default)]
pub struct Progress {
    blocks: AtomicU64,
    running: AtomicBool,
}

impl Progress {
    pub fn blocks(&self) -> u64 {
        self.blocks.load(Ordering::Acquire)
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::Acquire)
    }
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

/// Shared handle to one audio backend; clones refer to the same device and
/// at most one loop runs at a time.
#[derive(Clone)]
pub struct Engine {
    backend: Arc<Mutex<Box<dyn AudioBackend>>>,
    busy: Arc<AtomicBool>,
    progress: Arc<Progress>,
    stop: Arc<AtomicBool>,
    loopback: LoopbackMode,
    fs: f64,
    block: usize,
}

impl Engine {
    pub fn new(backend: Box<dyn AudioBackend>, loopback: LoopbackMode) -> Self {
        let fs = backend.sample_rate();
        let block = backend.block_size();
        Engine {
            backend: Arc::new(Mutex::new(backend)),
            busy: Arc::new(AtomicBool::new(false)),
            progress: Arc::new(Progress::default()),
            stop: Arc::new(AtomicBool::new(false)),
            loopback,
            fs,
            block,
        }
    }

    /// Simulated device at 44100 Hz with 1024-sample blocks.
    pub fn simulated(device: SimulatedDevice) -> Self {
        Engine::new(Box::new(device), LoopbackMode::Digital)
    }

    pub fn sample_rate(&self) -> f64 {
        self.fs
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn device_name(&self) -> String {
        self.backend.lock().map(|b| b.name().to_string()).unwrap_or_default()
    }

    pub fn is_busy(&self) -> bool {
        self.busy.load(Ordering::Acquire)
    }

    pub fn progress(&self) -> Arc<Progress> {
        Arc::clone(&self.progress)
    }

    /// Ask the running loop to stop after the current block.
    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::Release);
    }

    /// Blocks needed for `samples` samples.
    pub fn blocks_for(&self, samples: usize) -> u64 {
        samples.div_ceil(self.block) as u64
    }

    /// Stream `source` to the output and feed the input to `sink` until the
    /// source runs out, `duration` (seconds) elapses, or a stop is requested.
    pub fn run_duplex(
        &self,
        source: &mut dyn BlockSource,
        sink: &mut dyn BlockSink,
        mode: LoopMode,
        duration: Option<f64>,
    ) -> Result<LoopReport> {
        self.claim()?;
        let _guard = BusyGuard(&self.busy);
        self.run_claimed(source, sink, mode, duration)
    }

    /// Mark the engine busy and clear any earlier stop request. Runs on the
    /// caller's thread, so a stop issued as soon as [`Engine::spawn`] returns
    /// is never overwritten by the starting loop.
    fn claim(&self) -> Result<()> {
        if self.busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            return Err(Error::EngineBusy);
        }
        self.stop.store(false, Ordering::Release);
        Ok(())
    }

    fn run_claimed(
        &self,
        source: &mut dyn BlockSource,
        sink: &mut dyn BlockSink,
        mode: LoopMode,
        duration: Option<f64>,
    ) -> Result<LoopReport> {
        if let Some(d) = duration {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidInput(format!("loop duration must be positive, got {d}")));
            }
        }
        let max_blocks = duration.map(|d| self.blocks_for((d * self.fs).round() as usize));
        self.progress.blocks.store(0, Ordering::Release);
        self.progress.running.store(true, Ordering::Release);

        let b = self.block;
        let digital = self.loopback == LoopbackMode::Digital;
        let output_only = mode == LoopMode::Playback;
        let emitted = RingBuffer::new(4 * b);
        let mut routed = vec![0.0; b];
        let probe_len = if digital { 0 } else { (LATENCY_PROBE_S * self.fs) as usize };
        let mut probe_out = Vec::with_capacity(probe_len);
        let mut probe_in = Vec::with_capacity(probe_len);
        let progress = &self.progress;

        let mut backend = self.backend.lock().map_err(|_| Error::DeviceUnavailable("backend poisoned".into()))?;
        let started = Instant::now();
        let result = backend.run(
            &mut |_, out: &mut [f64]| {
                let more = source.fill(out);
                emitted.write(out);
                more
            },
            &mut |index, mic: &[f64], lb: &[f64]| {
                if digital {
                    if !emitted.read_at(index * b as u64, &mut routed) {
                        routed.iter_mut().for_each(|v| *v = 0.0);
                    }
                } else {
                    routed.copy_from_slice(lb);
                    if probe_out.len() < probe_len {
                        // capacity is reserved up front, so this never reallocates
                        let n = (probe_len - probe_out.len()).min(b);
                        let start = probe_out.len();
                        probe_out.resize(start + n, 0.0);
                        if !emitted.read_at(index * b as u64, &mut probe_out[start..]) {
                            probe_out[start..].iter_mut().for_each(|v| *v = 0.0);
                        }
                        probe_in.extend_from_slice(&lb[..n]);
                    }
                }
                if !output_only {
                    sink.consume(mic, &routed);
                }
                progress.blocks.store(index + 1, Ordering::Release);
            },
            max_blocks,
            &self.stop,
        );
        drop(backend);
        self.progress.running.store(false, Ordering::Release);
        let stats = result?;
        let wall = started.elapsed().as_secs_f64();
        let elapsed = stats.blocks as f64 * b as f64 / self.fs;
        let latency_samples = if digital {
            None
        } else {
            estimate_latency(&probe_out, &probe_in, probe_len / 2)
        };
        Ok(LoopReport {
            mode,
            blocks: stats.blocks,
            block_size: b,
            fs: self.fs,
            underruns: stats.underruns,
            overruns: stats.overruns,
            elapsed,
            wall_time: wall,
            speed: if wall > 0.0 { elapsed / wall } else { f64::INFINITY },
            max_callback_ms: stats.max_callback.as_secs_f64() * 1e3,
            stopped: self.stop.load(Ordering::Acquire),
            latency_samples,
        })
    }

    /// Run a loop on a new thread. The sink is handed back by [`LoopHandle::join`].
    pub fn spawn<S: BlockSink + 'static>(
        &self,
        mut source: Box<dyn BlockSource>,
        mut sink: S,
        mode: LoopMode,
        duration: Option<f64>,
    ) -> Result<LoopHandle<S>> {
        self.claim()?;
        let engine = self.clone();
        let join = std::thread::Builder::new()
            .name(format!("voxresp-{}", mode.as_str()))
            .spawn(move || {
                let _guard = BusyGuard(&engine.busy);
                let report = engine.run_claimed(source.as_mut(), &mut sink, mode, duration)?;
                Ok((report, sink))
            })
            .map_err(|e| {
                self.busy.store(false, Ordering::Release);
                Error::Io(e)
            })?;
        Ok(LoopHandle {
            join,
            stop: Arc::clone(&self.stop),
            progress: Arc::clone(&self.progress),
            mode,
            fs: self.fs,
            block: self.block,
        })
    }
}

pub struct LoopHandle<S> {
    join: JoinHandle<Result<(LoopReport, S)>>,
    stop: Arc<AtomicBool>,
    progress: Arc<Progress>,
    mode: LoopMode,
    fs: f64,
    block: usize,
}

impl<S> LoopHandle<S> {
    pub fn mode(&self) -> LoopMode {
        self.mode
    }

    /// Stream time so far in seconds.
    pub fn elapsed(&self) -> f64 {
        self.progress.blocks() as f64 * self.block as f64 / self.fs
    }

    pub fn is_finished(&self) -> bool {
        self.join.is_finished()
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::Release);
    }

    pub fn join(self) -> Result<(LoopReport, S)> {
        self.join
            .join()
            .map_err(|_| Error::InvalidState("audio loop panicked".into()))?
    }
}

/// Lag in samples (0..=max_lag) at which `captured` best matches `emitted`.
pub fn estimate_latency(emitted: &[f64], captured: &[f64], max_lag: usize) -> Option<usize> {
    let n = emitted.len().min(captured.len());
    if n == 0 || emitted[..n].iter().all(|&v| v == 0.0) {
        return None;
    }
    let c = crate::dsp::linear_correlate(&captured[..n], &emitted[..n], 0);
    let (lag, _) = c
        .iter()
        .take(max_lag + 1)
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    Some(lag)
}

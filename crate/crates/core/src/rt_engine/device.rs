//! Audio backends. Only a simulated device ships here: it runs the output and
//! input streams from a deterministic clock, with configurable latency and an
//! injected microphone signal, so every loop can run headless.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Per-stream callback timing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamStats {
    pub blocks: u64,
    pub underruns: u64,
    pub overruns: u64,
    pub wall_time: Duration,
    pub max_callback: Duration,
}

/// Fills one output block; returns false to stop the stream after this block.
pub type OutputCallback<'a> = dyn FnMut(u64, &mut [f64]) -> bool + 'a;
/// Receives one input block: channel 0 (microphone) and channel 1 (device loop-back).
pub type InputCallback<'a> = dyn FnMut(u64, &[f64], &[f64]) + 'a;

pub trait AudioBackend: Send {
    fn name(&self) -> &str;
    fn sample_rate(&self) -> f64;
    fn block_size(&self) -> usize;
    /// Runs the two streams until the output callback returns false, `stop`
    /// is raised, or `max_blocks` blocks have been processed.
    fn run(
        &mut self,
        output: &mut OutputCallback<'_>,
        input: &mut InputCallback<'_>,
        max_blocks: Option<u64>,
        stop: &AtomicBool,
    ) -> Result<StreamStats>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimClock {
    /// Sleep so blocks are delivered at `speed` times real time.
    Paced { speed: f64 },
    /// No sleeping; a callback that takes longer than the block period
    /// divided by `deadline_speed` counts as a missed deadline.
    Free { deadline_speed: f64 },
}

#[derive(Debug, Clone)]
pub enum MicSource {
    Silence,
    /// Played once, then silence.
    Samples(Arc<Vec<f64>>),
    Looping(Arc<Vec<f64>>),
    /// The device's own output, delayed by the device latency and scaled.
    Echo { gain: f64 },
}

#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    name: String,
    fs: f64,
    block: usize,
    latency: usize,
    clock: SimClock,
    mic: MicSource,
    available: bool,
    // output history for the delayed loop-back channel
    history: Vec<f64>,
}

pub const SIMULATED_DEVICE_NAME: &str = "simulated";

impl SimulatedDevice {
    pub fn new(fs: f64, block: usize) -> Self {
        SimulatedDevice {
            name: SIMULATED_DEVICE_NAME.to_string(),
            fs,
            block,
            latency: 0,
            clock: SimClock::Free { deadline_speed: 1.0 },
            mic: MicSource::Silence,
            available: true,
            history: Vec::new(),
        }
    }

    pub fn with_latency(mut self, samples: usize) -> Self {
        self.latency = samples;
        self
    }

    pub fn with_clock(mut self, clock: SimClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_mic(mut self, mic: MicSource) -> Self {
        self.mic = mic;
        self
    }

    /// A device that fails to open, for error-path tests.
    pub fn unavailable(mut self) -> Self {
        self.available = false;
        self
    }

    pub fn set_mic(&mut self, mic: MicSource) {
        self.mic = mic;
    }

    pub fn latency(&self) -> usize {
        self.latency
    }

    fn mic_sample(&self, n: u64, echo: f64) -> f64 {
        match &self.mic {
            MicSource::Silence => 0.0,
            MicSource::Samples(s) => s.get(n as usize).copied().unwrap_or(0.0),
            MicSource::Looping(s) => {
                if s.is_empty() {
                    0.0
                } else {
                    s[(n % s.len() as u64) as usize]
                }
            }
            MicSource::Echo { gain } => gain * echo,
        }
    }
}

impl AudioBackend for SimulatedDevice {
    fn name(&self) -> &str {
        &self.name
    }

    fn sample_rate(&self) -> f64 {
        self.fs
    }

    fn block_size(&self) -> usize {
        self.block
    }

    fn run(
        &mut self,
        output: &mut OutputCallback<'_>,
        input: &mut InputCallback<'_>,
        max_blocks: Option<u64>,
        stop: &AtomicBool,
    ) -> Result<StreamStats> {
        if !self.available {
            return Err(Error::DeviceUnavailable(self.name.clone()));
        }
        let b = self.block;
        let period = Duration::from_secs_f64(b as f64 / self.fs);
        let deadline = match self.clock {
            SimClock::Paced { .. } => period,
            SimClock::Free { deadline_speed } => period.div_f64(deadline_speed.max(1e-9)),
        };
        // ring of past output long enough for the latency plus one block
        let hist_len = self.latency + b;
        self.history.clear();
        self.history.resize(hist_len, 0.0);
        let mut out_block = vec![0.0; b];
        let mut mic_block = vec![0.0; b];
        let mut loop_block = vec![0.0; b];
        let mut stats = StreamStats::default();
        let start = Instant::now();
        let mut index: u64 = 0;
        loop {
            if stop.load(Ordering::Acquire) || max_blocks.is_some_and(|m| index >= m) {
                break;
            }
            if let SimClock::Paced { speed } = self.clock {
                let due = period.mul_f64(index as f64 / speed.max(1e-9));
                let now = start.elapsed();
                if due > now {
                    std::thread::sleep(due - now);
                } else if now - due > period {
                    // the stream fell more than a block behind its schedule
                    stats.underruns += 1;
                }
            }

            out_block.iter_mut().for_each(|v| *v = 0.0);
            let t = Instant::now();
            let more = output(index, &mut out_block);
            let spent = t.elapsed();
            stats.max_callback = stats.max_callback.max(spent);
            if spent > deadline {
                stats.underruns += 1;
            }

            let base = index * b as u64;
            for i in 0..b {
                let n = base + i as u64;
                let slot = (n % hist_len as u64) as usize;
                self.history[slot] = out_block[i];
                let delayed = if n >= self.latency as u64 {
                    self.history[((n - self.latency as u64) % hist_len as u64) as usize]
                } else {
                    0.0
                };
                loop_block[i] = delayed;
                mic_block[i] = self.mic_sample(n, delayed);
            }

            let t = Instant::now();
            input(index, &mic_block, &loop_block);
            let spent_in = t.elapsed();
            stats.max_callback = stats.max_callback.max(spent_in);
            if spent_in > deadline {
                stats.overruns += 1;
            }
            index += 1;
            stats.blocks = index;
            if !more {
                break;
            }
        }
        stats.wall_time = start.elapsed();
        Ok(stats)
    }
}

/// Names of the available backends.
pub fn list_devices() -> Vec<String> {
    vec![SIMULATED_DEVICE_NAME.to_string()]
}

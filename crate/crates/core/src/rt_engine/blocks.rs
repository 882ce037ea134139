//! Block producers and consumers used inside the streaming callbacks. Every
//! buffer is allocated when the object is built; the per-block methods only
//! copy into it.

use std::sync::Arc;

use crossbeam::queue::ArrayQueue;
use serde::{Deserialize, Serialize};

use crate::calibration::RmsMeter;
use crate::fo_tracker::{self, DisplaySmoother, IfEstimator};

use super::ring::RingBuffer;

pub trait BlockSource: Send {
    /// Fill `out` (already zeroed). Returns false once the source is exhausted;
    /// the block that reports exhaustion may be partially filled.
    fn fill(&mut self, out: &mut [f64]) -> bool;
}

pub trait BlockSink: Send {
    fn consume(&mut self, voice: &[f64], loopback: &[f64]);
}

/// Plays a precomputed buffer once.
pub struct BufferSource {
    samples: Arc<Vec<f64>>,
    pos: usize,
}

impl BufferSource {
    pub fn new(samples: Arc<Vec<f64>>) -> Self {
        BufferSource { samples, pos: 0 }
    }
}

impl BlockSource for BufferSource {
    fn fill(&mut self, out: &mut [f64]) -> bool {
        let n = out.len().min(self.samples.len() - self.pos);
        out[..n].copy_from_slice(&self.samples[self.pos..self.pos + n]);
        self.pos += n;
        self.pos < self.samples.len()
    }
}

/// Repeats a precomputed buffer indefinitely.
pub struct LoopingSource {
    samples: Arc<Vec<f64>>,
    pos: usize,
}

impl LoopingSource {
    pub fn new(samples: Arc<Vec<f64>>) -> Self {
        LoopingSource { samples, pos: 0 }
    }
}

impl BlockSource for LoopingSource {
    fn fill(&mut self, out: &mut [f64]) -> bool {
        if self.samples.is_empty() {
            return true;
        }
        for v in out.iter_mut() {
            *v = self.samples[self.pos];
            self.pos = (self.pos + 1) % self.samples.len();
        }
        true
    }
}

pub struct SilenceSource;

impl BlockSource for SilenceSource {
    fn fill(&mut self, _out: &mut [f64]) -> bool {
        true
    }
}

pub struct NullSink;

impl BlockSink for NullSink {
    fn consume(&mut self, _voice: &[f64], _loopback: &[f64]) {}
}

/// Stereo capture of exactly `len` samples per channel; extra input is dropped.
pub struct CaptureSink {
    pub voice: Vec<f64>,
    pub loopback: Vec<f64>,
    len: usize,
}

impl CaptureSink {
    pub fn new(len: usize) -> Self {
        CaptureSink {
            voice: Vec::with_capacity(len),
            loopback: Vec::with_capacity(len),
            len,
        }
    }

    pub fn is_full(&self) -> bool {
        self.voice.len() >= self.len
    }

    pub fn into_channels(self) -> (Vec<f64>, Vec<f64>) {
        (self.voice, self.loopback)
    }
}

impl BlockSink for CaptureSink {
    fn consume(&mut self, voice: &[f64], loopback: &[f64]) {
        let n = voice.len().min(self.len - self.voice.len());
        self.voice.extend_from_slice(&voice[..n]);
        self.loopback.extend_from_slice(&loopback[..n]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchEvent {
    pub block: u64,
    pub time: f64,
    /// Smoothed f_o; `None` when unvoiced.
    pub fo_hz: Option<f64>,
    pub cents_re_target: Option<f64>,
    #[serde(with = "crate::float_serde")]
    pub level_dbfs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeterEvent {
    pub block: u64,
    pub time: f64,
    /// RMS over the meter window.
    #[serde(with = "crate::float_serde")]
    pub level_dbfs: f64,
    /// Largest absolute sample of the latest block.
    #[serde(with = "crate::float_serde")]
    pub peak_dbfs: f64,
}

/// Live pitch monitor: the microphone goes into a ring; after every block the
/// latest `W + 1` samples are analyzed and a smoothed pitch event is queued.
pub struct PitchSink {
    ring: Arc<RingBuffer>,
    estimator: IfEstimator,
    segment: Vec<f64>,
    smoother: DisplaySmoother,
    events: Arc<ArrayQueue<PitchEvent>>,
    fs: f64,
    target_fo: f64,
    band: (f64, f64),
    block: u64,
    samples: u64,
}

impl PitchSink {
    pub fn new(fs: f64, target_fo: f64, events: Arc<ArrayQueue<PitchEvent>>) -> Self {
        let w = fo_tracker::WINDOW;
        PitchSink {
            ring: Arc::new(RingBuffer::new(2 * (w + 1))),
            estimator: IfEstimator::new(w),
            segment: vec![0.0; w + 1],
            smoother: DisplaySmoother::new(fo_tracker::DISPLAY_ALPHA).expect("constant alpha is valid"),
            events,
            fs,
            target_fo,
            band: fo_tracker::search_band(target_fo, fo_tracker::SEARCH_SEMITONES),
            block: 0,
            samples: 0,
        }
    }

    pub fn ring(&self) -> Arc<RingBuffer> {
        Arc::clone(&self.ring)
    }
}

impl BlockSink for PitchSink {
    fn consume(&mut self, voice: &[f64], _loopback: &[f64]) {
        self.ring.write(voice);
        self.samples += voice.len() as u64;
        let time = self.samples as f64 / self.fs;
        let mut level = f64::NEG_INFINITY;
        let mut fo = None;
        if self.ring.snapshot(&mut self.segment) {
            if let Ok(e) = self.estimator.estimate(&self.segment, self.fs, self.band.0, self.band.1) {
                level = e.rms_dbfs;
                let voiced = e.rms_dbfs >= fo_tracker::VOICING_RMS_DBFS
                    && e.quality >= fo_tracker::VOICING_MIN_QUALITY
                    && e.fo_hz >= self.band.0
                    && e.fo_hz <= self.band.1;
                fo = voiced.then_some(e.fo_hz);
            }
        }
        let smoothed = self.smoother.update(fo);
        let event = PitchEvent {
            block: self.block,
            time,
            fo_hz: smoothed,
            cents_re_target: smoothed.map(|f| 1200.0 * (f / self.target_fo).log2()),
            level_dbfs: level,
        };
        // a full queue means the consumer is behind; drop the oldest
        let _ = self.events.force_push(event);
        self.block += 1;
    }
}

/// Level meter: RMS over the last 0.5 s of microphone input and block peak.
pub struct MeterSink {
    meter: RmsMeter,
    events: Arc<ArrayQueue<MeterEvent>>,
    fs: f64,
    block: u64,
    samples: u64,
}

impl MeterSink {
    pub fn new(fs: f64, events: Arc<ArrayQueue<MeterEvent>>) -> Self {
        MeterSink {
            meter: RmsMeter::new(fs),
            events,
            fs,
            block: 0,
            samples: 0,
        }
    }
}

impl BlockSink for MeterSink {
    fn consume(&mut self, voice: &[f64], _loopback: &[f64]) {
        self.meter.push(voice);
        self.samples += voice.len() as u64;
        let _ = self.events.force_push(MeterEvent {
            block: self.block,
            time: self.samples as f64 / self.fs,
            level_dbfs: self.meter.level_dbfs(),
            peak_dbfs: crate::dsp::amp_to_db(crate::dsp::peak(voice)),
        });
        self.block += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffer_source_reports_exhaustion() {
        let mut s = BufferSource::new(Arc::new(vec![1.0; 10]));
        let mut out = [0.0; 4];
        assert!(s.fill(&mut out));
        assert!(s.fill(&mut out));
        let mut last = [0.0; 4];
        assert!(!s.fill(&mut last));
        assert_eq!(last, [1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn capture_trims_to_length() {
        let mut c = CaptureSink::new(5);
        c.consume(&[1.0; 4], &[2.0; 4]);
        c.consume(&[1.0; 4], &[2.0; 4]);
        assert!(c.is_full());
        let (v, l) = c.into_channels();
        assert_eq!((v.len(), l.len()), (5, 5));
    }

    #[test]
    fn pitch_sink_reports_tone() {
        let q = Arc::new(ArrayQueue::new(64));
        let mut p = PitchSink::new(44100.0, 200.0, Arc::clone(&q));
        let tone: Vec<f64> = (0..1024 * 8)
            .map(|i| 0.3 * (std::f64::consts::TAU * 210.0 * i as f64 / 44100.0).sin())
            .collect();
        for b in tone.chunks(1024) {
            p.consume(b, b);
        }
        let events: Vec<PitchEvent> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(events.len(), 8);
        assert!(events[0].fo_hz.is_none());
        let last = events.last().unwrap();
        assert!((last.fo_hz.unwrap() - 210.0).abs() < 0.01);
    }
}

//! Pink-noise playback signal, RMS metering, and the dBFS to dB SPL binding.

use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::orthomix;
use crate::rng::SeededRng;

pub const PINK_LEVEL_DBFS: f64 = -20.0;
pub const PINK_BAND: (f64, f64) = (20.0, 20000.0);
pub const METER_WINDOW_S: f64 = 0.5;
pub const DISPLAY_FLOOR_DBFS: f64 = -90.0;
pub const STABILITY_WINDOW_S: f64 = 1.0;
pub const STABILITY_MAX_STD_DB: f64 = 0.5;

/// Gaussian white noise, pink-shaped, band-limited to 20 Hz to 20 kHz, and
/// scaled to -20 dBFS RMS.
pub fn generate_pink_noise(duration: f64, fs: f64, seed: u64) -> Result<Vec<f64>> {
    if !(duration > 0.0) || !(fs > 0.0) {
        return Err(Error::InvalidInput("duration and fs must be positive".into()));
    }
    let n = (duration * fs).round() as usize;
    if n == 0 {
        return Err(Error::InvalidInput("duration shorter than one sample".into()));
    }
    let mut rng = SeededRng::new(seed);
    let white: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
    let shaped = orthomix::pink_shape(&white, fs);
    let mut spec = dsp::fft_real(&shaped);
    for (k, c) in spec.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f < PINK_BAND.0 || f > PINK_BAND.1 {
            *c = 0.0.into();
        }
    }
    let band = dsp::ifft_real(spec);
    let r = dsp::rms(&band);
    if r == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let g = dsp::db_to_amp(PINK_LEVEL_DBFS) / r;
    Ok(band.into_iter().map(|v| v * g).collect())
}

/// RMS level in dBFS; `-inf` for silence or an empty slice.
pub fn rms_dbfs(x: &[f64]) -> f64 {
    dsp::amp_to_db(dsp::rms(x))
}

/// Level clamped to the meter's display floor.
pub fn display_level(dbfs: f64) -> f64 {
    if dbfs.is_nan() {
        DISPLAY_FLOOR_DBFS
    } else {
        dbfs.max(DISPLAY_FLOOR_DBFS)
    }
}

pub fn running_rms(snapshot: &[f64]) -> Result<f64> {
    if snapshot.is_empty() {
        return Err(Error::InvalidInput("empty meter snapshot".into()));
    }
    Ok(rms_dbfs(snapshot))
}

/// Running mean square over the last `capacity` samples, updated per block
/// without allocation.
#[derive(Debug, Clone)]
pub struct RmsMeter {
    ring: Vec<f64>,
    pos: usize,
    filled: usize,
    sum_sq: f64,
    since_resync: usize,
}

impl RmsMeter {
    pub fn new(fs: f64) -> Self {
        Self::with_capacity(((METER_WINDOW_S * fs).round() as usize).max(1))
    }

    pub fn with_capacity(capacity: usize) -> Self {
        RmsMeter {
            ring: vec![0.0; capacity.max(1)],
            pos: 0,
            filled: 0,
            sum_sq: 0.0,
            since_resync: 0,
        }
    }

    pub fn push(&mut self, block: &[f64]) {
        let cap = self.ring.len();
        for &v in block {
            let old = self.ring[self.pos];
            self.sum_sq += v * v - old * old;
            self.ring[self.pos] = v;
            self.pos = (self.pos + 1) % cap;
            self.filled = (self.filled + 1).min(cap);
        }
        // recompute now and then so rounding in the running sum cannot drift
        self.since_resync += block.len();
        if self.since_resync >= 16 * cap {
            self.sum_sq = self.ring.iter().map(|v| v * v).sum();
            self.since_resync = 0;
        }
    }

    pub fn level_dbfs(&self) -> f64 {
        if self.filled == 0 {
            return f64::NEG_INFINITY;
        }
        dsp::amp_to_db((self.sum_sq.max(0.0) / self.filled as f64).sqrt())
    }

    pub fn reset(&mut self) {
        self.ring.iter_mut().for_each(|v| *v = 0.0);
        self.pos = 0;
        self.filled = 0;
        self.sum_sq = 0.0;
    }
}

/// Recent meter readings with timestamps (seconds), for the stability gate.
#[derive(Debug, Clone, Default)]
pub struct LevelHistory {
    readings: VecDeque<(f64, f64)>,
}

impl LevelHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, dbfs: f64) {
        self.readings.push_back((time, dbfs));
        while let Some(&(t0, _)) = self.readings.front() {
            if time - t0 > 2.0 * STABILITY_WINDOW_S {
                self.readings.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn latest(&self) -> Option<f64> {
        self.readings.back().map(|r| r.1)
    }

    pub fn clear(&mut self) {
        self.readings.clear();
    }

    /// Mean and standard deviation of the readings within the last second.
    /// Requires readings that span at least the whole window.
    pub fn stability(&self) -> Option<(f64, f64)> {
        let &(t_end, _) = self.readings.back()?;
        let &(t_first, _) = self.readings.front()?;
        if t_end - t_first < STABILITY_WINDOW_S * 0.999 {
            return None;
        }
        let vals: Vec<f64> = self
            .readings
            .iter()
            .filter(|(t, _)| t_end - t <= STABILITY_WINDOW_S + 1e-9)
            .map(|r| r.1)
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Some((f64::NEG_INFINITY, f64::INFINITY));
        }
        let m = dsp::mean(&vals);
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
        Some((m, var.sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceLevel {
    #[serde(rename = "70")]
    Spl70,
    #[serde(rename = "80")]
    Spl80,
}

impl ReferenceLevel {
    pub fn db(&self) -> f64 {
        match self {
            ReferenceLevel::Spl70 => 70.0,
            ReferenceLevel::Spl80 => 80.0,
        }
    }

    pub fn from_db(db: f64) -> Result<Self> {
        if db == 70.0 {
            Ok(ReferenceLevel::Spl70)
        } else if db == 80.0 {
            Ok(ReferenceLevel::Spl80)
        } else {
            Err(Error::InvalidInput(format!("reference must be 70 or 80 dB, got {db}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGain {
    pub offset_db: f64,
    pub reference_spl: f64,
    pub measured_dbfs: f64,
    pub bound_at: DateTime<Utc>,
}

impl CalibrationGain {
    /// Written relative to the bound reading so that the reading itself maps
    /// back to the reference without rounding.
    pub fn dbfs_to_spl(&self, dbfs: f64) -> f64 {
        self.reference_spl + (dbfs - self.measured_dbfs)
    }

    pub fn describe(&self) -> String {
        format!(
            "{:.1} dBFS = {:.0} dB SPL (offset {:.2} dB)",
            self.measured_dbfs, self.reference_spl, self.offset_db
        )
    }
}

pub fn bind_reference(measured_dbfs: f64, reference: ReferenceLevel, at: DateTime<Utc>) -> Result<CalibrationGain> {
    if !measured_dbfs.is_finite() {
        return Err(Error::InvalidInput("no signal to calibrate against".into()));
    }
    Ok(CalibrationGain {
        offset_db: reference.db() - measured_dbfs,
        reference_spl: reference.db(),
        measured_dbfs,
        bound_at: at,
    })
}

/// Calibration state: unbound until [`Calibrator::bind`] succeeds, then
/// immutable until [`Calibrator::reset`].
#[derive(Debug, Clone, Default)]
pub struct Calibrator {
    gain: Option<CalibrationGain>,
}

impl Calibrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn gain(&self) -> Option<&CalibrationGain> {
        self.gain.as_ref()
    }

    pub fn is_calibrated(&self) -> bool {
        self.gain.is_some()
    }

    /// Bind against the stable meter history.
    pub fn bind(&mut self, history: &LevelHistory, reference: ReferenceLevel, at: DateTime<Utc>) -> Result<&CalibrationGain> {
        if self.gain.is_some() {
            return Err(Error::AlreadyCalibrated);
        }
        let (mean, std) = history.stability().ok_or(Error::UnstableLevel { std_db: f64::INFINITY })?;
        if !(std <= STABILITY_MAX_STD_DB) {
            return Err(Error::UnstableLevel { std_db: std });
        }
        let level = history.latest().unwrap_or(mean);
        self.gain = Some(bind_reference(level, reference, at)?);
        Ok(self.gain.as_ref().expect("just bound"))
    }

    /// Bind an explicit measurement, skipping the stability gate.
    pub fn bind_measured(&mut self, measured_dbfs: f64, reference: ReferenceLevel, at: DateTime<Utc>) -> Result<&CalibrationGain> {
        if self.gain.is_some() {
            return Err(Error::AlreadyCalibrated);
        }
        self.gain = Some(bind_reference(measured_dbfs, reference, at)?);
        Ok(self.gain.as_ref().expect("just bound"))
    }

    pub fn restore(&mut self, gain: CalibrationGain) {
        self.gain = Some(gain);
    }

    pub fn reset(&mut self) {
        self.gain = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steady(level: f64) -> LevelHistory {
        let mut h = LevelHistory::new();
        for i in 0..=44 {
            h.push(i as f64 * 1024.0 / 44100.0, level);
        }
        h
    }

    #[test]
    fn meter_examples() {
        let sq: Vec<f64> = (0..22050).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(rms_dbfs(&sq).abs() < 1e-12);
        let sine: Vec<f64> = (0..44100)
            .map(|i| (std::f64::consts::TAU * 1000.0 * i as f64 / 44100.0).sin())
            .collect();
        assert!((rms_dbfs(&sine) + 3.0103).abs() < 0.01);
        assert_eq!(display_level(rms_dbfs(&[0.0; 10])), DISPLAY_FLOOR_DBFS);
    }

    #[test]
    fn ring_meter_tracks_window() {
        let mut m = RmsMeter::with_capacity(100);
        assert_eq!(m.level_dbfs(), f64::NEG_INFINITY);
        m.push(&[1.0; 100]);
        assert!(m.level_dbfs().abs() < 1e-12);
        m.push(&[0.5; 100]);
        assert!((m.level_dbfs() - dsp::amp_to_db(0.5)).abs() < 1e-9);
    }

    #[test]
    fn offset_arithmetic() {
        let mut c = Calibrator::new();
        let g = c.bind_measured(-30.0, ReferenceLevel::Spl70, Utc::now()).unwrap().clone();
        assert_eq!(g.offset_db, 100.0);
        assert_eq!(g.dbfs_to_spl(-25.0), 75.0);
        assert_eq!(g.dbfs_to_spl(-30.0), 70.0);
        assert!(matches!(
            c.bind_measured(-30.0, ReferenceLevel::Spl80, Utc::now()),
            Err(Error::AlreadyCalibrated)
        ));
        c.reset();
        assert!(!c.is_calibrated());
    }

    #[test]
    fn stability_gate() {
        let mut c = Calibrator::new();
        let mut h = LevelHistory::new();
        for i in 0..=44 {
            let v = if i % 2 == 0 { -28.0 } else { -32.0 };
            h.push(i as f64 * 1024.0 / 44100.0, v);
        }
        assert!(matches!(
            c.bind(&h, ReferenceLevel::Spl70, Utc::now()),
            Err(Error::UnstableLevel { .. })
        ));
        assert!(c.bind(&steady(-30.0), ReferenceLevel::Spl80, Utc::now()).is_ok());
        assert_eq!(c.gain().unwrap().offset_db, 110.0);
    }

    #[test]
    fn short_history_is_not_stable() {
        let mut h = LevelHistory::new();
        h.push(0.0, -30.0);
        h.push(0.2, -30.0);
        assert!(h.stability().is_none());
    }

    #[test]
    fn pink_noise_level_and_determinism() {
        let a = generate_pink_noise(1.0, 44100.0, 5).unwrap();
        let b = generate_pink_noise(1.0, 44100.0, 5).unwrap();
        assert_eq!(a, b);
        assert!((rms_dbfs(&a) + 20.0).abs() < 0.05);
    }

    #[test]
    fn reference_levels() {
        assert_eq!(ReferenceLevel::from_db(70.0).unwrap(), ReferenceLevel::Spl70);
        assert!(ReferenceLevel::from_db(75.0).is_err());
    }
}

//! Instantaneous-frequency f_o estimation from a pair of one-sample-shifted
//! windowed transforms.
//!
//! Both segments are packed into a single complex FFT (`z = w x0 + j w x1`)
//! and separated with the conjugate-symmetry identities. The phase advance of
//! the peak bin between the two transforms is the instantaneous frequency.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};

pub const WINDOW: usize = 4096;
pub const HOP_OFFLINE: usize = 256;
pub const HOP_LIVE: usize = 1024;
pub const KAISER_BETA: f64 = 16.0;
/// Half-width of the window's main lobe in bins, rounded up.
pub const MAINLOBE_BINS: usize = 6;
pub const VOICING_RMS_DBFS: f64 = -50.0;
pub const VOICING_MIN_QUALITY: f64 = 0.5;
pub const SEARCH_SEMITONES: f64 = 7.0;
pub const DISPLAY_ALPHA: f64 = 0.9;

pub fn hz_to_cents(f: f64, f_ref: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::NonPositiveFrequency(f));
    }
    if !(f_ref > 0.0) {
        return Err(Error::NonPositiveFrequency(f_ref));
    }
    Ok(1200.0 * (f / f_ref).log2())
}

/// Search band of +/- `semitones` around `center`.
pub fn search_band(center: f64, semitones: f64) -> (f64, f64) {
    let r = (semitones / 12.0).exp2();
    (center / r, center * r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IfEstimate {
    /// NaN when no peak could be evaluated.
    pub fo_hz: f64,
    /// Peak amplitude of the dominant sinusoid, dB re full scale.
    pub amplitude_dbfs: f64,
    /// Share of in-band power that lies inside the main lobe of the peak.
    pub quality: f64,
    /// RMS of the first segment, dB re full scale.
    pub rms_dbfs: f64,
}

/// Reusable estimator. All buffers are allocated up front, so
/// [`IfEstimator::estimate`] does not allocate and is safe for the audio path.
pub struct IfEstimator {
    window: Vec<f64>,
    window_power: f64,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl IfEstimator {
    pub fn new(window_len: usize) -> Self {
        let fft = dsp::plan_forward(window_len);
        let window = dsp::kaiser(window_len, KAISER_BETA);
        let window_power = window.iter().map(|w| w * w).sum();
        IfEstimator {
            scratch: vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            buf: vec![Complex64::new(0.0, 0.0); window_len],
            window,
            window_power,
            fft,
        }
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// `segment` holds `W + 1` samples; the two transforms cover `[0, W)` and `[1, W]`.
    pub fn estimate(&mut self, segment: &[f64], fs: f64, search_lo: f64, search_hi: f64) -> Result<IfEstimate> {
        let w = self.window.len();
        if segment.len() < w + 1 {
            return Err(Error::SignalTooShort {
                required: w + 1,
                available: segment.len(),
            });
        }
        if !(search_lo > 0.0 && search_lo < search_hi && search_hi < fs / 2.0) {
            return Err(Error::InvalidInput(format!(
                "search band {search_lo}..{search_hi} Hz invalid at {fs} Hz"
            )));
        }
        let mut ss = 0.0;
        for i in 0..w {
            ss += segment[i] * segment[i];
            self.buf[i] = Complex64::new(self.window[i] * segment[i], self.window[i] * segment[i + 1]);
        }
        let rms_dbfs = dsp::amp_to_db((ss / w as f64).sqrt());
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);

        let bin_hz = fs / w as f64;
        let b_lo = ((search_lo / bin_hz).ceil() as usize).max(1);
        let b_hi = ((search_hi / bin_hz).floor() as usize).min(w / 2 - 1);
        let unvoiced = IfEstimate {
            fo_hz: f64::NAN,
            amplitude_dbfs: f64::NEG_INFINITY,
            quality: 0.0,
            rms_dbfs,
        };
        if b_lo > b_hi || ss == 0.0 {
            return Ok(unvoiced);
        }
        let first = |buf: &[Complex64], k: usize| -> Complex64 { 0.5 * (buf[k] + buf[w - k].conj()) };
        let power = |buf: &[Complex64], k: usize| first(buf, k).norm_sqr();

        let mut peak_bin = b_lo;
        let mut peak_pow = -1.0;
        for k in b_lo..=b_hi {
            let p = power(&self.buf, k);
            if p > peak_pow {
                peak_pow = p;
                peak_bin = k;
            }
        }
        let main_lo = peak_bin.saturating_sub(MAINLOBE_BINS).max(1);
        let main_hi = (peak_bin + MAINLOBE_BINS).min(w / 2 - 1);
        let mut total = 0.0;
        let mut main_in_band = 0.0;
        for k in b_lo..=b_hi {
            let p = power(&self.buf, k);
            total += p;
            if (main_lo..=main_hi).contains(&k) {
                main_in_band += p;
            }
        }
        let main: f64 = (main_lo..=main_hi).map(|k| power(&self.buf, k)).sum();
        if total == 0.0 {
            return Ok(unvoiced);
        }

        let z = self.buf[peak_bin];
        let zc = self.buf[w - peak_bin].conj();
        let x1 = 0.5 * (z + zc);
        let x2 = Complex64::new(0.0, -0.5) * (z - zc);
        let fo_hz = fs * (x1.conj() * x2).arg() / std::f64::consts::TAU;
        // Parseval: a sinusoid of peak amplitude A leaves (A/2)^2 * W * sum(w^2)
        // in its main lobe on one side of the spectrum
        let amplitude = 2.0 * (main / (w as f64 * self.window_power)).sqrt();
        Ok(IfEstimate {
            fo_hz,
            amplitude_dbfs: dsp::amp_to_db(amplitude),
            quality: main_in_band / total,
            rms_dbfs,
        })
    }
}

/// One-shot convenience wrapper around [`IfEstimator`].
pub fn estimate_if_frame(segment: &[f64], fs: f64, search_lo: f64, search_hi: f64) -> Result<IfEstimate> {
    if segment.len() < 2 {
        return Err(Error::SignalTooShort {
            required: 2,
            available: segment.len(),
        });
    }
    IfEstimator::new(segment.len() - 1).estimate(segment, fs, search_lo, search_hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoFrame {
    pub time: f64,
    #[serde(with = "crate::float_serde")]
    pub fo_hz: f64,
    #[serde(with = "crate::float_serde")]
    pub cents_re_target: f64,
    #[serde(with = "crate::float_serde")]
    pub amplitude: f64,
    pub voiced: bool,
    #[serde(with = "crate::float_serde")]
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoTrajectory {
    pub frames: Vec<FoFrame>,
    pub hop: usize,
    pub window_length: usize,
    pub target_fo: f64,
    pub fs: f64,
}

impl FoTrajectory {
    pub fn frame_rate(&self) -> f64 {
        self.fs / self.hop as f64
    }

    pub fn voiced_count(&self) -> usize {
        self.frames.iter().filter(|f| f.voiced).count()
    }

    /// CSV with header `time_s,fo_hz,cents,amp_dbfs,voiced,quality`; unvoiced values are empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time_s,fo_hz,cents,amp_dbfs,voiced,quality")?;
        for f in &self.frames {
            if f.voiced {
                writeln!(
                    out,
                    "{:.6},{:.6},{:.4},{:.3},1,{:.4}",
                    f.time, f.fo_hz, f.cents_re_target, f.amplitude, f.quality
                )?;
            } else {
                writeln!(out, "{:.6},,,,0,{:.4}", f.time, f.quality)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub window: usize,
    pub hop: usize,
    pub voicing_rms_dbfs: f64,
    pub min_quality: f64,
    pub search_semitones: f64,
    /// Track this harmonic and divide its frequency by the index (1 = fundamental).
    pub harmonic: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            window: WINDOW,
            hop: HOP_OFFLINE,
            voicing_rms_dbfs: VOICING_RMS_DBFS,
            min_quality: VOICING_MIN_QUALITY,
            search_semitones: SEARCH_SEMITONES,
            harmonic: 1,
        }
    }
}

/// Track with the default configuration and the given hop; search band and
/// cents reference are both `target_fo`.
pub fn track(samples: &[f64], fs: f64, hop: usize, target_fo: f64) -> Result<FoTrajectory> {
    track_with(
        samples,
        fs,
        &TrackerConfig {
            hop,
            ..TrackerConfig::default()
        },
        target_fo,
        target_fo,
    )
}

/// Full tracker. The search band is centered on `search_center` (in terms of
/// the fundamental); cents are reported re `target_fo`.
pub fn track_with(
    samples: &[f64],
    fs: f64,
    cfg: &TrackerConfig,
    search_center: f64,
    target_fo: f64,
) -> Result<FoTrajectory> {
    if !(search_center > 0.0) {
        return Err(Error::NonPositiveFrequency(search_center));
    }
    if !(target_fo > 0.0) {
        return Err(Error::NonPositiveFrequency(target_fo));
    }
    if cfg.hop == 0 || cfg.harmonic == 0 {
        return Err(Error::InvalidInput("hop and harmonic must be positive".into()));
    }
    let w = cfg.window;
    if samples.len() < w + 1 {
        return Err(Error::SignalTooShort {
            required: w + 1,
            available: samples.len(),
        });
    }
    let k = cfg.harmonic as f64;
    let (lo, hi) = search_band(search_center, cfg.search_semitones);
    let mut est = IfEstimator::new(w);
    let n_frames = (samples.len() - w - 1) / cfg.hop + 1;
    let mut frames = Vec::with_capacity(n_frames);
    let mut prev = search_center;
    for j in 0..n_frames {
        let start = j * cfg.hop;
        // an upper harmonic is followed within half a harmonic spacing of the
        // last estimate, so neighbouring harmonics never enter the band
        let (band_lo, band_hi) = if cfg.harmonic > 1 {
            ((k * prev - prev / 2.0).max(k * lo), (k * prev + prev / 2.0).min(k * hi))
        } else {
            (k * lo, k * hi)
        };
        let e = est.estimate(&samples[start..start + w + 1], fs, band_lo, band_hi)?;
        let fo = e.fo_hz / k;
        let voiced = e.rms_dbfs >= cfg.voicing_rms_dbfs
            && e.quality >= cfg.min_quality
            && fo >= lo
            && fo <= hi;
        if voiced {
            prev = fo;
        }
        frames.push(FoFrame {
            time: (start as f64 + w as f64 / 2.0) / fs,
            fo_hz: if voiced { fo } else { f64::NAN },
            cents_re_target: if voiced { hz_to_cents(fo, target_fo)? } else { f64::NAN },
            amplitude: e.amplitude_dbfs,
            voiced,
            quality: e.quality,
        });
    }
    Ok(FoTrajectory {
        frames,
        hop: cfg.hop,
        window_length: w,
        target_fo,
        fs,
    })
}

/// First-order IIR smoothing for the live display. An unvoiced input clears
/// the state, so the next voiced value restarts the filter.
#[derive(Debug, Clone, Copy)]
pub struct DisplaySmoother {
    alpha: f64,
    state: Option<f64>,
}

impl DisplaySmoother {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1)")));
        }
        Ok(DisplaySmoother { alpha, state: None })
    }

    pub fn update(&mut self, x: Option<f64>) -> Option<f64> {
        match x {
            None => {
                self.state = None;
                None
            }
            Some(v) => {
                let y = match self.state {
                    None => v,
                    Some(prev) => self.alpha * prev + (1.0 - self.alpha) * v,
                };
                self.state = Some(y);
                Some(y)
            }
        }
    }

    pub fn reset(&mut self) {
        self.state = None;
    }
}

/// Batch form of [`DisplaySmoother`]; NaN marks unvoiced input and output.
pub fn smooth_display(values: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let mut s = DisplaySmoother::new(alpha)?;
    Ok(values
        .iter()
        .map(|&v| s.update(v.is_finite().then_some(v)).unwrap_or(f64::NAN))
        .collect())
}

//! Simulated participant: a constant-pitch vowel whose f_o follows a linear,
//! delayed response to the stimulus modulation plus Gaussian jitter.

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::fo_tracker::HOP_OFFLINE;
use crate::rng::SeededRng;
use crate::stimulus::{self, Component, TestSignal};

pub const VOICE_LEVEL_DBFS: f64 = -20.0;
pub const FADE_IN_S: f64 = 0.02;

fn default_hop() -> usize {
    HOP_OFFLINE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectModel {
    pub base_fo: f64,
    pub latency: f64,
    /// Response taps at `ir_hop` sample spacing (cents of f_o per cent of stimulus).
    pub ir: Vec<f64>,
    /// Tap index that corresponds to zero delay beyond `latency`.
    #[serde(default)]
    pub ir_origin: usize,
    #[serde(default = "default_hop")]
    pub ir_hop: usize,
    pub jitter_rms: f64,
    pub jitter_seed: u64,
    /// (harmonic, amplitude) pairs of the synthetic vowel.
    pub vowel_spectrum: Vec<(usize, f64)>,
}

impl SubjectModel {
    /// Identity subject at `base_fo`: voice cents equal the stimulus cents.
    pub fn identity(base_fo: f64) -> Self {
        SubjectModel {
            base_fo,
            latency: 0.0,
            ir: vec![1.0],
            ir_origin: 0,
            ir_hop: HOP_OFFLINE,
            jitter_rms: 0.0,
            jitter_seed: 0,
            vowel_spectrum: default_vowel(),
        }
    }

    /// Delayed, smoothed response: a unit-sum two-sided exponential with time
    /// constant `tau`, truncated at three time constants and centered at `latency`.
    pub fn smoothed(base_fo: f64, latency: f64, tau: f64, gain: f64, fs: f64) -> Self {
        let (ir, ir_origin) = smoothing_ir(tau, HOP_OFFLINE, fs, gain);
        SubjectModel {
            base_fo,
            latency,
            ir,
            ir_origin,
            ir_hop: HOP_OFFLINE,
            jitter_rms: 0.0,
            jitter_seed: 0,
            vowel_spectrum: default_vowel(),
        }
    }

    pub fn validate(&self, period_s: Option<f64>, fs: f64) -> Result<()> {
        if !(self.base_fo > 0.0) {
            return Err(Error::ModelInvalid("base_fo must be positive".into()));
        }
        if !(self.latency >= 0.0) || !(self.jitter_rms >= 0.0) {
            return Err(Error::ModelInvalid("latency and jitter_rms must be non-negative".into()));
        }
        if self.ir.is_empty() || self.ir.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelInvalid("ir must be non-empty and finite".into()));
        }
        if self.ir_origin >= self.ir.len() {
            return Err(Error::ModelInvalid("ir_origin outside ir".into()));
        }
        if self.ir_hop == 0 {
            return Err(Error::ModelInvalid("ir_hop must be positive".into()));
        }
        if self.vowel_spectrum.is_empty()
            || self
                .vowel_spectrum
                .iter()
                .any(|&(k, a)| k == 0 || !a.is_finite() || a < 0.0)
        {
            return Err(Error::ModelInvalid("vowel spectrum needs positive harmonics with finite amplitudes".into()));
        }
        if let Some(t0) = period_s {
            let tail = (self.ir.len() - self.ir_origin) as f64 * self.ir_hop as f64 / fs;
            if self.latency + tail >= t0 {
                return Err(Error::ModelInvalid(format!(
                    "latency plus response support ({:.3} s) must be shorter than the period ({t0} s)",
                    self.latency + tail
                )));
            }
        }
        Ok(())
    }
}

pub fn default_vowel() -> Vec<(usize, f64)> {
    (1..=10).map(|k| (k, 1.0 / k as f64)).collect()
}

/// Unit-sum (times `gain`) zero-phase exponential `exp(-|t| / tau)` on a grid
/// of `hop` samples, truncated at `3 tau`. Returns taps and the center index.
pub fn smoothing_ir(tau: f64, hop: usize, fs: f64, gain: f64) -> (Vec<f64>, usize) {
    let dt = hop as f64 / fs;
    let half = (3.0 * tau / dt).floor() as usize;
    let mut ir: Vec<f64> = (0..=2 * half)
        .map(|j| (-((j as f64 - half as f64) * dt).abs() / tau).exp())
        .collect();
    let s: f64 = ir.iter().sum();
    ir.iter_mut().for_each(|v| *v *= gain / s);
    (ir, half)
}

/// Voice f_o trajectory in cents at every sample (before onset gating).
pub fn response_cents(m_cents: &[f64], model: &SubjectModel, fs: f64) -> Vec<f64> {
    let n = m_cents.len();
    let lat = model.latency * fs;
    let mut out = vec![0.0; n];
    for (j, &g) in model.ir.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let shift = lat + (j as f64 - model.ir_origin as f64) * model.ir_hop as f64;
        let whole = shift.round();
        if (shift - whole).abs() < 1e-9 {
            let d = whole as isize;
            for (i, o) in out.iter_mut().enumerate() {
                let src = i as isize - d;
                if src >= 0 && (src as usize) < n {
                    *o += g * m_cents[src as usize];
                }
            }
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o += g * dsp::cubic_at(m_cents, i as f64 - shift);
            }
        }
    }
    out
}

/// Frame-rate Gaussian jitter with standard deviation `rms`, linearly
/// interpolated to the sample grid.
pub fn jitter_cents(n: usize, rms: f64, hop: usize, seed: u64) -> Vec<f64> {
    if rms == 0.0 || n == 0 {
        return vec![0.0; n];
    }
    let mut rng = SeededRng::new(seed);
    let n_frames = n / hop + 2;
    let frames: Vec<f64> = (0..n_frames).map(|_| rms * rng.gaussian()).collect();
    (0..n)
        .map(|i| {
            let p = i as f64 / hop as f64;
            let j = p.floor() as usize;
            let t = p - j as f64;
            frames[j] * (1.0 - t) + frames[j + 1] * t
        })
        .collect()
}

pub fn simulate_subject(test: &TestSignal, model: &SubjectModel, onset: f64) -> Result<Vec<f64>> {
    let fs = test.spec.fs;
    if !(onset >= 0.0) {
        return Err(Error::ModelInvalid("onset must be non-negative".into()));
    }
    model.validate(Some(test.spec.period), fs)?;
    simulate_voice(&test.m_cents, model, onset, fs)
}

/// Core of [`simulate_subject`] for an arbitrary modulation sequence.
pub fn simulate_voice(m_cents: &[f64], model: &SubjectModel, onset: f64, fs: f64) -> Result<Vec<f64>> {
    model.validate(None, fs)?;
    let n = m_cents.len();
    let mut cents = response_cents(m_cents, model, fs);
    let jit = jitter_cents(n, model.jitter_rms, model.ir_hop, model.jitter_seed);
    for (c, j) in cents.iter_mut().zip(&jit) {
        *c += j;
    }
    let comps: Vec<Component> = model
        .vowel_spectrum
        .iter()
        .map(|&(harmonic, amplitude)| Component { harmonic, amplitude })
        .collect();
    let theta = vec![0.0; comps.len()];
    let raw = stimulus::synthesize_fm(&comps, &theta, model.base_fo, &cents, fs)?;
    let r = dsp::rms(&raw);
    if r == 0.0 {
        return Err(Error::ModelInvalid("vowel spectrum is silent".into()));
    }
    let g = dsp::db_to_amp(VOICE_LEVEL_DBFS) / r;
    let start = ((onset * fs).round() as usize).min(n);
    let fade = (FADE_IN_S * fs).round() as usize;
    Ok(raw
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if i < start {
                0.0
            } else if i - start < fade {
                let t = (i - start) as f64 / fade as f64;
                g * v * (0.5 - 0.5 * (std::f64::consts::PI * t).cos())
            } else {
                g * v
            }
        })
        .collect())
}

/// Linear trace expected from `model`, given one period of the recovered
/// stimulation trace sampled every `dt` seconds (treated as periodic).
pub fn predicted_linear(stimulation: &[f64], dt: f64, model: &SubjectModel, fs: f64) -> Vec<f64> {
    let n = stimulation.len();
    let at = |pos: f64| {
        let p = pos.rem_euclid(n as f64);
        let i = p.floor() as usize % n;
        let t = p - p.floor();
        stimulation[i] * (1.0 - t) + stimulation[(i + 1) % n] * t
    };
    (0..n)
        .map(|i| {
            model
                .ir
                .iter()
                .enumerate()
                .map(|(j, g)| {
                    let delay = model.latency + (j as f64 - model.ir_origin as f64) * model.ir_hop as f64 / fs;
                    g * at(i as f64 - delay / dt)
                })
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_response_is_exact() {
        let m: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.01).sin() * 50.0).collect();
        let r = response_cents(&m, &SubjectModel::identity(200.0), 44100.0);
        assert_eq!(r, m);
    }

    #[test]
    fn latency_shifts_response() {
        let mut m = vec![0.0; 10000];
        m[100] = 1.0;
        let mut model = SubjectModel::identity(200.0);
        model.latency = 1000.0 / 44100.0;
        let r = response_cents(&m, &model, 44100.0);
        assert!((r[1100] - 1.0).abs() < 1e-12);
        assert!(r.iter().enumerate().all(|(i, v)| i == 1100 || v.abs() < 1e-12));
    }

    #[test]
    fn smoothing_ir_is_unit_sum_and_symmetric() {
        let (ir, c) = smoothing_ir(0.08, 256, 44100.0, 1.0);
        assert!((ir.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(ir.len(), 2 * c + 1);
        for d in 0..=c {
            assert!((ir[c + d] - ir[c - d]).abs() < 1e-15);
        }
    }

    #[test]
    fn silence_before_onset() {
        let m = vec![0.0; 44100];
        let v = simulate_voice(&m, &SubjectModel::identity(150.0), 0.5, 44100.0).unwrap();
        assert!(v[..22050].iter().all(|&x| x == 0.0));
        assert!(v[23000..].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn invalid_models() {
        let mut m = SubjectModel::identity(150.0);
        m.jitter_rms = -1.0;
        assert!(matches!(m.validate(None, 44100.0), Err(Error::ModelInvalid(_))));
        let mut m = SubjectModel::smoothed(150.0, 0.45, 0.08, 1.0, 44100.0);
        assert!(m.validate(Some(0.5), 44100.0).is_err());
        m.latency = 0.15;
        assert!(m.validate(Some(0.5), 44100.0).is_ok());
    }

    #[test]
    fn jitter_level() {
        let j = jitter_cents(441000, 10.0, 256, 3);
        let frames: Vec<f64> = j.iter().step_by(256).copied().collect();
        let r = dsp::rms(&frames);
        assert!((r - 10.0).abs() < 0.5, "{r}");
    }
}

//! Decomposition of a two-channel recording (voice, loop-back) into the
//! stimulation, linear response, and random-and-time-varying traces.
//!
//! Both channels are tracked at frame rate and expressed in cents. The kernel
//! pulse positions are known from the stimulus spec (pulse `m` is centered at
//! sample `m * T0`), so recovery runs on the frame grid with decimated kernels
//! and fractional pulse positions.

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::fo_tracker::{self, FoTrajectory, TrackerConfig};
use crate::orthomix::{self, CombinationCatalog, MatchedKernel, SegmentLayout, CODE_PERIOD};
use crate::stimulus::{self, StimulusSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingPair {
    pub voice: Vec<f64>,
    pub loopback: Vec<f64>,
    pub fs: f64,
    pub spec: StimulusSpec,
    #[serde(default)]
    pub calibration_gain: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub hop: usize,
    pub window: usize,
    pub min_voiced_s: f64,
    pub max_gap_s: f64,
    pub loopback_tolerance_cents: f64,
    /// Share of the period shown before the pulse.
    pub pre_roll_fraction: f64,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            hop: fo_tracker::HOP_OFFLINE,
            window: fo_tracker::WINDOW,
            min_voiced_s: 10.0,
            max_gap_s: 0.1,
            loopback_tolerance_cents: 50.0,
            pre_roll_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDecomposition {
    /// Seconds from the maximum of the stimulation trace.
    pub lag: Vec<f64>,
    pub stimulation: Vec<f64>,
    pub linear: Vec<f64>,
    pub random_tv: Vec<f64>,
    pub voiced_span: (f64, f64),
    pub n_averages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub voice_median_fo: f64,
    pub loopback_offset_cents: f64,
    pub first_pulse: usize,
    pub n_periods: usize,
    /// Lag (s, relative to the pulse position) of the stimulation maximum.
    pub stimulation_peak_lag: f64,
    pub voice: FoTrajectory,
    pub loopback: FoTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub decomposition: ResponseDecomposition,
    pub diagnostics: Diagnostics,
}

impl ResponseDecomposition {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lag_s,stimulation_cents,linear_cents,random_tv_cents")?;
        for i in 0..self.lag.len() {
            writeln!(
                out,
                "{:.6},{:.6},{:.6},{:.6}",
                self.lag[i], self.stimulation[i], self.linear[i], self.random_tv[i]
            )?;
        }
        Ok(())
    }

    /// Lag of the largest absolute value of the linear trace.
    pub fn linear_peak_lag(&self) -> f64 {
        let i = argmax_abs(&self.linear);
        self.lag[i]
    }
}

fn argmax_abs(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|p| p.0)
        .unwrap_or(0)
}

/// Longest run of voiced frames, bridging unvoiced gaps of at most `max_gap_s`.
/// Returns the run as frame indices `(first, last)` inclusive.
pub fn voiced_frames(traj: &FoTrajectory, max_gap_s: f64) -> Result<(usize, usize)> {
    let max_gap = (max_gap_s * traj.frame_rate()).floor() as usize;
    let mut best: Option<(usize, usize)> = None;
    let mut run: Option<(usize, usize)> = None;
    for (i, f) in traj.frames.iter().enumerate() {
        if !f.voiced {
            continue;
        }
        run = match run {
            Some((s, e)) if i - e - 1 <= max_gap => Some((s, i)),
            _ => Some((i, i)),
        };
        let r = run.expect("set above");
        if best.is_none_or(|b| r.1 - r.0 > b.1 - b.0) {
            best = Some(r);
        }
    }
    best.ok_or(Error::NoVoicing)
}

/// Time interval of [`voiced_frames`].
pub fn voiced_region(traj: &FoTrajectory) -> Result<(f64, f64)> {
    let (a, b) = voiced_frames(traj, AnalyzerConfig::default().max_gap_s)?;
    Ok((traj.frames[a].time, traj.frames[b].time))
}

/// Cents of the voiced frames in `first..=last`, with unvoiced holes filled by
/// linear interpolation (the run never has holes longer than the bridging limit).
fn fill_gaps(traj: &FoTrajectory, reference: f64, first: usize, last: usize) -> Result<Vec<f64>> {
    let mut vals = Vec::with_capacity(last - first + 1);
    for f in &traj.frames[first..=last] {
        vals.push(if f.voiced {
            fo_tracker::hz_to_cents(f.fo_hz, reference)?
        } else {
            f64::NAN
        });
    }
    let mut i = 0;
    while i < vals.len() {
        if vals[i].is_nan() {
            let mut j = i;
            while vals[j].is_nan() {
                j += 1;
            }
            // a run starts and ends voiced, so i > 0 here
            let (a, b) = (vals[i - 1], vals[j]);
            let n = (j - i + 1) as f64;
            for k in i..j {
                vals[k] = a + (b - a) * (k - i + 1) as f64 / n;
            }
            i = j;
        }
        i += 1;
    }
    Ok(vals)
}

/// Lowest harmonic present in the stimulus type, used to track the loop-back.
pub fn loopback_harmonic(spec: &StimulusSpec) -> Result<usize> {
    Ok(stimulus::component_table_with(spec.signal_type, spec.fo, spec.fs, spec.mfndh_first)?[0].harmonic)
}

pub fn analyze_recording(rec: &RecordingPair, catalog: &CombinationCatalog) -> Result<AnalysisResult> {
    analyze_with(rec, catalog, &AnalyzerConfig::default())
}

pub fn analyze_with(rec: &RecordingPair, catalog: &CombinationCatalog, cfg: &AnalyzerConfig) -> Result<AnalysisResult> {
    let spec = &rec.spec;
    spec.validate()?;
    if rec.voice.len() != rec.loopback.len() {
        return Err(Error::InvalidInput("voice and loop-back lengths differ".into()));
    }
    if (rec.fs - spec.fs).abs() > 1e-9 {
        return Err(Error::InvalidInput("recording rate differs from the stimulus rate".into()));
    }
    let fs = rec.fs;
    let hop = cfg.hop;
    let w = cfg.window;

    let loop_cfg = TrackerConfig {
        window: w,
        hop,
        harmonic: loopback_harmonic(spec)?,
        ..TrackerConfig::default()
    };
    let loop_traj = fo_tracker::track_with(&rec.loopback, fs, &loop_cfg, spec.fo, spec.fo)?;
    let loop_cents: Vec<f64> = loop_traj
        .frames
        .iter()
        .filter(|f| f.voiced)
        .map(|f| f.cents_re_target)
        .collect();
    let offset = dsp::median(&loop_cents).ok_or(Error::LoopbackMismatch {
        offset_cents: f64::NAN,
    })?;
    if offset.abs() > cfg.loopback_tolerance_cents {
        return Err(Error::LoopbackMismatch { offset_cents: offset });
    }

    let voice_cfg = TrackerConfig {
        window: w,
        hop,
        ..TrackerConfig::default()
    };
    let mut voice_traj = fo_tracker::track_with(&rec.voice, fs, &voice_cfg, spec.target_fo, spec.target_fo)?;
    let (v0, v1) = voiced_frames(&voice_traj, cfg.max_gap_s)?;
    let span = (voice_traj.frames[v0].time, voice_traj.frames[v1].time);
    let voiced_s = (v1 - v0) as f64 * hop as f64 / fs;
    if voiced_s < cfg.min_voiced_s {
        return Err(Error::InsufficientVoicing {
            voiced_s,
            required_s: cfg.min_voiced_s,
        });
    }
    let voiced_fo: Vec<f64> = voice_traj.frames[v0..=v1]
        .iter()
        .filter(|f| f.voiced)
        .map(|f| f.fo_hz)
        .collect();
    let median_fo = dsp::median(&voiced_fo).ok_or(Error::NoVoicing)?;
    for f in voice_traj.frames.iter_mut() {
        if f.voiced {
            f.cents_re_target = fo_tracker::hz_to_cents(f.fo_hz, median_fo)?;
        }
    }
    voice_traj.target_fo = median_fo;

    // the loop-back is expected to be voiced throughout the voiced span
    for f in &loop_traj.frames[v0..=v1] {
        if !f.voiced {
            return Err(Error::LoopbackMismatch { offset_cents: offset });
        }
    }
    let voice_c = fill_gaps(&voice_traj, median_fo, v0, v1)?;
    let loop_c: Vec<f64> = loop_traj.frames[v0..=v1].iter().map(|f| f.cents_re_target).collect();

    // pulse geometry on the frame grid of the span (index 0 = frame v0)
    let t0 = spec.period_samples();
    let period_f = t0 as f64 / hop as f64;
    let pre = (cfg.pre_roll_fraction * period_f).round() as usize;
    let seg_len = period_f.floor() as usize;
    let params = catalog.params();
    let guard = (params.t_eff / 2.0 * fs / hop as f64).ceil() + 2.0;
    let pulse_frame = |m: usize| (m as f64 * t0 as f64 - w as f64 / 2.0) / hop as f64 - v0 as f64;
    let n_frames = voice_c.len() as f64;
    let mut first = None;
    let mut count = 0usize;
    let mut m = 0usize;
    loop {
        let p = pulse_frame(m);
        let start = p - pre as f64 - guard;
        let end = p - pre as f64 + seg_len as f64 + guard;
        if end > n_frames - 1.0 {
            break;
        }
        if start >= 0.0 {
            if first.is_none() {
                first = Some(m);
            }
            count += 1;
        }
        m += 1;
    }
    let n_periods = count / CODE_PERIOD * CODE_PERIOD;
    let first = first.ok_or(Error::TooFewPeriods(0))?;
    if n_periods < CODE_PERIOD {
        return Err(Error::TooFewPeriods(n_periods));
    }

    let voice_d = demean_blocks(&voice_c, pulse_frame(first) - pre as f64, period_f, n_periods);
    let loop_d = demean_blocks(&loop_c, pulse_frame(first) - pre as f64, period_f, n_periods);

    let units = catalog.kernels(spec.combination_id)?;
    let kernels: Vec<MatchedKernel> = units
        .iter()
        .map(|u| orthomix::decimate_kernel(u, hop))
        .collect::<Result<_>>()?;
    let codes = orthomix::mixture_codes(spec.seed);
    let layout = SegmentLayout {
        period: period_f,
        origin: pulse_frame(first),
        first_pulse: first,
        n_periods,
        pre_roll: pre,
        segment_len: seg_len,
        circular: false,
    };
    let stim = orthomix::recover_with_kernels(&loop_d, &kernels, &codes, &layout)?;
    let resp = orthomix::recover_with_kernels(&voice_d, &kernels, &codes, &layout)?;

    let peak = argmax_abs(&stim.linear);
    let dt = hop as f64 / fs;
    let lag: Vec<f64> = (0..seg_len).map(|i| (i as f64 - peak as f64) * dt).collect();
    Ok(AnalysisResult {
        decomposition: ResponseDecomposition {
            lag,
            stimulation: stim.linear,
            linear: resp.linear,
            random_tv: resp.random_tv,
            voiced_span: span,
            n_averages: resp.n_averages,
        },
        diagnostics: Diagnostics {
            voice_median_fo: median_fo,
            loopback_offset_cents: offset,
            first_pulse: first,
            n_periods,
            stimulation_peak_lag: stim.lags[peak] * dt,
            voice: voice_traj,
            loopback: loop_traj,
        },
    })
}

/// Removes the mean of each four-period block starting at frame `start`.
/// Frames before the first block or after the last use the nearest block's mean.
fn demean_blocks(x: &[f64], start: f64, period: f64, n_periods: usize) -> Vec<f64> {
    let n_blocks = n_periods / CODE_PERIOD;
    let block = period * CODE_PERIOD as f64;
    let bounds = |b: usize| {
        let a = (start + b as f64 * block).round().max(0.0) as usize;
        let e = ((start + (b + 1) as f64 * block).round() as usize).min(x.len());
        (a, e)
    };
    let means: Vec<f64> = (0..n_blocks)
        .map(|b| {
            let (a, e) = bounds(b);
            dsp::mean(&x[a..e])
        })
        .collect();
    x.iter()
        .enumerate()
        .map(|(i, v)| {
            let b = ((i as f64 - start) / block).floor();
            let b = b.clamp(0.0, (n_blocks - 1) as f64) as usize;
            v - means[b]
        })
        .collect()
}

//! Frequency-modulated harmonic test signals and their unmodulated targets.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::orthomix::{self, CombinationCatalog, CATALOG_COMBINATIONS};

pub const PEAK_TARGET: f64 = 0.8;
pub const TOTAL_RMS_DBFS: f64 = -26.0;
pub const COMPONENT_DBFS: f64 = -30.0;
pub const HIGHEST_HARMONIC: usize = 20;
pub const DEFAULT_MFNDH_FIRST: usize = 9;
pub const DEFAULT_PERIOD_S: f64 = 0.5;

macro_rules! menu_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let up = s.to_ascii_uppercase();
                $(if up == $text { return Ok($name::$variant); })+
                Err(Error::InvalidInput(format!(
                    "unknown {} '{s}'", stringify!($name)
                )))
            }
        }
    };
}

menu_enum!(SignalType { Sine => "SINE", Sines => "SINES", Mfnd => "MFND", Mfndh => "MFNDH" });
menu_enum!(Normalization { Peak => "PEAK", TotalRms => "TOTAL_RMS", Component => "COMPONENT" });
menu_enum!(PhaseAlloc { Sin => "SIN", Cos => "COS", Alt => "ALT", Sch => "SCH" });

fn default_mfndh_first() -> usize {
    DEFAULT_MFNDH_FIRST
}

fn default_period() -> f64 {
    DEFAULT_PERIOD_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusSpec {
    pub signal_type: SignalType,
    pub fo: f64,
    pub target_fo: f64,
    pub combination_id: usize,
    pub normalization: Normalization,
    pub phase_alloc: PhaseAlloc,
    pub depth: f64,
    pub duration: f64,
    pub fs: f64,
    pub seed: u64,
    /// Repetition interval of the kernel pulses in seconds.
    #[serde(default = "default_period")]
    pub period: f64,
    /// Lowest harmonic of the MFNDH type.
    #[serde(default = "default_mfndh_first")]
    pub mfndh_first: usize,
}

impl Default for StimulusSpec {
    fn default() -> Self {
        StimulusSpec {
            signal_type: SignalType::Sines,
            fo: 110.0,
            target_fo: 110.0,
            combination_id: 0,
            normalization: Normalization::Peak,
            phase_alloc: PhaseAlloc::Sch,
            depth: 100.0,
            duration: 20.0,
            fs: 44100.0,
            seed: 0,
            period: DEFAULT_PERIOD_S,
            mfndh_first: DEFAULT_MFNDH_FIRST,
        }
    }
}

impl StimulusSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0) {
            return Err(Error::Validation(format!("fs {} must be positive", self.fs)));
        }
        if !(self.fo > 0.0) || !(self.target_fo > 0.0) {
            return Err(Error::Validation("fo and target_fo must be positive".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::Validation("duration must be positive".into()));
        }
        if !(self.depth >= 0.0) {
            return Err(Error::Validation("depth must be non-negative".into()));
        }
        if !(self.period > 0.0) {
            return Err(Error::Validation("period must be positive".into()));
        }
        if self.combination_id >= CATALOG_COMBINATIONS {
            return Err(Error::UnknownCombination(self.combination_id));
        }
        if self.mfndh_first < 2 || self.mfndh_first > HIGHEST_HARMONIC {
            return Err(Error::Validation(format!(
                "mfndh_first {} outside 2..={HIGHEST_HARMONIC}",
                self.mfndh_first
            )));
        }
        for f in [self.fo, self.target_fo] {
            let table = component_table_with(self.signal_type, f, self.fs, self.mfndh_first)?;
            let top = table.last().map(|c| c.harmonic).unwrap_or(0);
            let full = harmonic_range(self.signal_type, self.mfndh_first);
            if top != *full.end() {
                return Err(Error::NyquistViolation {
                    freq: *full.end() as f64 * f,
                    nyquist: self.fs / 2.0,
                });
            }
        }
        Ok(())
    }

    pub fn period_samples(&self) -> usize {
        (self.period * self.fs).round() as usize
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.fs).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub harmonic: usize,
    pub amplitude: f64,
}

fn harmonic_range(signal_type: SignalType, mfndh_first: usize) -> std::ops::RangeInclusive<usize> {
    match signal_type {
        SignalType::Sine => 1..=1,
        SignalType::Sines => 1..=HIGHEST_HARMONIC,
        SignalType::Mfnd => 2..=HIGHEST_HARMONIC,
        SignalType::Mfndh => mfndh_first..=HIGHEST_HARMONIC,
    }
}

pub fn component_table(signal_type: SignalType, fo: f64, fs: f64) -> Result<Vec<Component>> {
    component_table_with(signal_type, fo, fs, DEFAULT_MFNDH_FIRST)
}

/// Harmonics of the type with unit amplitude; those at or above Nyquist are dropped.
pub fn component_table_with(
    signal_type: SignalType,
    fo: f64,
    fs: f64,
    mfndh_first: usize,
) -> Result<Vec<Component>> {
    if !(fo > 0.0) {
        return Err(Error::NonPositiveFrequency(fo));
    }
    let table: Vec<Component> = harmonic_range(signal_type, mfndh_first)
        .filter(|&k| (k as f64) * fo < fs / 2.0)
        .map(|harmonic| Component {
            harmonic,
            amplitude: 1.0,
        })
        .collect();
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(table)
}

/// Initial phase of each component, by rank in the table (1-based rank `n`):
/// SIN 0, COS pi/2, ALT 0 for odd rank and pi/2 for even, SCH `-pi n (n-1) / K`.
pub fn phase_offsets(alloc: PhaseAlloc, components: &[Component]) -> Vec<f64> {
    let k_total = components.len() as f64;
    (1..=components.len())
        .map(|n| match alloc {
            PhaseAlloc::Sin => 0.0,
            PhaseAlloc::Cos => PI / 2.0,
            PhaseAlloc::Alt => {
                if n % 2 == 1 {
                    0.0
                } else {
                    PI / 2.0
                }
            }
            PhaseAlloc::Sch => {
                let n = n as f64;
                -PI * n * (n - 1.0) / k_total
            }
        })
        .collect()
}

/// Harmonic complex whose fundamental phase advances by
/// `2 pi fo 2^(m[n]/1200) / fs` per sample; harmonic `k` uses exactly `k`
/// times the fundamental phase.
pub fn synthesize_fm(
    components: &[Component],
    theta: &[f64],
    fo: f64,
    m_cents: &[f64],
    fs: f64,
) -> Result<Vec<f64>> {
    if components.is_empty() {
        return Err(Error::EmptyTable);
    }
    if theta.len() != components.len() {
        return Err(Error::InvalidInput("one phase offset per component required".into()));
    }
    if !(fo > 0.0) {
        return Err(Error::NonPositiveFrequency(fo));
    }
    let k_max = components.iter().map(|c| c.harmonic).max().unwrap_or(1) as f64;
    let m_max = m_cents.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m_max.is_finite() {
        let top = k_max * fo * 2f64.powf(m_max / 1200.0);
        if top >= fs / 2.0 {
            return Err(Error::NyquistViolation {
                freq: top,
                nyquist: fs / 2.0,
            });
        }
    }
    let step = TAU * fo / fs;
    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(m_cents.len());
    for &m in m_cents {
        phase += step * (m / 1200.0).exp2();
        if phase >= TAU {
            phase -= TAU;
        }
        let mut s = 0.0;
        for (c, th) in components.iter().zip(theta) {
            s += c.amplitude * (c.harmonic as f64 * phase + th).sin();
        }
        out.push(s);
    }
    Ok(out)
}

/// Scales `samples` per `mode`. `reference_amplitude` is the amplitude
/// coefficient of the lowest component present, used by COMPONENT.
pub fn normalize(
    samples: &[f64],
    mode: Normalization,
    reference_amplitude: f64,
) -> Result<(Vec<f64>, f64)> {
    let pk = dsp::peak(samples);
    if pk == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let gain = match mode {
        Normalization::Peak => PEAK_TARGET / pk,
        Normalization::TotalRms => dsp::db_to_amp(TOTAL_RMS_DBFS) / dsp::rms(samples),
        Normalization::Component => {
            if !(reference_amplitude > 0.0) {
                return Err(Error::ZeroSignal);
            }
            dsp::db_to_amp(COMPONENT_DBFS) / reference_amplitude
        }
    };
    if pk * gain > 1.0 {
        return Err(Error::WouldClip { peak: pk * gain });
    }
    Ok((samples.iter().map(|v| v * gain).collect(), gain))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSignal {
    pub samples: Vec<f64>,
    pub spec: StimulusSpec,
    pub m_cents: Vec<f64>,
    pub applied_gain: f64,
    /// Effective code rows used to build the modulation.
    pub codes: orthomix::CodeMatrix,
    pub n_periods: usize,
}

fn components_for(spec: &StimulusSpec, fo: f64) -> Result<Vec<Component>> {
    component_table_with(spec.signal_type, fo, spec.fs, spec.mfndh_first)
}

pub fn make_test_signal(spec: &StimulusSpec, catalog: &CombinationCatalog) -> Result<TestSignal> {
    spec.validate()?;
    if (catalog.params().fs - spec.fs).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "catalog rate {} differs from signal rate {}",
            catalog.params().fs,
            spec.fs
        )));
    }
    let mix = orthomix::build_mixture(
        catalog,
        spec.combination_id,
        spec.period_samples(),
        spec.duration,
        spec.depth,
        spec.seed,
    )?;
    let comps = components_for(spec, spec.fo)?;
    let theta = phase_offsets(spec.phase_alloc, &comps);
    let raw = synthesize_fm(&comps, &theta, spec.fo, &mix.m_cents, spec.fs)?;
    let (samples, applied_gain) = normalize(&raw, spec.normalization, comps[0].amplitude)?;
    Ok(TestSignal {
        samples,
        spec: spec.clone(),
        m_cents: mix.m_cents,
        applied_gain,
        codes: mix.codes,
        n_periods: mix.n_periods,
    })
}

/// Same type, phases and normalization at `target_fo` without modulation.
pub fn make_target_signal(spec: &StimulusSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let comps = components_for(spec, spec.target_fo)?;
    let theta = phase_offsets(spec.phase_alloc, &comps);
    let zeros = vec![0.0; spec.n_samples()];
    let raw = synthesize_fm(&comps, &theta, spec.target_fo, &zeros, spec.fs)?;
    Ok(normalize(&raw, spec.normalization, comps[0].amplitude)?.0)
}

pub fn crest_factor(x: &[f64]) -> f64 {
    let r = dsp::rms(x);
    if r == 0.0 {
        0.0
    } else {
        dsp::peak(x) / r
    }
}

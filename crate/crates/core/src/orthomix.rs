//! Orthogonalized mixture of three unit kernels.
//!
//! Three kernels are repeated every `T0` samples, each weighted by its own
//! period-4 +/-1 code row. Because distinct rows are orthogonal under every
//! cyclic shift, averaging code-corrected, pulse-compressed segments cancels
//! the other kernels and keeps the linear response. Segments that share a code
//! phase carry identical deterministic content for a time-invariant system, so
//! their spread measures the random and time-varying part.
//!
//! The pulse train is built circularly over `n_periods * T0` samples, so it is
//! periodic with period `4 * T0` and every period is in steady state.

use std::path::Path;
use std::sync::OnceLock;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::capricep::{self, CapricepParams, UnitCapricep};
use crate::dsp;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const CODE_PERIOD: usize = 4;
pub const N_KERNELS: usize = 3;
pub const CATALOG_UNITS: usize = 10;
pub const CATALOG_COMBINATIONS: usize = 20;
/// Seed of the default catalog.
pub const DEFAULT_CATALOG_SEED: u64 = 20210601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeMatrix {
    rows: [[i8; CODE_PERIOD]; N_KERNELS],
}

pub fn build_code_matrix() -> CodeMatrix {
    CodeMatrix {
        rows: [[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1]],
    }
}

impl CodeMatrix {
    pub fn from_rows(rows: [[i8; CODE_PERIOD]; N_KERNELS]) -> Result<Self> {
        if rows.iter().flatten().any(|&v| v != 1 && v != -1) {
            return Err(Error::InvalidInput("code entries must be +1 or -1".into()));
        }
        let m = CodeMatrix { rows };
        for a in 0..N_KERNELS {
            for b in a + 1..N_KERNELS {
                if m.dot(a, b) != 0 {
                    return Err(Error::InvalidInput(format!("code rows {a} and {b} are not orthogonal")));
                }
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> &[[i8; CODE_PERIOD]; N_KERNELS] {
        &self.rows
    }

    /// Weight of kernel `k` at pulse index `m`.
    pub fn weight(&self, k: usize, m: usize) -> f64 {
        self.rows[k][m % CODE_PERIOD] as f64
    }

    pub fn dot(&self, a: usize, b: usize) -> i32 {
        (0..CODE_PERIOD)
            .map(|i| self.rows[a][i] as i32 * self.rows[b][i] as i32)
            .sum()
    }

    /// Rows advanced by `offset` pulses and multiplied by `polarity`.
    pub fn rotated(&self, offset: usize, polarity: i8) -> CodeMatrix {
        let mut rows = self.rows;
        for (k, row) in rows.iter_mut().enumerate() {
            for (m, v) in row.iter_mut().enumerate() {
                *v = polarity * self.rows[k][(m + offset) % CODE_PERIOD];
            }
        }
        CodeMatrix { rows }
    }
}

/// On-disk form of the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub seeds: Vec<u64>,
    pub combinations: Vec<[usize; N_KERNELS]>,
    #[serde(default)]
    pub params: CapricepParams,
}

/// Ten unit kernels and twenty ordered triples of them. Kernels are built on
/// first use.
#[derive(Debug)]
pub struct CombinationCatalog {
    seeds: Vec<u64>,
    combinations: Vec<[usize; N_KERNELS]>,
    params: CapricepParams,
    units: Vec<OnceLock<UnitCapricep>>,
}

impl CombinationCatalog {
    pub fn new(
        seeds: Vec<u64>,
        combinations: Vec<[usize; N_KERNELS]>,
        params: CapricepParams,
    ) -> Result<Self> {
        params.validate()?;
        if seeds.len() != CATALOG_UNITS {
            return Err(Error::Validation(format!(
                "catalog needs {CATALOG_UNITS} seeds, got {}",
                seeds.len()
            )));
        }
        if combinations.len() != CATALOG_COMBINATIONS {
            return Err(Error::Validation(format!(
                "catalog needs {CATALOG_COMBINATIONS} combinations, got {}",
                combinations.len()
            )));
        }
        for (i, c) in combinations.iter().enumerate() {
            if c.iter().any(|&u| u >= CATALOG_UNITS) {
                return Err(Error::Validation(format!("combination {i} references a missing unit")));
            }
            if c[0] == c[1] || c[0] == c[2] || c[1] == c[2] {
                return Err(Error::Validation(format!("combination {i} repeats a unit")));
            }
            if combinations[..i].contains(c) {
                return Err(Error::Validation(format!("combination {i} is a duplicate")));
            }
        }
        Ok(CombinationCatalog {
            units: (0..seeds.len()).map(|_| OnceLock::new()).collect(),
            seeds,
            combinations,
            params,
        })
    }

    /// Deterministic catalog drawn from `master_seed`: ten kernel seeds and
    /// twenty distinct ordered triples out of the 720 possible.
    pub fn generate(master_seed: u64, params: CapricepParams) -> Result<Self> {
        let mut rng = SeededRng::new(master_seed);
        let seeds: Vec<u64> = (0..CATALOG_UNITS)
            .map(|_| (rng.uniform() * (1u64 << 32) as f64) as u64)
            .collect();
        let mut combinations: Vec<[usize; N_KERNELS]> = Vec::with_capacity(CATALOG_COMBINATIONS);
        while combinations.len() < CATALOG_COMBINATIONS {
            let a = rng.below(CATALOG_UNITS);
            let b = rng.below(CATALOG_UNITS);
            let c = rng.below(CATALOG_UNITS);
            let t = [a, b, c];
            if a != b && a != c && b != c && !combinations.contains(&t) {
                combinations.push(t);
            }
        }
        Self::new(seeds, combinations, params)
    }

    pub fn default_catalog() -> Self {
        Self::generate(DEFAULT_CATALOG_SEED, CapricepParams::default())
            .expect("default catalog parameters are valid")
    }

    pub fn from_file_repr(file: CatalogFile) -> Result<Self> {
        Self::new(file.seeds, file.combinations, file.params)
    }

    pub fn to_file_repr(&self) -> CatalogFile {
        CatalogFile {
            seeds: self.seeds.clone(),
            combinations: self.combinations.clone(),
            params: self.params,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let file: CatalogFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_file_repr(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file_repr())?)?;
        Ok(())
    }

    pub fn params(&self) -> &CapricepParams {
        &self.params
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn combinations(&self) -> &[[usize; N_KERNELS]] {
        &self.combinations
    }

    pub fn combination(&self, id: usize) -> Result<[usize; N_KERNELS]> {
        self.combinations
            .get(id)
            .copied()
            .ok_or(Error::UnknownCombination(id))
    }

    pub fn unit(&self, index: usize) -> Result<&UnitCapricep> {
        let cell = self
            .units
            .get(index)
            .ok_or_else(|| Error::InvalidInput(format!("unit {index} out of range")))?;
        if let Some(u) = cell.get() {
            return Ok(u);
        }
        let p = self.params;
        let u = capricep::generate_unit_capricep(self.seeds[index], p.fs, p.length, p.t_eff, p.n_sections)?;
        Ok(cell.get_or_init(|| u))
    }

    pub fn kernels(&self, combination_id: usize) -> Result<[&UnitCapricep; N_KERNELS]> {
        let c = self.combination(combination_id)?;
        Ok([self.unit(c[0])?, self.unit(c[1])?, self.unit(c[2])?])
    }
}

#[derive(Debug, Clone)]
pub struct MixtureSequence {
    /// One full cycle, length `n_periods * period`.
    pub pulse_train: Vec<f64>,
    /// Modulation in cents, `duration * fs` samples (periodic extension of the cycle).
    pub m_cents: Vec<f64>,
    pub period: usize,
    pub n_periods: usize,
    pub combination: [usize; N_KERNELS],
    pub depth: f64,
    /// Effective codes, including the seeded rotation and polarity.
    pub codes: CodeMatrix,
    pub fs: f64,
}

/// Number of whole code cycles that fit into `duration`.
pub fn periods_for(duration: f64, fs: f64, period: usize) -> usize {
    let avail = (duration * fs).round() as usize;
    (avail / period) / CODE_PERIOD * CODE_PERIOD
}

/// Code rows used by [`build_mixture`] for `seed`: the base rows advanced by a
/// seeded number of pulses and multiplied by a seeded polarity.
pub fn mixture_codes(seed: u64) -> CodeMatrix {
    let mut rng = SeededRng::new(seed);
    let offset = rng.below(CODE_PERIOD);
    let polarity = rng.sign() as i8;
    build_code_matrix().rotated(offset, polarity)
}

pub fn build_mixture(
    catalog: &CombinationCatalog,
    combination_id: usize,
    period: usize,
    duration: f64,
    depth: f64,
    seed: u64,
) -> Result<MixtureSequence> {
    let kernels = catalog.kernels(combination_id)?;
    let params = catalog.params();
    let required = (2.0 * params.t_eff * params.fs).ceil() as usize;
    if period < required {
        return Err(Error::PeriodTooShort { period, required });
    }
    if !(depth >= 0.0) {
        return Err(Error::InvalidInput(format!("depth {depth} must be non-negative")));
    }
    let fs = params.fs;
    let total = (duration * fs).round() as usize;
    if total < CODE_PERIOD * period {
        return Err(Error::DurationTooShort {
            required: CODE_PERIOD * period,
            available: total,
        });
    }
    let n_periods = periods_for(duration, fs, period);

    let codes = mixture_codes(seed);

    let cycle = n_periods * period;
    let mut pulse_train = vec![0.0; cycle];
    for (k, u) in kernels.iter().enumerate() {
        let center = u.center();
        for m in 0..n_periods {
            let w = codes.weight(k, m);
            let start = (m * period + cycle - center % cycle) % cycle;
            for (i, &v) in u.samples().iter().enumerate() {
                pulse_train[(start + i) % cycle] += w * v;
            }
        }
    }

    let shaped = pink_shape(&pulse_train, fs);
    let pk = dsp::peak(&shaped);
    let gain = if pk > 0.0 { depth / pk } else { 0.0 };
    let m_cents: Vec<f64> = (0..total).map(|n| gain * shaped[n % cycle]).collect();

    Ok(MixtureSequence {
        pulse_train,
        m_cents,
        period,
        n_periods,
        combination: catalog.combination(combination_id)?,
        depth,
        codes,
        fs,
    })
}

/// Zero-phase pink shaping on the DFT grid: gain `(f / 1 Hz)^(-1/2)` above
/// 1 Hz, unity from 1 Hz down to the first bin, and zero at DC. The filter is
/// applied circularly, treating the input as one period.
pub fn pink_shape(x: &[f64], fs: f64) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut spec = dsp::fft_real(x);
    for (k, c) in spec.iter_mut().enumerate() {
        let bin = k.min(n - k);
        *c *= pink_gain(bin as f64 * fs / n as f64);
    }
    dsp::ifft_real(spec)
}

fn pink_gain(f: f64) -> f64 {
    if f == 0.0 {
        0.0
    } else if f <= 1.0 {
        1.0
    } else {
        f.powf(-0.5)
    }
}

/// Describes where pulses sit in an observation and how segments are cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentLayout {
    /// Pulse spacing in observation samples (may be fractional).
    pub period: f64,
    /// Position of pulse `first_pulse` in observation samples.
    pub origin: f64,
    /// Index of the first pulse used (code phase = index mod 4).
    pub first_pulse: usize,
    pub n_periods: usize,
    /// Samples kept before each pulse position.
    pub pre_roll: usize,
    pub segment_len: usize,
    /// Treat the observation as one period of a periodic signal.
    pub circular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Lag of each output sample relative to the pulse position, in observation samples.
    pub lags: Vec<f64>,
    pub linear: Vec<f64>,
    pub random_tv: Vec<f64>,
    pub n_averages: usize,
}

/// Kernel used for matched filtering plus the index of its time origin.
#[derive(Debug, Clone)]
pub struct MatchedKernel {
    pub taps: Vec<f64>,
    pub center: usize,
}

impl MatchedKernel {
    pub fn from_unit(u: &UnitCapricep) -> Self {
        MatchedKernel {
            taps: u.samples().to_vec(),
            center: u.center(),
        }
    }
}

/// Sample-rate recovery against the kernels of `combination_id`, with the
/// observation treated as one steady-state period of `n_periods * period`
/// samples. Segments start a quarter period before each pulse.
pub fn recover_responses(
    observation: &[f64],
    catalog: &CombinationCatalog,
    combination_id: usize,
    codes: &CodeMatrix,
    period: usize,
    n_periods: usize,
) -> Result<Recovery> {
    if n_periods < CODE_PERIOD {
        return Err(Error::TooFewPeriods(n_periods));
    }
    if n_periods % CODE_PERIOD != 0 {
        return Err(Error::InvalidInput(format!(
            "n_periods {n_periods} is not a multiple of {CODE_PERIOD}"
        )));
    }
    let cycle = n_periods * period;
    if observation.len() < cycle {
        return Err(Error::SignalTooShort {
            required: cycle,
            available: observation.len(),
        });
    }
    let kernels = catalog.kernels(combination_id)?;
    let matched: Vec<MatchedKernel> = kernels.iter().map(|u| MatchedKernel::from_unit(u)).collect();
    let layout = SegmentLayout {
        period: period as f64,
        origin: 0.0,
        first_pulse: 0,
        n_periods,
        pre_roll: period / 4,
        segment_len: period,
        circular: true,
    };
    recover_with_kernels(&observation[..cycle], &matched, codes, &layout)
}

/// General recovery: matched-filter the observation with each kernel, cut
/// code-corrected segments at (possibly fractional) pulse positions, and
/// average. `random_tv` is the pooled per-lag standard deviation of the
/// segments about the mean of their (kernel, code phase) group.
pub fn recover_with_kernels(
    observation: &[f64],
    kernels: &[MatchedKernel],
    codes: &CodeMatrix,
    layout: &SegmentLayout,
) -> Result<Recovery> {
    if layout.n_periods < CODE_PERIOD {
        return Err(Error::TooFewPeriods(layout.n_periods));
    }
    if kernels.len() != N_KERNELS {
        return Err(Error::InvalidInput(format!("expected {N_KERNELS} kernels")));
    }
    if observation.is_empty() || layout.segment_len == 0 {
        return Err(Error::InvalidInput("empty observation or segment".into()));
    }
    let seg_len = layout.segment_len;
    let n_groups = N_KERNELS * CODE_PERIOD;
    // per (kernel, code phase): running sum and sum of squares at each lag
    let mut sums = vec![vec![0.0; seg_len]; n_groups];
    let mut sq = vec![vec![0.0; seg_len]; n_groups];
    let mut counts = vec![0usize; n_groups];
    let mut linear = vec![0.0; seg_len];

    for (k, kern) in kernels.iter().enumerate() {
        let energy: f64 = kern.taps.iter().map(|v| v * v).sum();
        if energy == 0.0 {
            return Err(Error::InvalidInput(format!("kernel {k} is all zeros")));
        }
        let filtered = if layout.circular {
            dsp::circular_correlate(observation, &kern.taps, kern.center)
        } else {
            dsp::linear_correlate(observation, &kern.taps, kern.center)
        };
        let n = filtered.len() as f64;
        for j in 0..layout.n_periods {
            let m = layout.first_pulse + j;
            let w = codes.weight(k, m) / energy;
            let g = k * CODE_PERIOD + m % CODE_PERIOD;
            counts[g] += 1;
            let base = layout.origin + j as f64 * layout.period - layout.pre_roll as f64;
            for i in 0..seg_len {
                let mut pos = base + i as f64;
                if layout.circular {
                    pos = pos.rem_euclid(n);
                }
                let v = w * sample_at(&filtered, pos, layout.circular);
                linear[i] += v;
                sums[g][i] += v;
                sq[g][i] += v * v;
            }
        }
    }

    let total = N_KERNELS * layout.n_periods;
    for v in linear.iter_mut() {
        *v /= total as f64;
    }
    let dof = total.saturating_sub(n_groups);
    let random_tv = (0..seg_len)
        .map(|i| {
            if dof == 0 {
                return 0.0;
            }
            let mut ss = 0.0;
            for g in 0..n_groups {
                if counts[g] > 0 {
                    let c = counts[g] as f64;
                    ss += sq[g][i] - sums[g][i] * sums[g][i] / c;
                }
            }
            (ss.max(0.0) / dof as f64).sqrt()
        })
        .collect();
    let lags = (0..seg_len)
        .map(|i| i as f64 - layout.pre_roll as f64)
        .collect();
    Ok(Recovery {
        lags,
        linear,
        random_tv,
        n_averages: total,
    })
}

fn sample_at(x: &[f64], pos: f64, circular: bool) -> f64 {
    if pos.fract() == 0.0 {
        let i = pos as isize;
        if circular {
            return x[i.rem_euclid(x.len() as isize) as usize];
        }
        return if i < 0 || i as usize >= x.len() { 0.0 } else { x[i as usize] };
    }
    if circular {
        let n = x.len() as isize;
        let i = pos.floor() as isize;
        let t = pos - pos.floor();
        let at = |j: isize| x[j.rem_euclid(n) as usize];
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        return p1
            + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
    }
    dsp::cubic_at(x, pos)
}

/// Bandlimited decimation of a kernel by `hop`: the spectrum below the new
/// Nyquist frequency is kept (raised-cosine roll-off over the top fifth) and
/// synthesized on the coarse grid. The kernel origin maps to index
/// `len / hop / 2`.
pub fn decimate_kernel(u: &UnitCapricep, hop: usize) -> Result<MatchedKernel> {
    let l = u.len();
    if hop == 0 || l % hop != 0 || l / hop < 4 {
        return Err(Error::InvalidInput(format!("cannot decimate {l} samples by {hop}")));
    }
    let m = l / hop;
    let spec = dsp::fft_real(u.samples());
    let half = m / 2;
    let roll_start = 0.8 * half as f64;
    let mut coarse = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..half {
        let g = if (k as f64) <= roll_start {
            1.0
        } else {
            let t = (k as f64 - roll_start) / (half as f64 - roll_start);
            0.5 + 0.5 * (std::f64::consts::PI * t).cos()
        };
        coarse[k] = spec[k] * g;
        if k > 0 {
            coarse[m - k] = spec[l - k] * g;
        }
    }
    let taps = dsp::ifft_real(coarse);
    Ok(MatchedKernel {
        taps,
        center: u.center() / hop,
    })
}

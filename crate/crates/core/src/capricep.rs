//! Unit kernels built from cascaded all-pass phase sections with randomized
//! center frequencies and phase polarities.
//!
//! The kernel is synthesized directly on an FFT grid of length `L`. Each
//! section contributes the dispersive phase of a second-order all-pass filter
//! (pole pair at radius `r`, angle `theta`), with the pure two-sample delay of
//! the section removed so that the phase vanishes at DC and Nyquist:
//!
//! ```text
//! phi(w) = 2 atan2(r sin(theta - w), 1 - r cos(theta - w))
//!        + 2 atan2(r sin(-theta - w), 1 - r cos(-theta - w))
//! ```
//!
//! The summed phase `sum_i polarity_i * phi_i(w)` is scaled so the largest
//! absolute group delay equals `t_eff / 2`, the unit-magnitude spectrum is
//! inverse transformed, circularly centered at `L / 2`, and the outer 5 % of
//! each end is tapered with a raised cosine.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const DEFAULT_LENGTH: usize = 65536;
pub const DEFAULT_SECTIONS: usize = 128;
pub const DEFAULT_T_EFF: f64 = 0.2;
pub const RADIUS_RANGE: (f64, f64) = (0.9, 0.98);

/// Construction parameters shared by every kernel of a catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapricepParams {
    pub fs: f64,
    pub length: usize,
    pub t_eff: f64,
    pub n_sections: usize,
}

impl Default for CapricepParams {
    fn default() -> Self {
        CapricepParams {
            fs: 44100.0,
            length: DEFAULT_LENGTH,
            t_eff: DEFAULT_T_EFF,
            n_sections: DEFAULT_SECTIONS,
        }
    }
}

impl CapricepParams {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 || !self.length.is_power_of_two() {
            return Err(Error::InvalidLength(self.length));
        }
        if !(self.fs > 0.0) {
            return Err(Error::InvalidInput(format!("sampling rate {}", self.fs)));
        }
        if !(self.t_eff > 0.0) || self.t_eff >= self.length as f64 / (2.0 * self.fs) {
            return Err(Error::DurationTooLong {
                t_eff: self.t_eff,
                length: self.length,
                fs: self.fs,
            });
        }
        if self.n_sections == 0 {
            return Err(Error::InvalidInput("at least one phase section is required".into()));
        }
        Ok(())
    }
}

/// One second-order all-pass phase contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSection {
    /// Pole angle in radians per sample, in (0, pi).
    pub center: f64,
    pub radius: f64,
    /// +1 or -1.
    pub polarity: f64,
}

impl PhaseSection {
    fn phase(&self, w: f64) -> f64 {
        let r = self.radius;
        let pole = |a: f64| 2.0 * (r * a.sin()).atan2(1.0 - r * a.cos());
        self.polarity * (pole(self.center - w) + pole(-self.center - w))
    }

    fn group_delay(&self, w: f64) -> f64 {
        let r = self.radius;
        let pole = |a: f64| {
            let c = a.cos();
            2.0 * (r * c - r * r) / (1.0 - 2.0 * r * c + r * r)
        };
        self.polarity * (pole(self.center - w) + pole(-self.center - w))
    }
}

/// Draw `n` sections from the seeded generator: center uniform in (0, pi),
/// radius uniform in [0.9, 0.98], polarity +/-1 with equal probability.
pub fn draw_sections(seed: u64, n: usize) -> Vec<PhaseSection> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|_| {
            let center = loop {
                let c = rng.uniform() * PI;
                if c > 0.0 {
                    break c;
                }
            };
            let radius = rng.uniform_range(RADIUS_RANGE.0, RADIUS_RANGE.1);
            let polarity = rng.sign();
            PhaseSection {
                center,
                radius,
                polarity,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitCapricep {
    samples: Vec<f64>,
    seed: u64,
    params: CapricepParams,
}

impl UnitCapricep {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &CapricepParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index of the time origin (`L / 2`).
    pub fn center(&self) -> usize {
        self.samples.len() / 2
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }
}

/// Unit-magnitude spectrum (bins `0..L`) of the scaled phase function.
pub fn all_pass_spectrum(sections: &[PhaseSection], params: &CapricepParams) -> Vec<Complex64> {
    let l = params.length;
    let half = l / 2;
    let dw = 2.0 * PI / l as f64;

    let mut max_delay = 0.0f64;
    let mut phase = vec![0.0; half + 1];
    for (k, p) in phase.iter_mut().enumerate() {
        let w = k as f64 * dw;
        let mut tau = 0.0;
        for s in sections {
            *p += s.phase(w);
            tau += s.group_delay(w);
        }
        max_delay = max_delay.max(tau.abs());
    }
    let target = params.t_eff / 2.0 * params.fs;
    let scale = if max_delay > 0.0 { target / max_delay } else { 0.0 };

    let mut spec = vec![Complex64::new(0.0, 0.0); l];
    for (k, p) in phase.iter().enumerate() {
        spec[k] = Complex64::from_polar(1.0, scale * p);
    }
    // phase is exactly zero at DC and Nyquist; pin those bins to real values
    spec[0] = Complex64::new(1.0, 0.0);
    spec[half] = Complex64::new(spec[half].re.signum(), 0.0);
    for k in 1..half {
        spec[l - k] = spec[k].conj();
    }
    spec
}

/// Centered (circularly shifted by `L / 2`) but untapered kernel.
pub fn untapered_kernel(sections: &[PhaseSection], params: &CapricepParams) -> Vec<f64> {
    let l = params.length;
    let raw = dsp::ifft_real(all_pass_spectrum(sections, params));
    (0..l).map(|n| raw[(n + l / 2) % l]).collect()
}

fn edge_taper(x: &mut [f64]) {
    let l = x.len();
    let taper = l / 20;
    if taper == 0 {
        return;
    }
    for i in 0..taper {
        let g = 0.5 - 0.5 * (PI * i as f64 / taper as f64).cos();
        x[i] *= g;
        x[l - 1 - i] *= g;
    }
}

/// Build a kernel from explicit sections. `seed` is recorded as metadata only.
pub fn kernel_from_sections(
    sections: &[PhaseSection],
    params: CapricepParams,
    seed: u64,
) -> Result<UnitCapricep> {
    if sections.is_empty() {
        return Err(Error::InvalidInput("at least one phase section is required".into()));
    }
    CapricepParams {
        n_sections: sections.len(),
        ..params
    }
    .validate()?;
    let mut samples = untapered_kernel(sections, &params);
    edge_taper(&mut samples);
    Ok(UnitCapricep {
        samples,
        seed,
        params: CapricepParams {
            n_sections: sections.len(),
            ..params
        },
    })
}

pub fn generate_unit_capricep(
    seed: u64,
    fs: f64,
    length: usize,
    t_eff: f64,
    n_sections: usize,
) -> Result<UnitCapricep> {
    let params = CapricepParams {
        fs,
        length,
        t_eff,
        n_sections,
    };
    params.validate()?;
    let sections = draw_sections(seed, n_sections);
    kernel_from_sections(&sections, params, seed)
}

/// Time-reversed kernel. Convolving a kernel with its matched kernel yields
/// its autocorrelation, which is a pulse because the spectrum is all-pass.
pub fn matched_kernel(u: &UnitCapricep) -> Vec<f64> {
    u.samples.iter().rev().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> UnitCapricep {
        generate_unit_capricep(seed, 8000.0, 4096, 0.05, 32).unwrap()
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(
            generate_unit_capricep(1, 44100.0, 1000, 0.005, 4),
            Err(Error::InvalidLength(1000))
        ));
    }

    #[test]
    fn rejects_long_duration() {
        assert!(matches!(
            generate_unit_capricep(1, 44100.0, 4096, 0.05, 4),
            Err(Error::DurationTooLong { .. })
        ));
    }

    #[test]
    fn rejects_zero_sections() {
        assert!(matches!(
            generate_unit_capricep(1, 8000.0, 4096, 0.05, 0),
            Err(Error::InvalidInput(_))
        ));
        assert!(kernel_from_sections(&[], CapricepParams::default(), 0).is_err());
    }

    #[test]
    fn zero_phase_section_is_centered_impulse() {
        let flat = PhaseSection {
            center: 1.0,
            radius: 0.0,
            polarity: 1.0,
        };
        let params = CapricepParams {
            fs: 8000.0,
            length: 1024,
            t_eff: 0.01,
            n_sections: 1,
        };
        let u = kernel_from_sections(&[flat], params, 0).unwrap();
        for (i, v) in u.samples().iter().enumerate() {
            let want = if i == 512 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "sample {i}: {v}");
        }
        let m = matched_kernel(&u);
        assert!((m[511] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn untapered_spectrum_is_all_pass() {
        let sections = draw_sections(5, 32);
        let params = CapricepParams {
            fs: 8000.0,
            length: 4096,
            t_eff: 0.05,
            n_sections: 32,
        };
        let x = untapered_kernel(&sections, &params);
        for c in dsp::fft_real(&x) {
            assert!((c.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let a = small(7);
        let b = small(7);
        assert!(a
            .samples()
            .iter()
            .zip(b.samples())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(small(8).samples(), a.samples());
    }

    #[test]
    fn group_delay_matches_phase_derivative() {
        let s = PhaseSection {
            center: 0.7,
            radius: 0.95,
            polarity: -1.0,
        };
        for &w in &[0.1, 0.69, 0.7, 1.3, 2.9] {
            let h = 1e-6;
            let numeric = -(s.phase(w + h) - s.phase(w - h)) / (2.0 * h);
            assert!((numeric - s.group_delay(w)).abs() < 1e-4);
        }
    }
}

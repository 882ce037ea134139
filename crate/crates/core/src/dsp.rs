//! Small numeric helpers shared across modules: FFT wrappers, windows,
//! interpolation, level conversions.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Unnormalized forward DFT of a real sequence.
pub fn fft_real(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan_forward(buf.len()).process(&mut buf);
    buf
}

pub fn fft_in_place(buf: &mut [Complex64]) {
    plan_forward(buf.len()).process(buf);
}

/// Inverse DFT scaled by 1/N; returns the real part.
pub fn ifft_real(mut spec: Vec<Complex64>) -> Vec<f64> {
    let n = spec.len();
    plan_inverse(n).process(&mut spec);
    let scale = 1.0 / n as f64;
    spec.into_iter().map(|c| c.re * scale).collect()
}

/// Circular cross-correlation `c[n] = sum_i x[(n + i - center) mod N] * k[i]`,
/// so that a copy of `k` whose sample `center` sits at `n0` produces a peak at `n0`.
/// `k` must not be longer than `x`.
pub fn circular_correlate(x: &[f64], k: &[f64], center: usize) -> Vec<f64> {
    let n = x.len();
    assert!(k.len() <= n, "kernel longer than signal");
    let mut placed = vec![0.0; n];
    for (i, &v) in k.iter().enumerate() {
        let idx = (i + n - center % n) % n;
        placed[idx] += v;
    }
    let xs = fft_real(x);
    let ks = fft_real(&placed);
    let prod: Vec<Complex64> = xs.iter().zip(&ks).map(|(a, b)| a * b.conj()).collect();
    ifft_real(prod)
}

/// Linear (zero-padded) version of [`circular_correlate`], output length `x.len()`.
pub fn linear_correlate(x: &[f64], k: &[f64], center: usize) -> Vec<f64> {
    let n = (x.len() + k.len()).next_power_of_two();
    let mut xp = x.to_vec();
    xp.resize(n, 0.0);
    let full = circular_correlate(&xp, k, center);
    full[..x.len()].to_vec()
}

/// Linear convolution via FFT, output length `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut ap = a.to_vec();
    ap.resize(n, 0.0);
    let mut bp = b.to_vec();
    bp.resize(n, 0.0);
    let fa = fft_real(&ap);
    let fb = fft_real(&bp);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = ifft_real(prod);
    out.truncate(out_len);
    out
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Periodic Kaiser window of length `n`.
pub fn kaiser(n: usize, beta: f64) -> Vec<f64> {
    let denom = bessel_i0(beta);
    (0..n)
        .map(|i| {
            let r = 2.0 * i as f64 / n as f64 - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Catmull-Rom cubic interpolation at fractional index `pos`; zero outside the data.
pub fn cubic_at(x: &[f64], pos: f64) -> f64 {
    let i = pos.floor();
    let t = pos - i;
    let i = i as isize;
    let get = |j: isize| -> f64 {
        if j < 0 || j as usize >= x.len() {
            0.0
        } else {
            x[j as usize]
        }
    };
    let (p0, p1, p2, p3) = (get(i - 1), get(i), get(i + 1), get(i + 2));
    p1 + 0.5
        * t
        * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)))
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `20 log10(a)`; `-inf` for zero.
pub fn amp_to_db(a: f64) -> f64 {
    20.0 * a.log10()
}

pub fn db_to_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Pearson-style normalized correlation without mean removal.
pub fn normalized_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab / (aa * bb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolve_matches_direct() {
        let a = [1.0, 2.0, -1.0, 0.5];
        let b = [0.5, -1.0, 3.0];
        let got = convolve(&a, &b);
        let mut want = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                want[i + j] += x * y;
            }
        }
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn circular_correlate_peaks_at_center_position() {
        let k = [0.1, -0.3, 1.0, 0.2];
        let mut x = vec![0.0; 16];
        // copy of k with its sample 2 at position 5
        for (i, v) in k.iter().enumerate() {
            x[5 + i - 2] = *v;
        }
        let c = circular_correlate(&x, &k, 2);
        let argmax = c
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 5);
    }

    #[test]
    fn bessel_known_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-13);
    }

    #[test]
    fn cubic_reproduces_quadratic() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64).powi(2)).collect();
        let v = cubic_at(&x, 4.25);
        assert!((v - 4.25f64.powi(2)).abs() < 1e-9);
    }
}

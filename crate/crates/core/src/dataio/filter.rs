//! FIR band-pass design and zero-phase application, plus rational-rate
//! polyphase resampling.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Windowed-sinc band-pass taps for `[low_hz, high_hz]` at `fs`, normalised
/// to unit gain at the band centre. `taps` must be odd (type I, linear
/// phase).
pub fn design_bandpass(taps: usize, low_hz: f64, high_hz: f64, fs: f64) -> Result<Vec<f64>> {
    if taps == 0 || taps.is_multiple_of(2) {
        return Err(Error::Config(format!("filter_taps must be a positive odd integer, got {taps}")));
    }
    if !(0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0) {
        return Err(Error::Config(format!(
            "band [{low_hz}, {high_hz}] Hz is invalid for sampling rate {fs} Hz"
        )));
    }
    let m = (taps - 1) as f64 / 2.0;
    let (f1, f2) = (low_hz / fs, high_hz / fs);
    let win = hamming(taps);
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let n = i as f64 - m;
            win[i] * (2.0 * f2 * sinc(2.0 * f2 * n) - 2.0 * f1 * sinc(2.0 * f1 * n))
        })
        .collect();
    let centre = 0.5 * (f1 + f2);
    let gain = frequency_response(&h, centre).norm();
    for v in &mut h {
        *v /= gain;
    }
    Ok(h)
}

/// Complex response of `h` at normalised frequency `f` (cycles/sample).
pub fn frequency_response(h: &[f64], f: f64) -> Complex<f64> {
    h.iter()
        .enumerate()
        .map(|(k, &v)| Complex::from_polar(v, -2.0 * PI * f * k as f64))
        .sum()
}

/// Mirror index into `[0, n)` without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Applies a symmetric odd-length FIR without delay: each output sample is
/// centred on the kernel, and edges are extended by reflection. Every row of
/// `x` is filtered independently; the output has the input's shape.
pub fn filter_zero_phase(x: &Array2<f64>, h: &[f64]) -> Result<Array2<f64>> {
    let (c, n) = x.dim();
    let taps = h.len();
    if taps > n {
        return Err(Error::Invalid(format!(
            "filter has {taps} taps but the signal has only {n} samples"
        )));
    }
    let half = (taps - 1) / 2;
    let padded_len = n + 2 * half;
    let fft_len = (padded_len + taps - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let mut kernel: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    kernel.resize(fft_len, Complex::new(0.0, 0.0));
    fwd.process(&mut kernel);
    let scale = 1.0 / fft_len as f64;

    let rows: Vec<Vec<f64>> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let row = x.row(ch);
            let mut buf: Vec<Complex<f64>> = (0..padded_len)
                .map(|j| Complex::new(row[reflect(j as isize - half as isize, n)], 0.0))
                .collect();
            buf.resize(fft_len, Complex::new(0.0, 0.0));
            fwd.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&kernel) {
                *b *= k;
            }
            inv.process(&mut buf);
            // full[i + 2*half] is the kernel centred on input sample i
            (0..n).map(|i| buf[i + 2 * half].re * scale).collect()
        })
        .collect();
    let mut out = Array2::zeros((c, n));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&ndarray::ArrayView1::from(&src[..]));
    }
    Ok(out)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Up/down factors for converting `from_hz` to `to_hz`, resolved to 1 mHz.
pub fn rational_factors(from_hz: f64, to_hz: f64) -> Result<(usize, usize)> {
    if !(from_hz > 0.0 && to_hz > 0.0) {
        return Err(Error::Invalid("sampling rates must be positive".into()));
    }
    let a = (from_hz * 1000.0).round() as u64;
    let b = (to_hz * 1000.0).round() as u64;
    let g = gcd(a, b);
    Ok(((b / g) as usize, (a / g) as usize))
}

/// Polyphase resampling by `up / down` with a Hamming-windowed sinc
/// anti-aliasing filter (10 zero crossings per side of the narrower band).
pub fn resample(x: &Array2<f64>, from_hz: f64, to_hz: f64) -> Result<Array2<f64>> {
    let (up, down) = rational_factors(from_hz, to_hz)?;
    if up == down {
        return Ok(x.clone());
    }
    let (c, n) = x.dim();
    let factor = up.max(down);
    let half = 10 * factor;
    let taps = 2 * half + 1;
    let cutoff = 0.5 / factor as f64; // cycles per upsampled sample
    let win = hamming(taps);
    let h: Vec<f64> = (0..taps)
        .map(|i| {
            let k = i as f64 - half as f64;
            up as f64 * 2.0 * cutoff * sinc(2.0 * cutoff * k) * win[i]
        })
        .collect();
    let out_len = (n * up).div_ceil(down);
    let rows: Vec<Vec<f64>> = (0..c)
        .into_par_iter()
        .map(|ch| {
            let row = x.row(ch);
            (0..out_len)
                .map(|m| {
                    // position on the upsampled grid, shifted by the filter delay
                    let t = (m * down + half) as isize;
                    let j_hi = t.div_euclid(up as isize);
                    let j_lo = (t - (taps as isize - 1)).div_euclid(up as isize);
                    let mut acc = 0.0;
                    for j in j_lo.max(0)..=j_hi.min(n as isize - 1) {
                        let k = t - j * up as isize;
                        if (0..taps as isize).contains(&k) {
                            acc += h[k as usize] * row[j as usize];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((c, out_len));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&ndarray::ArrayView1::from(&src[..]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Magnitude of the DFT of `x` at `freq_hz`, by direct summation.
    fn dft_magnitude(x: &[f64], freq_hz: f64, fs: f64) -> f64 {
        let s: Complex<f64> = x
            .iter()
            .enumerate()
            .map(|(k, &v)| Complex::from_polar(v, -2.0 * PI * freq_hz * k as f64 / fs))
            .sum();
        s.norm() / x.len() as f64
    }

    fn sinusoid(freq: f64, fs: f64, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((1, n), |(_, t)| (2.0 * PI * freq * t as f64 / fs).sin())
    }

    fn core(y: &Array2<f64>, margin: usize) -> Vec<f64> {
        let n = y.ncols();
        y.row(0).iter().skip(margin).take(n - 2 * margin).copied().collect()
    }

    #[test]
    fn passband_sinusoid_keeps_amplitude() {
        let fs = 500.0;
        let h = design_bandpass(825, 1.0, 45.0, fs).unwrap();
        let x = sinusoid(10.0, fs, 5000);
        let y = filter_zero_phase(&x, &h).unwrap();
        let ratio = dft_magnitude(&core(&y, 1000), 10.0, fs) / dft_magnitude(&core(&x, 1000), 10.0, fs);
        assert!((ratio - 1.0).abs() < 0.05, "gain {ratio}");
    }

    #[test]
    fn stopband_sinusoid_is_attenuated_20db() {
        let fs = 500.0;
        let h = design_bandpass(825, 1.0, 45.0, fs).unwrap();
        let x = sinusoid(60.0, fs, 5000);
        let y = filter_zero_phase(&x, &h).unwrap();
        let ratio = dft_magnitude(&core(&y, 1000), 60.0, fs) / dft_magnitude(&core(&x, 1000), 60.0, fs);
        assert!(20.0 * ratio.log10() <= -20.0, "attenuation {} dB", 20.0 * ratio.log10());
    }

    #[test]
    fn no_time_shift_in_passband() {
        let fs = 500.0;
        let h = design_bandpass(825, 1.0, 45.0, fs).unwrap();
        let x = sinusoid(10.0, fs, 5000);
        let y = filter_zero_phase(&x, &h).unwrap();
        let (a, b) = (core(&x, 1000), core(&y, 1000));
        let err = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 0.02, "max deviation {err}");
    }

    #[test]
    fn zeros_stay_zero_and_length_is_kept() {
        let h = design_bandpass(101, 1.0, 45.0, 500.0).unwrap();
        let x = Array2::zeros((2, 300));
        let y = filter_zero_phase(&x, &h).unwrap();
        assert_eq!(y.dim(), (2, 300));
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_many_taps_is_an_error() {
        let h = design_bandpass(825, 1.0, 45.0, 500.0).unwrap();
        assert!(filter_zero_phase(&Array2::zeros((1, 800)), &h).is_err());
    }

    #[test]
    fn invalid_band_and_even_taps_are_rejected() {
        assert!(design_bandpass(824, 1.0, 45.0, 500.0).is_err());
        assert!(design_bandpass(825, 45.0, 1.0, 500.0).is_err());
        assert!(design_bandpass(825, 1.0, 260.0, 500.0).is_err());
    }

    #[test]
    fn resampling_preserves_a_low_frequency_tone() {
        let (from, to) = (512.0, 500.0);
        let n = 4096;
        let x = sinusoid(7.0, from, n);
        let y = resample(&x, from, to).unwrap();
        assert_eq!(y.ncols(), (n * 125).div_ceil(128));
        let expected = sinusoid(7.0, to, y.ncols());
        let (a, b) = (core(&y, 200), core(&expected, 200));
        let err = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 0.01, "max deviation {err}");
    }

    #[test]
    fn factors_reduce() {
        assert_eq!(rational_factors(512.0, 500.0).unwrap(), (125, 128));
        assert_eq!(rational_factors(1000.0, 500.0).unwrap(), (1, 2));
        assert_eq!(rational_factors(500.0, 500.0).unwrap(), (1, 1));
    }
}

//! Special functions and spectral estimation shared by the waveform and RF code.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;

/// Values of the Fresnel cosine and sine integrals at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelPair {
    pub c: f64,
    pub s: f64,
}

/// Switch point between the power series and the continued fraction.
const SERIES_LIMIT: f64 = 1.6;
const MAX_ITERATIONS: usize = 1000;
const EPS: f64 = 1e-16;

/// Fresnel integrals `C(x) = ∫₀ˣ cos(πt²/2) dt` and `S(x) = ∫₀ˣ sin(πt²/2) dt`.
///
/// Small arguments use the Maclaurin series of `exp(iπt²/2)`; larger ones use
/// a continued fraction for the complementary error function, whose convergents
/// are the rational auxiliary functions of the asymptotic form.
pub fn fresnel(x: f64) -> Result<FresnelPair> {
    if !x.is_finite() {
        return Err(Error::Domain(format!(
            "fresnel argument must be finite, got {x}"
        )));
    }
    let ax = x.abs();
    let pair = if ax <= SERIES_LIMIT {
        fresnel_series(ax)
    } else {
        fresnel_continued_fraction(ax)
    };
    Ok(if x < 0.0 {
        FresnelPair {
            c: -pair.c,
            s: -pair.s,
        }
    } else {
        pair
    })
}

// C + iS = Σ_k (iπx²/2)^k / k! · x / (2k + 1); even k feed C, odd k feed S.
fn fresnel_series(ax: f64) -> FresnelPair {
    let fact = FRAC_PI_2 * ax * ax;
    let mut term = ax;
    let mut c = ax;
    let mut s = 0.0;
    for k in 1..MAX_ITERATIONS {
        term *= fact / k as f64;
        let contribution = term / (2 * k + 1) as f64;
        match k % 4 {
            0 => c += contribution,
            1 => s += contribution,
            2 => c -= contribution,
            _ => s -= contribution,
        }
        if contribution < EPS * (c.abs() + s.abs()) {
            break;
        }
    }
    FresnelPair { c, s }
}

fn fresnel_continued_fraction(ax: f64) -> FresnelPair {
    let tiny = 1e-300;
    let pix2 = PI * ax * ax;
    let one = Complex64::new(1.0, 0.0);
    let mut b = Complex64::new(1.0, -pix2);
    let mut cc = Complex64::new(1.0 / tiny, 0.0);
    let mut d = one / b;
    let mut h = d;
    let mut n = -1.0;
    for _ in 2..MAX_ITERATIONS {
        n += 2.0;
        let a = -n * (n + 1.0);
        b += 4.0;
        d = one / (d * a + b);
        cc = b + a / cc;
        let del = cc * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < EPS {
            break;
        }
    }
    h *= Complex64::new(ax, -ax);
    let cs = Complex64::new(0.5, 0.5)
        * (one - Complex64::new((0.5 * pix2).cos(), (0.5 * pix2).sin()) * h);
    FresnelPair { c: cs.re, s: cs.im }
}

/// One bin of a two-sided power spectral density estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBin {
    /// Bin centre in Hz, negative frequencies first.
    pub frequency: f64,
    /// Power spectral density in W/Hz.
    pub density: f64,
}

/// Averaged periodogram (Hann taper, 50% overlap) of a complex signal.
///
/// The density is scaled so that `Σ density · Δf` equals the mean power of the
/// tapered segments, which for stationary inputs matches `sig.mean_power()`.
pub fn power_spectrum(sig: &ComplexSignal, segment_len: usize) -> Result<Vec<SpectrumBin>> {
    if segment_len == 0 {
        return Err(Error::Argument("segment length must be positive".into()));
    }
    let samples = sig.samples();
    if segment_len > samples.len() {
        return Err(Error::Argument(format!(
            "segment length {segment_len} exceeds signal length {}",
            samples.len()
        )));
    }
    let window: Vec<f64> = (0..segment_len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / segment_len as f64).cos())
        .collect();
    let window_energy: f64 = window.iter().map(|w| w * w).sum();
    let hop = (segment_len / 2).max(1);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);

    let mut accum = vec![0.0; segment_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_len];
    let mut segments = 0usize;
    let mut start = 0;
    while start + segment_len <= samples.len() {
        for (slot, (x, w)) in buf
            .iter_mut()
            .zip(samples[start..start + segment_len].iter().zip(&window))
        {
            *slot = x * w;
        }
        fft.process(&mut buf);
        for (acc, z) in accum.iter_mut().zip(&buf) {
            *acc += z.norm_sqr();
        }
        segments += 1;
        start += hop;
    }

    let fs = sig.sample_rate();
    let df = fs / segment_len as f64;
    let scale = 1.0 / (segments as f64 * window_energy * fs);
    let half = segment_len / 2;
    Ok((0..segment_len)
        .map(|i| {
            // fftshift: start at the most negative frequency
            let k = (i + segment_len - half) % segment_len;
            let freq_index = i as f64 - half as f64;
            SpectrumBin {
                frequency: freq_index * df,
                density: accum[k] * scale,
            }
        })
        .collect())
}

/// Total power of a spectrum estimate (the integral of its density).
pub fn integrated_power(spectrum: &[SpectrumBin]) -> f64 {
    if spectrum.len() < 2 {
        return spectrum.first().map_or(0.0, |b| b.density);
    }
    let df = spectrum[1].frequency - spectrum[0].frequency;
    spectrum.iter().map(|b| b.density).sum::<f64>() * df
}

pub fn db10(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db10(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

//! DFT-spread OFDM transmit/receive chain that turns bins into circularly
//! shifted chirps.
//!
//! A bin vector `s` of length `M` is precoded with an orthonormal `M`-point
//! DFT, weighted by the chirp-shaping vector `f`, mapped onto the subcarriers
//! `L_d..=L_u` of an `N`-point IDFT and prefixed with a cyclic prefix. Each
//! active bin becomes one linear chirp; bin `m` is the base chirp delayed by
//! `m·N/M` samples. The receiver inverts the chain with the matched weights
//! `f*`, so the composite response is `F_Mᴴ · diag(|f|²) · F_M`.
//!
//! Symbols carry a raised-cosine ramp over the first `window_rolloff` samples
//! of the prefix; [`assemble_stream`] adds the matching cyclic tail so that
//! consecutive symbols overlap-add smoothly.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::fresnel;
pub use crate::signal::ComplexSignal;

/// Chirp synthesis numerology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformConfig {
    /// Number of DFT-spread bins `M`.
    pub bins: usize,
    /// IDFT size `N`.
    pub idft_size: usize,
    /// Frequency sweep of each chirp in subcarriers (cycles per symbol).
    pub sweep: f64,
    /// Lowest occupied subcarrier index `L_d`.
    pub lower_index: i64,
    /// Highest occupied subcarrier index `L_u`.
    pub upper_index: i64,
    /// Cyclic prefix length in samples at the base rate.
    pub cp_len: usize,
    /// Base sample rate in Hz.
    pub sample_rate: f64,
    /// Raised-cosine ramp length in samples at the base rate.
    pub window_rolloff: usize,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            bins: 54,
            idft_size: 64,
            sweep: 44.0,
            lower_index: -27,
            upper_index: 26,
            cp_len: 16,
            sample_rate: 15.36e6,
            window_rolloff: 2,
        }
    }
}

impl WaveformConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.bins as i64;
        if self.bins == 0 || self.idft_size == 0 {
            return Err(Error::Argument(
                "bins and idft_size must be positive".into(),
            ));
        }
        if self.bins > self.idft_size {
            return Err(Error::Argument(format!(
                "bins ({}) must not exceed idft_size ({})",
                self.bins, self.idft_size
            )));
        }
        if !(self.sweep.is_finite() && self.sweep > 0.0) {
            return Err(Error::Argument(format!(
                "sweep must be positive, got {}",
                self.sweep
            )));
        }
        if self.upper_index - self.lower_index + 1 != m {
            return Err(Error::Argument(format!(
                "subcarrier range {}..={} must hold exactly {} bins",
                self.lower_index, self.upper_index, self.bins
            )));
        }
        if (self.lower_index as f64) > -self.sweep / 2.0
            || (self.upper_index as f64) < self.sweep / 2.0
        {
            return Err(Error::Argument(format!(
                "subcarrier range {}..={} does not cover a sweep of {}",
                self.lower_index, self.upper_index, self.sweep
            )));
        }
        if self.cp_len >= self.idft_size {
            return Err(Error::Argument(
                "cp_len must be shorter than the symbol".into(),
            ));
        }
        if self.window_rolloff > self.cp_len {
            return Err(Error::Argument(
                "window_rolloff must not exceed cp_len".into(),
            ));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::Argument("sample_rate must be positive".into()));
        }
        Ok(())
    }

    /// Useful symbol duration `T_s = N / f_s`.
    pub fn symbol_duration(&self) -> f64 {
        self.idft_size as f64 / self.sample_rate
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.sample_rate / self.idft_size as f64
    }

    /// Samples per symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.cp_len + self.idft_size
    }

    /// Occupied band edges in Hz, half a subcarrier outside the outermost tones.
    pub fn occupied_band(&self) -> (f64, f64) {
        let df = self.subcarrier_spacing();
        (
            (self.lower_index as f64 - 0.5) * df,
            (self.upper_index as f64 + 0.5) * df,
        )
    }

    /// Subcarrier indices `L_d..=L_u`.
    pub fn subcarriers(&self) -> impl Iterator<Item = i64> {
        self.lower_index..=self.upper_index
    }
}

/// Chirp-shaping weights, one per occupied subcarrier, ordered `L_d..=L_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdssVector {
    coeffs: Vec<Complex64>,
}

impl FdssVector {
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// All-ones weights; turns `spread` into plain DFT-spread OFDM.
    pub fn flat(bins: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(1.0, 0.0); bins],
        }
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Complex values on the `M` DFT-spread bins (or OFDM subcarriers).
#[derive(Debug, Clone, PartialEq)]
pub struct BinVector {
    values: Vec<Complex64>,
}

impl BinVector {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Chirp-shaping vector for linear chirps sweeping `cfg.sweep` subcarriers.
///
/// The Fourier-series coefficients of a chirp with angular sweep `Ω = 2π·D`
/// radians per symbol are `γ_j (C(α_j) + C(β_j) + i S(α_j) + i S(β_j))` with
/// `α_j = (Ω/2 + 2πj)/√(πΩ)`, `β_j = (Ω/2 − 2πj)/√(πΩ)` and
/// `γ_j = √(π/Ω) exp(−i(2πj)²/(2Ω) − iπj)`. The result is scaled to energy `M`.
pub fn build_fdss(cfg: &WaveformConfig) -> Result<FdssVector> {
    if !(cfg.sweep.is_finite() && cfg.sweep > 0.0) {
        return Err(Error::Argument(format!(
            "sweep must be positive, got {}",
            cfg.sweep
        )));
    }
    cfg.validate()?;
    let omega = 2.0 * PI * cfg.sweep;
    let root = (PI * omega).sqrt();
    let mut coeffs = Vec::with_capacity(cfg.bins);
    for j in cfg.subcarriers() {
        let w = 2.0 * PI * j as f64;
        let a = fresnel((omega / 2.0 + w) / root)?;
        let b = fresnel((omega / 2.0 - w) / root)?;
        let gamma =
            Complex64::from_polar((PI / omega).sqrt(), -w * w / (2.0 * omega) - PI * j as f64);
        coeffs.push(gamma * Complex64::new(a.c + b.c, a.s + b.s));
    }
    let energy: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let scale = (cfg.bins as f64 / energy).sqrt();
    coeffs.iter_mut().for_each(|c| *c *= scale);
    Ok(FdssVector { coeffs })
}

/// Transmit/receive engine for one numerology and oversampling factor.
///
/// Holds the FFT plans so the per-symbol work is allocation-light; cheap to
/// clone and safe to share between threads.
#[derive(Clone)]
pub struct Modem {
    cfg: WaveformConfig,
    oversample: usize,
    fft_m: Arc<dyn Fft<f64>>,
    ifft_m: Arc<dyn Fft<f64>>,
    fft_n: Arc<dyn Fft<f64>>,
    ifft_n: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Modem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Modem")
            .field("cfg", &self.cfg)
            .field("oversample", &self.oversample)
            .finish()
    }
}

impl Modem {
    pub fn new(cfg: &WaveformConfig) -> Result<Self> {
        Self::oversampled(cfg, 1)
    }

    /// Modem whose time-domain output is interpolated `oversample` times by
    /// zero-padding the IDFT. Samples at multiples of `oversample` coincide
    /// with the base-rate waveform.
    pub fn oversampled(cfg: &WaveformConfig, oversample: usize) -> Result<Self> {
        cfg.validate()?;
        if oversample == 0 {
            return Err(Error::Argument(
                "oversampling factor must be positive".into(),
            ));
        }
        let mut planner = FftPlanner::new();
        let n = cfg.idft_size * oversample;
        Ok(Self {
            cfg: cfg.clone(),
            oversample,
            fft_m: planner.plan_fft_forward(cfg.bins),
            ifft_m: planner.plan_fft_inverse(cfg.bins),
            fft_n: planner.plan_fft_forward(n),
            ifft_n: planner.plan_fft_inverse(n),
        })
    }

    pub fn config(&self) -> &WaveformConfig {
        &self.cfg
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    fn sample_period(&self) -> f64 {
        1.0 / (self.cfg.sample_rate * self.oversample as f64)
    }

    /// Samples per symbol at this modem's rate, cyclic prefix included.
    pub fn symbol_len(&self) -> usize {
        self.cfg.symbol_len() * self.oversample
    }

    fn check_bins(&self, len: usize) -> Result<()> {
        if len != self.cfg.bins {
            return Err(Error::Framing {
                expected: self.cfg.bins,
                actual: len,
            });
        }
        Ok(())
    }

    fn check_fdss(&self, f: &FdssVector) -> Result<()> {
        if f.coeffs.len() != self.cfg.bins {
            return Err(Error::Argument(format!(
                "FDSS vector has {} entries, expected {}",
                f.coeffs.len(),
                self.cfg.bins
            )));
        }
        Ok(())
    }

    /// DFT-spread, shape with `f`, map and synthesize one symbol.
    pub fn spread(&self, f: &FdssVector, s: &BinVector) -> Result<ComplexSignal> {
        self.check_bins(s.len())?;
        self.check_fdss(f)?;
        let m = self.cfg.bins;
        let mut precoded = s.values.clone();
        self.fft_m.process(&mut precoded);
        let norm = 1.0 / (m as f64).sqrt();
        let subcarriers: Vec<Complex64> = self
            .cfg
            .subcarriers()
            .zip(&f.coeffs)
            .map(|(j, fj)| fj * precoded[j.rem_euclid(m as i64) as usize] * norm)
            .collect();
        Ok(self.synthesize(&subcarriers))
    }

    /// Inverse of [`Modem::spread`] on one received symbol of `cp_len + N` samples.
    pub fn despread(&self, f: &FdssVector, r: &ComplexSignal) -> Result<BinVector> {
        self.check_fdss(f)?;
        let subcarriers = self.analyze(r)?;
        let m = self.cfg.bins;
        let mut bins = vec![Complex64::new(0.0, 0.0); m];
        for ((j, fj), y) in self.cfg.subcarriers().zip(&f.coeffs).zip(&subcarriers) {
            bins[j.rem_euclid(m as i64) as usize] = fj.conj() * y;
        }
        self.ifft_m.process(&mut bins);
        let norm = 1.0 / (m as f64).sqrt();
        bins.iter_mut().for_each(|b| *b *= norm);
        Ok(BinVector { values: bins })
    }

    /// Plain OFDM: `x[i]` rides on subcarrier `L_d + i`.
    pub fn modulate_ofdm(&self, x: &BinVector) -> Result<ComplexSignal> {
        self.check_bins(x.len())?;
        Ok(self.synthesize(&x.values))
    }

    pub fn demodulate_ofdm(&self, r: &ComplexSignal) -> Result<BinVector> {
        Ok(BinVector {
            values: self.analyze(r)?,
        })
    }

    /// Subcarrier values (ordered `L_d..=L_u`) to a windowed, prefixed symbol.
    fn synthesize(&self, subcarriers: &[Complex64]) -> ComplexSignal {
        let os = self.oversample;
        let n = self.cfg.idft_size * os;
        let mut grid = vec![Complex64::new(0.0, 0.0); n];
        for (j, v) in self.cfg.subcarriers().zip(subcarriers) {
            grid[j.rem_euclid(n as i64) as usize] = *v;
        }
        self.ifft_n.process(&mut grid);
        let norm = 1.0 / (self.cfg.idft_size as f64).sqrt();
        let cp = self.cfg.cp_len * os;
        let mut out = Vec::with_capacity(cp + n);
        out.extend(grid[n - cp..].iter().map(|z| z * norm));
        out.extend(grid.iter().map(|z| z * norm));
        let ramp = rising_window(self.cfg.window_rolloff * os);
        for (z, w) in out.iter_mut().zip(&ramp) {
            *z *= w;
        }
        ComplexSignal::from_parts(out, self.sample_period())
    }

    /// Drops the prefix and returns the occupied subcarriers, ordered `L_d..=L_u`.
    fn analyze(&self, r: &ComplexSignal) -> Result<Vec<Complex64>> {
        let expected = self.symbol_len();
        if r.len() != expected {
            return Err(Error::Framing {
                expected,
                actual: r.len(),
            });
        }
        let os = self.oversample;
        let n = self.cfg.idft_size * os;
        let mut grid = r.samples()[self.cfg.cp_len * os..].to_vec();
        self.fft_n.process(&mut grid);
        // Forward transform scaled to invert `synthesize` exactly.
        let norm = (self.cfg.idft_size as f64).sqrt() / n as f64;
        Ok(self
            .cfg
            .subcarriers()
            .map(|j| grid[j.rem_euclid(n as i64) as usize] * norm)
            .collect())
    }
}

/// Raised-cosine ramp from 0 to 1 over `len` samples (half-sample offset, so
/// the ramp and its mirror image sum to one).
pub fn rising_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (PI * (n as f64 + 0.5) / len as f64).cos())
        .collect()
}

/// Concatenates symbols produced by a modem with `window_rolloff·oversample`
/// samples of overlap: each symbol's cyclic tail ramps down over the next
/// symbol's ramp-up. The final tail is appended after the last symbol.
pub fn assemble_stream(
    cfg: &WaveformConfig,
    oversample: usize,
    symbols: &[ComplexSignal],
) -> Result<ComplexSignal> {
    let first = symbols
        .first()
        .ok_or_else(|| Error::Argument("cannot assemble an empty symbol list".into()))?;
    let sym_len = cfg.symbol_len() * oversample;
    let cp = cfg.cp_len * oversample;
    let tail_len = cfg.window_rolloff * oversample;
    let falling: Vec<f64> = rising_window(tail_len).into_iter().rev().collect();
    let mut out = vec![Complex64::new(0.0, 0.0); symbols.len() * sym_len + tail_len];
    for (k, sym) in symbols.iter().enumerate() {
        if sym.len() != sym_len {
            return Err(Error::Framing {
                expected: sym_len,
                actual: sym.len(),
            });
        }
        let start = k * sym_len;
        for (o, z) in out[start..start + sym_len].iter_mut().zip(sym.samples()) {
            *o += z;
        }
        // The body is periodic, so the cyclic suffix repeats the samples right after the prefix.
        for (i, w) in falling.iter().enumerate() {
            out[start + sym_len + i] += sym.samples()[cp + i] * w;
        }
    }
    Ok(ComplexSignal::from_parts(out, first.sample_period()))
}

/// Convenience wrapper around [`Modem::spread`] at the base rate.
pub fn spread(cfg: &WaveformConfig, f: &FdssVector, s: &BinVector) -> Result<ComplexSignal> {
    Modem::new(cfg)?.spread(f, s)
}

/// Convenience wrapper around [`Modem::despread`] at the base rate.
pub fn despread(cfg: &WaveformConfig, f: &FdssVector, r: &ComplexSignal) -> Result<BinVector> {
    Modem::new(cfg)?.despread(f, r)
}

pub fn modulate_ofdm(cfg: &WaveformConfig, x: &BinVector) -> Result<ComplexSignal> {
    Modem::new(cfg)?.modulate_ofdm(x)
}

pub fn demodulate_ofdm(cfg: &WaveformConfig, r: &ComplexSignal) -> Result<BinVector> {
    Modem::new(cfg)?.demodulate_ofdm(r)
}

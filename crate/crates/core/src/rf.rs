//! Power amplifier model and transmit-signal quality metrics.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{db10, power_spectrum, SpectrumBin};
use crate::oac::{guard_for_votes, Scheme};
use crate::rng::{keyed_rng, DrawKind};
use crate::signal::ComplexSignal;
use crate::waveform::{assemble_stream, build_fdss, BinVector, Modem, WaveformConfig};

/// Reference raw cubic metric in dB.
pub const RCM_REF_DB: f64 = 1.52;
/// Empirical slope factor of the cubic metric.
pub const CM_SLOPE: f64 = 1.52;
/// Oversampling used for envelope and spectrum measurements.
pub const MEASUREMENT_OVERSAMPLE: usize = 4;
/// Welch segment length for ACLR at the measurement rate.
pub const ACLR_SEGMENT_LEN: usize = 1024;
/// OBO search interval and resolution.
pub const OBO_SEARCH_MAX_DB: f64 = 30.0;
pub const OBO_SEARCH_STEP_DB: f64 = 0.1;

/// Memoryless Rapp amplifier driven at a given output back-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RappPa {
    pub sat_amplitude: f64,
    pub smoothness: f64,
    pub obo_db: f64,
}

impl Default for RappPa {
    fn default() -> Self {
        Self {
            sat_amplitude: 1.0,
            smoothness: 3.0,
            obo_db: 0.0,
        }
    }
}

impl RappPa {
    pub fn new(sat_amplitude: f64, smoothness: f64, obo_db: f64) -> Result<Self> {
        let pa = Self {
            sat_amplitude,
            smoothness,
            obo_db,
        };
        pa.validate()?;
        Ok(pa)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sat_amplitude.is_finite() && self.sat_amplitude > 0.0) {
            return Err(Error::Argument(
                "saturation amplitude must be positive".into(),
            ));
        }
        if !(self.smoothness.is_finite() && self.smoothness > 0.0) {
            return Err(Error::Argument("smoothness must be positive".into()));
        }
        if !self.obo_db.is_finite() {
            return Err(Error::Argument("OBO must be finite".into()));
        }
        Ok(())
    }

    pub fn with_obo(&self, obo_db: f64) -> Self {
        Self { obo_db, ..*self }
    }

    /// Input gain that brings a signal of `mean_power` to this back-off.
    pub fn drive_gain(&self, mean_power: f64) -> f64 {
        if mean_power <= 0.0 {
            return 0.0;
        }
        self.sat_amplitude * 10f64.powf(-self.obo_db / 20.0) / mean_power.sqrt()
    }

    /// AM/AM compression of one sample; phase is untouched.
    pub fn compress(&self, x: Complex64) -> Complex64 {
        let r2 = x.norm_sqr() / (self.sat_amplitude * self.sat_amplitude);
        let p = self.smoothness;
        let r2p = if p.fract() == 0.0 && p <= 16.0 {
            r2.powi(p as i32)
        } else {
            r2.powf(p)
        };
        x * (1.0 + r2p).powf(-0.5 / p)
    }

    /// Scales samples to the back-off relative to `reference_power` and compresses them.
    pub fn amplify_in_place(&self, samples: &mut [Complex64], reference_power: f64) {
        let g = self.drive_gain(reference_power);
        for z in samples.iter_mut() {
            *z = self.compress(*z * g);
        }
    }
}

/// Drives the amplifier at `pa.obo_db` relative to the signal's own mean power.
pub fn apply_pa(pa: &RappPa, sig: &ComplexSignal) -> ComplexSignal {
    let mut out = sig.clone();
    pa.amplify_in_place(out.samples_mut(), sig.mean_power());
    out
}

fn nonzero_power(sig: &ComplexSignal) -> Result<f64> {
    let p = sig.mean_power();
    if p <= 0.0 {
        return Err(Error::Domain("signal has zero power".into()));
    }
    Ok(p)
}

/// Peak-to-mean envelope power ratio in dB.
pub fn pmepr(sig: &ComplexSignal) -> Result<f64> {
    let mean = nonzero_power(sig)?;
    let peak = sig
        .samples()
        .iter()
        .map(|z| z.norm_sqr())
        .fold(0.0, f64::max);
    Ok(db10(peak / mean))
}

/// Raw cubic metric: `20·log10(rms(|v|³))` of the unit-rms normalized signal.
pub fn raw_cubic_metric(sig: &ComplexSignal) -> Result<f64> {
    let mean = nonzero_power(sig)?;
    let cube_power = sig
        .samples()
        .iter()
        .map(|z| (z.norm_sqr() / mean).powi(3))
        .sum::<f64>()
        / sig.len() as f64;
    Ok(10.0 * cube_power.log10())
}

pub fn cubic_metric(sig: &ComplexSignal) -> Result<f64> {
    Ok((raw_cubic_metric(sig)? - RCM_REF_DB) / CM_SLOPE)
}

/// Out-of-band to in-band power ratio in dB. `band` is `(low, high)` in Hz.
pub fn aclr(sig: &ComplexSignal, band: (f64, f64)) -> Result<f64> {
    aclr_with_segment(sig, band, ACLR_SEGMENT_LEN.min(sig.len()))
}

pub fn aclr_with_segment(sig: &ComplexSignal, band: (f64, f64), segment_len: usize) -> Result<f64> {
    let nyquist = sig.sample_rate() / 2.0;
    let (lo, hi) = band;
    if !(lo < hi) {
        return Err(Error::Argument(format!(
            "empty in-band interval [{lo}, {hi}]"
        )));
    }
    if lo < -nyquist || hi > nyquist {
        return Err(Error::Argument(format!(
            "in-band interval [{lo}, {hi}] Hz exceeds the Nyquist range ±{nyquist} Hz"
        )));
    }
    let spectrum = power_spectrum(sig, segment_len)?;
    band_ratio(&spectrum, band)
}

fn band_ratio(spectrum: &[SpectrumBin], (lo, hi): (f64, f64)) -> Result<f64> {
    let (mut inside, mut outside) = (0.0, 0.0);
    for b in spectrum {
        if b.frequency >= lo && b.frequency <= hi {
            inside += b.density;
        } else {
            outside += b.density;
        }
    }
    if inside <= 0.0 {
        return Err(Error::Domain("no power inside the band".into()));
    }
    Ok(db10(outside / inside))
}

/// Sorted sample of a metric, in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricDistribution {
    values: Vec<f64>,
}

impl MetricDistribution {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument(
                "distribution needs at least one value".into(),
            ));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Argument("distribution contains NaN".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Linearly interpolated percentile, `p` in `[0, 100]`.
    pub fn percentile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 100.0);
        let pos = p / 100.0 * (self.values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        self.values[lo] + (self.values[hi] - self.values[lo]) * frac
    }

    pub fn median(&self) -> f64 {
        self.percentile(50.0)
    }

    /// Fraction of values not above `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.values.partition_point(|v| *v <= x) as f64 / self.values.len() as f64
    }
}

/// Random transmit symbol of `scheme` with i.i.d. equiprobable votes.
///
/// Chirp schemes place `votes` unit-circle symbols at the group starts chosen
/// by the votes; the baseline sends QPSK on every subcarrier.
pub fn random_bins<R: Rng + ?Sized>(
    cfg: &WaveformConfig,
    scheme: Scheme,
    rng: &mut R,
) -> Result<BinVector> {
    let mut bins = BinVector::zeros(cfg.bins);
    match scheme {
        Scheme::Ideal => {
            return Err(Error::Argument("the ideal scheme has no waveform".into()));
        }
        Scheme::Obda => {
            let a = std::f64::consts::FRAC_1_SQRT_2;
            for v in bins.values_mut() {
                let re = if rng.random::<bool>() { a } else { -a };
                let im = if rng.random::<bool>() { a } else { -a };
                *v = Complex64::new(re, im);
            }
        }
        Scheme::CscMv { votes } => {
            let group = 1 + guard_for_votes(cfg.bins, votes)?;
            for u in 0..votes {
                let m = 2 * u + usize::from(rng.random::<bool>());
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                bins.values_mut()[m * group] = Complex64::from_polar(1.0, phase);
            }
        }
    }
    Ok(bins)
}

/// Builds the transmit symbols (cyclic prefix included) for an ensemble.
pub struct SymbolSource {
    modem: Modem,
    fdss: crate::waveform::FdssVector,
    scheme: Scheme,
}

impl SymbolSource {
    pub fn new(cfg: &WaveformConfig, scheme: Scheme, oversample: usize) -> Result<Self> {
        if scheme == Scheme::Ideal {
            return Err(Error::Argument("the ideal scheme has no waveform".into()));
        }
        if let Scheme::CscMv { votes } = scheme {
            guard_for_votes(cfg.bins, votes)?;
        }
        Ok(Self {
            modem: Modem::oversampled(cfg, oversample)?,
            fdss: build_fdss(cfg)?,
            scheme,
        })
    }

    pub fn modem(&self) -> &Modem {
        &self.modem
    }

    /// Symbol `index` of the ensemble keyed by `seed`.
    pub fn symbol(&self, seed: u64, index: u64) -> Result<ComplexSignal> {
        let mut rng = keyed_rng(seed, index, 0, DrawKind::Ensemble);
        let bins = random_bins(self.modem.config(), self.scheme, &mut rng)?;
        match self.scheme {
            Scheme::Obda => self.modem.modulate_ofdm(&bins),
            _ => self.modem.spread(&self.fdss, &bins),
        }
    }

    pub fn symbols(&self, seed: u64, count: usize) -> Result<Vec<ComplexSignal>> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.symbol(seed, i))
            .collect()
    }

    /// Symbol without its cyclic prefix.
    pub fn body(&self, seed: u64, index: u64) -> Result<ComplexSignal> {
        let sym = self.symbol(seed, index)?;
        let cp = self.modem.config().cp_len * self.modem.oversample();
        sym.slice(cp, sym.len() - cp)
    }
}

fn body_metric(
    cfg: &WaveformConfig,
    scheme: Scheme,
    count: usize,
    seed: u64,
    metric: fn(&ComplexSignal) -> Result<f64>,
) -> Result<MetricDistribution> {
    let source = SymbolSource::new(cfg, scheme, MEASUREMENT_OVERSAMPLE)?;
    let values = (0..count as u64)
        .into_par_iter()
        .map(|i| metric(&source.body(seed, i)?))
        .collect::<Result<Vec<f64>>>()?;
    MetricDistribution::new(values)
}

/// Per-symbol PMEPR over `count` random symbols at ×4 oversampling.
pub fn pmepr_distribution(
    cfg: &WaveformConfig,
    scheme: Scheme,
    count: usize,
    seed: u64,
) -> Result<MetricDistribution> {
    body_metric(cfg, scheme, count, seed, pmepr)
}

/// Per-symbol cubic metric over `count` random symbols at ×4 oversampling.
pub fn cm_distribution(
    cfg: &WaveformConfig,
    scheme: Scheme,
    count: usize,
    seed: u64,
) -> Result<MetricDistribution> {
    body_metric(cfg, scheme, count, seed, cubic_metric)
}

/// Continuous transmit stream of `count` random symbols at ×4 oversampling,
/// scaled to unit mean power.
pub fn ensemble_stream(
    cfg: &WaveformConfig,
    scheme: Scheme,
    count: usize,
    seed: u64,
) -> Result<ComplexSignal> {
    let source = SymbolSource::new(cfg, scheme, MEASUREMENT_OVERSAMPLE)?;
    let symbols = source.symbols(seed, count)?;
    let stream = assemble_stream(cfg, MEASUREMENT_OVERSAMPLE, &symbols)?;
    let p = nonzero_power(&stream)?;
    Ok(stream.scaled(1.0 / p.sqrt()))
}

/// ACLR of `stream` after the amplifier at `obo_db`.
pub fn aclr_at(stream: &ComplexSignal, band: (f64, f64), pa: &RappPa, obo_db: f64) -> Result<f64> {
    aclr(&apply_pa(&pa.with_obo(obo_db), stream), band)
}

/// `(obo_db, aclr_db)` for every back-off in `obos`.
pub fn aclr_sweep(
    stream: &ComplexSignal,
    band: (f64, f64),
    pa: &RappPa,
    obos: &[f64],
) -> Result<Vec<(f64, f64)>> {
    obos.par_iter()
        .map(|o| Ok((*o, aclr_at(stream, band, pa, *o)?)))
        .collect()
}

/// Back-off grid `0, step, …, max`.
pub fn obo_grid(max_db: f64, step_db: f64) -> Vec<f64> {
    let n = (max_db / step_db).round() as usize;
    (0..=n).map(|k| k as f64 * step_db).collect()
}

/// Smallest back-off in `[0, 30]` dB whose ACLR meets `target_db`, by
/// bisection to 0.1 dB over a fixed ensemble.
pub fn obo_for_aclr(
    stream: &ComplexSignal,
    band: (f64, f64),
    pa: &RappPa,
    target_db: f64,
) -> Result<f64> {
    let at_max = aclr_at(stream, band, pa, OBO_SEARCH_MAX_DB)?;
    if at_max > target_db {
        return Err(Error::Infeasible(format!(
            "ACLR target {target_db} dB unreachable; {at_max:.2} dB at {OBO_SEARCH_MAX_DB} dB back-off"
        )));
    }
    if aclr_at(stream, band, pa, 0.0)? <= target_db {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, OBO_SEARCH_MAX_DB);
    while hi - lo > OBO_SEARCH_STEP_DB {
        let mid = 0.5 * (lo + hi);
        if aclr_at(stream, band, pa, mid)? <= target_db {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `(frequency_hz, psd_db)` of `sig` with the ACLR estimator settings.
pub fn psd_db(sig: &ComplexSignal) -> Result<Vec<(f64, f64)>> {
    let spectrum = power_spectrum(sig, ACLR_SEGMENT_LEN.min(sig.len()))?;
    Ok(spectrum
        .iter()
        .map(|b| (b.frequency, db10(b.density.max(f64::MIN_POSITIVE))))
        .collect())
}

//! Tapped-delay-line multipath, timing offsets and the multiple-access sum.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::oac::votes_per_symbol;
use crate::signal::ComplexSignal;
use crate::waveform::WaveformConfig;

/// Extended Pedestrian A tap delays in seconds.
pub const EPA_DELAYS: [f64; 7] = [0.0, 30e-9, 70e-9, 90e-9, 110e-9, 190e-9, 410e-9];
/// Extended Pedestrian A relative tap powers in dB.
pub const EPA_POWERS_DB: [f64; 7] = [0.0, -1.0, -2.0, -3.0, -8.0, -17.2, -20.8];

fn epa_linear_powers() -> [f64; 7] {
    let mut p = EPA_POWERS_DB.map(|db| 10f64.powf(db / 10.0));
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// RMS delay spread of the continuous-time profile.
pub fn epa_rms_delay_spread() -> f64 {
    let p = epa_linear_powers();
    let mean: f64 = p.iter().zip(EPA_DELAYS).map(|(p, t)| p * t).sum();
    let second: f64 = p.iter().zip(EPA_DELAYS).map(|(p, t)| p * t * t).sum();
    (second - mean * mean).sqrt()
}

/// Largest profile delay.
pub fn epa_max_delay() -> f64 {
    EPA_DELAYS[EPA_DELAYS.len() - 1]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    /// Delay in samples.
    pub delay: usize,
    pub gain: Complex64,
}

/// One draw of the multipath channel, fixed for a whole round.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<Tap>,
}

impl ChannelRealization {
    pub fn new(taps: Vec<Tap>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Argument("channel needs at least one tap".into()));
        }
        Ok(Self { taps })
    }

    /// Single unit tap at delay zero.
    pub fn identity() -> Self {
        Self {
            taps: vec![Tap {
                delay: 0,
                gain: Complex64::new(1.0, 0.0),
            }],
        }
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn max_delay(&self) -> usize {
        self.taps.iter().map(|t| t.delay).max().unwrap_or(0)
    }

    pub fn power(&self) -> f64 {
        self.taps.iter().map(|t| t.gain.norm_sqr()).sum()
    }

    /// Frequency response on the occupied subcarriers `L_d..=L_u`, including
    /// the linear phase of a timing offset.
    pub fn frequency_response(&self, cfg: &WaveformConfig, sync: SyncError) -> Vec<Complex64> {
        let n = cfg.idft_size as f64;
        cfg.subcarriers()
            .map(|j| {
                self.taps
                    .iter()
                    .map(|t| {
                        let d = (t.delay + sync.offset) as f64;
                        t.gain
                            * Complex64::from_polar(1.0, -std::f64::consts::TAU * j as f64 * d / n)
                    })
                    .sum()
            })
            .collect()
    }
}

/// Rayleigh-faded EPA taps snapped to the sample grid of `sample_rate`.
pub fn draw_epa<R: Rng + ?Sized>(sample_rate: f64, rng: &mut R) -> ChannelRealization {
    let powers = epa_linear_powers();
    let taps = EPA_DELAYS
        .iter()
        .zip(powers)
        .map(|(t, p)| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Tap {
                delay: (t * sample_rate).round() as usize,
                gain: Complex64::new(re, im) * (p / 2.0).sqrt(),
            }
        })
        .collect();
    ChannelRealization { taps }
}

/// Late arrival of a device's signal, in whole samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SyncError {
    pub offset: usize,
}

impl SyncError {
    pub fn new(offset: usize) -> Self {
        Self { offset }
    }

    /// Uniform integer offset in `0..=max_offset`.
    pub fn draw<R: Rng + ?Sized>(max_offset: usize, rng: &mut R) -> Self {
        Self {
            offset: rng.random_range(0..=max_offset),
        }
    }
}

/// Largest delay plus offset, in samples, for which a received symbol is a
/// pure circular shift inside the receiver window.
pub fn admissible_spread(cfg: &WaveformConfig) -> usize {
    cfg.cp_len - cfg.window_rolloff
}

/// Whether the channel plus offset stays inside the cyclic-prefix budget.
pub fn fits_prefix(cfg: &WaveformConfig, h: &ChannelRealization, sync: SyncError) -> bool {
    h.max_delay() + sync.offset <= admissible_spread(cfg)
}

/// Linear convolution with the tap line, delayed by the offset and cut to the
/// transmit length.
pub fn propagate(h: &ChannelRealization, sync: SyncError, tx: &ComplexSignal) -> ComplexSignal {
    let x = tx.samples();
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    for tap in &h.taps {
        let shift = tap.delay + sync.offset;
        if shift >= x.len() {
            continue;
        }
        for (out, s) in y[shift..].iter_mut().zip(x) {
            *out += tap.gain * s;
        }
    }
    ComplexSignal::from_parts(y, tx.sample_period())
}

/// `Σ √P_k x_k` plus circular complex Gaussian noise of variance `noise_power`.
pub fn superpose<R: Rng + ?Sized>(
    signals: &[(ComplexSignal, f64)],
    noise_power: f64,
    len: usize,
    sample_period: f64,
    rng: &mut R,
) -> Result<ComplexSignal> {
    if !(noise_power >= 0.0 && noise_power.is_finite()) {
        return Err(Error::Argument(format!(
            "noise power must be non-negative, got {noise_power}"
        )));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); len];
    for (sig, p) in signals {
        if sig.len() != len {
            return Err(Error::Framing {
                expected: len,
                actual: sig.len(),
            });
        }
        if *p < 0.0 {
            return Err(Error::Argument(format!(
                "received power must be non-negative, got {p}"
            )));
        }
        let a = p.sqrt();
        for (o, s) in y.iter_mut().zip(sig.samples()) {
            *o += s * a;
        }
    }
    add_noise(&mut y, noise_power, rng);
    Ok(ComplexSignal::from_parts(y, sample_period))
}

pub(crate) fn add_noise<R: Rng + ?Sized>(y: &mut [Complex64], noise_power: f64, rng: &mut R) {
    if noise_power == 0.0 {
        return;
    }
    let sd = (noise_power / 2.0).sqrt();
    for o in y.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *o += Complex64::new(re, im) * sd;
    }
}

/// Fewest guard bins whose span covers the channel and timing spread.
pub fn min_guard_bins(cfg: &WaveformConfig, t_chn: f64, t_sync: f64) -> Result<usize> {
    if !(t_chn >= 0.0 && t_sync >= 0.0 && t_chn.is_finite() && t_sync.is_finite()) {
        return Err(Error::Argument("durations must be non-negative".into()));
    }
    let ts = cfg.symbol_duration();
    let spread = t_chn + t_sync;
    if spread >= ts {
        return Err(Error::Infeasible(format!(
            "spread of {spread:e} s exceeds the symbol duration {ts:e} s"
        )));
    }
    let per_bin = ts / cfg.bins as f64;
    // Guard against round-up from representation error on exact multiples.
    let guard = (spread / per_bin - 1e-9).ceil().max(0.0) as usize;
    if votes_per_symbol(cfg.bins, guard) == 0 {
        return Err(Error::Infeasible(format!(
            "{guard} guard bins leave no room for a vote"
        )));
    }
    Ok(guard)
}

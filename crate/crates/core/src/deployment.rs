//! Cell geometry, path-loss power control and coverage.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::db10;
use crate::rng::{keyed_rng, DrawKind, SERVER};

/// Path-loss compensation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerControlParams {
    /// Path-loss exponent.
    pub alpha: f64,
    /// Compensation exponent, `0 ≤ beta ≤ alpha`.
    pub beta: f64,
    /// Reference distance in meters.
    pub r_ref: f64,
    /// Received power at the reference distance in watts.
    pub p_ref: f64,
    /// Back-off of a device at the reference distance, dB.
    pub obo_ref: f64,
    /// Smallest back-off the scheme tolerates, dB.
    pub obo_min: f64,
    /// Receiver noise power in watts.
    pub noise_power: f64,
}

impl Default for PowerControlParams {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta: 4.0,
            r_ref: 10.0,
            p_ref: 1.0,
            obo_ref: 30.0,
            obo_min: 10.5,
            noise_power: 0.01,
        }
    }
}

impl PowerControlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta >= 0.0 && self.beta <= self.alpha) {
            return Err(Error::Argument(format!(
                "need 0 <= beta <= alpha, got beta = {}, alpha = {}",
                self.beta, self.alpha
            )));
        }
        if !(self.r_ref.is_finite() && self.r_ref > 0.0) {
            return Err(Error::Argument("r_ref must be positive".into()));
        }
        if !(self.p_ref.is_finite() && self.p_ref > 0.0) {
            return Err(Error::Argument("p_ref must be positive".into()));
        }
        if !(self.obo_min <= self.obo_ref) {
            return Err(Error::Argument(format!(
                "obo_min ({}) must not exceed obo_ref ({})",
                self.obo_min, self.obo_ref
            )));
        }
        if !(self.noise_power.is_finite() && self.noise_power >= 0.0) {
            return Err(Error::Argument("noise power must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_obo_min(&self, obo_min: f64) -> Self {
        Self { obo_min, ..*self }
    }

    /// Target SNR in dB for devices inside coverage.
    pub fn target_snr_db(&self) -> f64 {
        db10(self.p_ref / self.noise_power)
    }
}

/// Distance up to which path loss can be compensated before the back-off
/// reaches `obo_min`.
pub fn coverage_radius(pc: &PowerControlParams) -> Result<f64> {
    pc.validate()?;
    if pc.beta == 0.0 {
        return Err(Error::Domain(
            "coverage radius is undefined for beta = 0".into(),
        ));
    }
    Ok(pc.r_ref * 10f64.powf((pc.obo_ref - pc.obo_min) / (10.0 * pc.beta)))
}

/// Received power as the compensation law states it: `(d/r_ref)^(β−α)·p_ref`
/// inside `r_p`, frozen at its `r_p` value beyond.
pub fn received_power(pc: &PowerControlParams, r_p: f64, d: f64) -> f64 {
    let r = if d < r_p { d } else { r_p };
    (r / pc.r_ref).powf(pc.beta - pc.alpha) * pc.p_ref
}

/// Operating point of one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Back-off the device transmits at, dB.
    pub obo_db: f64,
    /// Power arriving at the server, watts.
    pub rx_power: f64,
}

/// Back-off and received power of a device at distance `d` when transmit
/// power is capped at the `obo_min` back-off. Beyond `r_p` the device stays
/// at full power and the path loss is no longer compensated.
pub fn link_budget(pc: &PowerControlParams, r_p: f64, d: f64) -> LinkBudget {
    let ratio = d / pc.r_ref;
    if d < r_p {
        LinkBudget {
            obo_db: pc.obo_ref - 10.0 * pc.beta * ratio.log10(),
            rx_power: ratio.powf(pc.beta - pc.alpha) * pc.p_ref,
        }
    } else {
        LinkBudget {
            obo_db: pc.obo_min,
            rx_power: pc.p_ref * (r_p / pc.r_ref).powf(pc.beta) * ratio.powf(-pc.alpha),
        }
    }
}

/// `(distance, snr_db)` along `distances` with transmit power capped at `obo_min`.
pub fn snr_vs_distance(pc: &PowerControlParams, distances: &[f64]) -> Result<Vec<(f64, f64)>> {
    let r_p = coverage_radius(pc)?;
    if pc.noise_power <= 0.0 {
        return Err(Error::Domain("SNR is undefined without noise".into()));
    }
    distances
        .iter()
        .map(|d| {
            if !(d.is_finite() && *d > 0.0) {
                return Err(Error::Argument(format!(
                    "distance must be positive, got {d}"
                )));
            }
            Ok((*d, db10(link_budget(pc, r_p, *d).rx_power / pc.noise_power)))
        })
        .collect()
}

/// Radial distances of the devices in a circular cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub ed_distances: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub seed: u64,
}

/// How device distances are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Radius uniform on `[r_min, r_max]`.
    UniformRadius,
    /// Half of the devices uniform in radius inside `r_max/√2`, the rest outside.
    EqualAreas,
}

impl Deployment {
    pub fn sample(
        k: usize,
        r_min: f64,
        r_max: f64,
        placement: Placement,
        seed: u64,
    ) -> Result<Self> {
        match placement {
            Placement::UniformRadius => Self::uniform_radius(k, r_min, r_max, seed),
            Placement::EqualAreas => Self::equal_areas(k, r_min, r_max, seed),
        }
    }

    pub fn uniform_radius(k: usize, r_min: f64, r_max: f64, seed: u64) -> Result<Self> {
        check_radii(k, r_min, r_max)?;
        let mut rng = keyed_rng(seed, 0, SERVER, DrawKind::Deployment);
        let ed_distances = (0..k).map(|_| uniform(&mut rng, r_min, r_max)).collect();
        Ok(Self {
            ed_distances,
            r_min,
            r_max,
            seed,
        })
    }

    /// `⌈K/2⌉` devices inside the inner disk of radius `r_max/√2` (area half of
    /// the cell), the remainder in the outer ring, each uniform in radius.
    pub fn equal_areas(k: usize, r_min: f64, r_max: f64, seed: u64) -> Result<Self> {
        check_radii(k, r_min, r_max)?;
        let boundary = inner_radius(r_max);
        if boundary <= r_min {
            return Err(Error::Argument(format!(
                "inner radius {boundary} does not exceed r_min {r_min}"
            )));
        }
        let mut rng = keyed_rng(seed, 0, SERVER, DrawKind::Deployment);
        let inner = k.div_ceil(2);
        let ed_distances = (0..k)
            .map(|i| {
                if i < inner {
                    uniform(&mut rng, r_min, boundary)
                } else {
                    // Keep the outer ring open at the boundary.
                    let d = uniform(&mut rng, boundary, r_max);
                    if d <= boundary {
                        r_max
                    } else {
                        d
                    }
                }
            })
            .collect();
        Ok(Self {
            ed_distances,
            r_min,
            r_max,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.ed_distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ed_distances.is_empty()
    }

    /// Whether device `k` lies in the inner disk of half the cell area.
    pub fn is_inner(&self, k: usize) -> bool {
        self.ed_distances[k] <= inner_radius(self.r_max)
    }

    /// Devices beyond `r_p`, which cannot be fully compensated.
    pub fn count_beyond(&self, r_p: f64) -> usize {
        self.ed_distances.iter().filter(|d| **d >= r_p).count()
    }
}

/// Radius of the disk holding half the cell area.
pub fn inner_radius(r_max: f64) -> f64 {
    r_max / std::f64::consts::SQRT_2
}

fn check_radii(k: usize, r_min: f64, r_max: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument(
            "deployment needs at least one device".into(),
        ));
    }
    if !(r_min.is_finite() && r_max.is_finite() && r_min > 0.0 && r_min < r_max) {
        return Err(Error::Argument(format!(
            "need 0 < r_min < r_max, got r_min = {r_min}, r_max = {r_max}"
        )));
    }
    Ok(())
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_noise, draw_epa, propagate, ChannelRealization, SyncError};
use crate::deployment::{coverage_radius, link_budget, LinkBudget, PowerControlParams};
use crate::error::{Error, Result};
use crate::oac::{
    decode_obda, detect_mv, encode_csc_block, encode_obda, guard_for_votes, majority_vote,
    obda_blocks, Scheme, VotePlan, VoteVector,
};
use crate::rf::RappPa;
use crate::rng::{keyed_rng, keyed_stream, DrawKind, SERVER};
use crate::signal::ComplexSignal;
use crate::waveform::{build_fdss, BinVector, FdssVector, Modem, WaveformConfig};

/// Propagation model between devices and server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// Rayleigh EPA taps redrawn every round, plus a random timing offset.
    Epa,
    /// Unit gain, no delay, perfect timing.
    None,
}

/// Radio settings shared by all devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhyConfig {
    pub waveform: WaveformConfig,
    pub pa: RappPa,
    pub power: PowerControlParams,
    pub fading: Fading,
    /// Timing offsets are uniform on `0..=max_sync_offset` samples.
    pub max_sync_offset: usize,
    /// Truncation level of channel inversion, relative to the rms gain.
    pub tci_threshold: f64,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            waveform: WaveformConfig::default(),
            pa: RappPa::default(),
            power: PowerControlParams::default(),
            fading: Fading::Epa,
            max_sync_offset: 4,
            tci_threshold: 0.1,
        }
    }
}

impl PhyConfig {
    pub fn validate(&self) -> Result<()> {
        self.waveform.validate()?;
        self.pa.validate()?;
        self.power.validate()?;
        if !(self.tci_threshold >= 0.0 && self.tci_threshold.is_finite()) {
            return Err(Error::Argument("tci_threshold must be non-negative".into()));
        }
        Ok(())
    }
}

struct DeviceLink {
    budget: LinkBudget,
    channel: ChannelRealization,
    sync: SyncError,
}

/// Aggregates device votes through the simulated uplink.
pub struct Phy {
    scheme: Scheme,
    cfg: PhyConfig,
    q: usize,
    modem: Modem,
    fdss: FdssVector,
    plan: Option<VotePlan>,
    budgets: Vec<LinkBudget>,
}

impl Phy {
    /// Uplink for `q` votes from devices at `distances`.
    pub fn new(scheme: Scheme, cfg: PhyConfig, q: usize, distances: &[f64]) -> Result<Self> {
        cfg.validate()?;
        let plan = match scheme {
            Scheme::CscMv { votes } => Some(VotePlan::new(
                q,
                cfg.waveform.bins,
                guard_for_votes(cfg.waveform.bins, votes)?,
            )?),
            _ => None,
        };
        let r_p = coverage_radius(&cfg.power)?;
        let budgets = distances
            .iter()
            .map(|d| link_budget(&cfg.power, r_p, *d))
            .collect();
        Ok(Self {
            scheme,
            modem: Modem::new(&cfg.waveform)?,
            fdss: build_fdss(&cfg.waveform)?,
            cfg,
            q,
            plan,
            budgets,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn plan(&self) -> Option<&VotePlan> {
        self.plan.as_ref()
    }

    pub fn link_budgets(&self) -> &[LinkBudget] {
        &self.budgets
    }

    /// Symbols one round occupies.
    pub fn symbols_per_round(&self) -> usize {
        match self.scheme {
            Scheme::Ideal => 0,
            Scheme::Obda => obda_blocks(self.q, self.cfg.waveform.bins),
            Scheme::CscMv { .. } => self.plan.as_ref().map_or(0, |p| p.blocks()),
        }
    }

    fn links(&self, seed: u64, round: u64) -> Vec<DeviceLink> {
        self.budgets
            .iter()
            .enumerate()
            .map(|(k, budget)| {
                let (channel, sync) = match self.cfg.fading {
                    Fading::Epa => (
                        draw_epa(
                            self.cfg.waveform.sample_rate,
                            &mut keyed_rng(seed, round, k as u64, DrawKind::Channel),
                        ),
                        SyncError::draw(
                            self.cfg.max_sync_offset,
                            &mut keyed_rng(seed, round, k as u64, DrawKind::Sync),
                        ),
                    ),
                    Fading::None => (ChannelRealization::identity(), SyncError::default()),
                };
                DeviceLink {
                    budget: *budget,
                    channel,
                    sync,
                }
            })
            .collect()
    }

    /// Amplifies a symbol at the device's back-off and rescales so the
    /// linear-regime output has unit mean power.
    fn transmit(&self, symbol: &ComplexSignal, obo_db: f64) -> ComplexSignal {
        let pa = self.cfg.pa.with_obo(obo_db);
        let mut out = symbol.clone();
        let p = symbol.mean_power();
        if p > 0.0 {
            pa.amplify_in_place(out.samples_mut(), p);
            let undo = 1.0 / (pa.sat_amplitude * 10f64.powf(-obo_db / 20.0));
            out.samples_mut().iter_mut().for_each(|z| *z *= undo);
        }
        out
    }

    fn receive_block<F>(
        &self,
        links: &[DeviceLink],
        seed: u64,
        round: u64,
        block: usize,
        mut build: F,
    ) -> Result<Vec<Complex64>>
    where
        F: FnMut(usize) -> Result<ComplexSignal>,
    {
        let len = self.cfg.waveform.symbol_len();
        let mut acc = vec![Complex64::new(0.0, 0.0); len];
        for (k, link) in links.iter().enumerate() {
            let tx = self.transmit(&build(k)?, link.budget.obo_db);
            let rx = propagate(&link.channel, link.sync, &tx);
            let a = link.budget.rx_power.sqrt();
            for (o, y) in acc.iter_mut().zip(rx.samples()) {
                *o += y * a;
            }
        }
        let mut rng = keyed_stream(seed, round, SERVER, DrawKind::Noise, block as u64);
        add_noise(&mut acc, self.cfg.power.noise_power, &mut rng);
        Ok(acc)
    }

    /// Majority vote as decoded by the server in round `round`.
    pub fn aggregate(&self, seed: u64, round: u64, votes: &[VoteVector]) -> Result<VoteVector> {
        if votes.len() != self.budgets.len() {
            return Err(Error::Config(format!(
                "{} vote vectors for {} devices",
                votes.len(),
                self.budgets.len()
            )));
        }
        if let Some(v) = votes.iter().find(|v| v.len() != self.q) {
            return Err(Error::Config(format!(
                "vote vector of length {} for a plan of {} votes",
                v.len(),
                self.q
            )));
        }
        let period = 1.0 / self.cfg.waveform.sample_rate;
        match self.scheme {
            Scheme::Ideal => majority_vote(votes),
            Scheme::CscMv { .. } => {
                let plan = self.plan.as_ref().expect("chirp scheme has a plan");
                let links = self.links(seed, round);
                let blocks = (0..plan.blocks())
                    .into_par_iter()
                    .map(|s| {
                        let acc = self.receive_block(&links, seed, round, s, |k| {
                            let mut rng =
                                keyed_stream(seed, round, k as u64, DrawKind::Symbols, s as u64);
                            let bins = encode_csc_block(plan, &votes[k], s, &mut rng)?;
                            self.modem.spread(&self.fdss, &bins)
                        })?;
                        self.modem
                            .despread(&self.fdss, &ComplexSignal::from_parts(acc, period))
                    })
                    .collect::<Result<Vec<BinVector>>>()?;
                Ok(detect_mv(plan, &blocks)?.mv)
            }
            Scheme::Obda => {
                let links = self.links(seed, round);
                let encoded = links
                    .iter()
                    .zip(votes)
                    .map(|(link, v)| {
                        let response = link
                            .channel
                            .frequency_response(&self.cfg.waveform, link.sync);
                        encode_obda(v, &response, self.cfg.tci_threshold)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let blocks = (0..obda_blocks(self.q, self.cfg.waveform.bins))
                    .into_par_iter()
                    .map(|b| {
                        let acc = self.receive_block(&links, seed, round, b, |k| {
                            self.modem.modulate_ofdm(&encoded[k][b])
                        })?;
                        self.modem
                            .demodulate_ofdm(&ComplexSignal::from_parts(acc, period))
                    })
                    .collect::<Result<Vec<BinVector>>>()?;
                decode_obda(self.q, &blocks)
            }
        }
    }
}

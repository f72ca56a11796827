//! Experiment configuration file.

use std::path::{Path, PathBuf};

use chirp_oac::deployment::{Placement, PowerControlParams};
use chirp_oac::learn::{DataMode, Fading, PhyConfig, TrainConfig};
use chirp_oac::oac::Scheme;
use chirp_oac::rf::RappPa;
use chirp_oac::waveform::WaveformConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Profile used when no configuration file is given.
pub const DEFAULT_PROFILE: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub waveform: WaveformConfig,
    pub pa: PaConfig,
    pub power_control: PowerControlConfig,
    pub deployment: DeploymentConfig,
    pub channel: ChannelConfig,
    pub metrics: MetricsConfig,
    pub training: TrainingConfig,
    pub bound: BoundConfig,
    #[serde(rename = "scheme")]
    pub schemes: Vec<SchemeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaConfig {
    pub sat_amplitude: f64,
    pub smoothness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerControlConfig {
    pub alpha: f64,
    pub beta: f64,
    pub r_ref: f64,
    pub p_ref: f64,
    pub obo_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    pub devices: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub fading: Fading,
    pub max_sync_offset: usize,
    pub tci_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Symbols per PMEPR/CM ensemble.
    pub symbols: usize,
    /// Symbols in each ACLR stream.
    pub aclr_symbols: usize,
    pub aclr_target_db: f64,
    pub obo_max_db: f64,
    pub obo_step_db: f64,
    /// Distance grid step for SNR curves, meters.
    pub distance_step_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub rounds: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mode: DataMode,
    /// Independent runs per scheme and SNR, seeded `seed, seed + 1, …`.
    pub repeats: usize,
    pub snr_db: Vec<f64>,
    pub hidden: usize,
    pub dataset: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        train_per_class: usize,
        test_per_class: usize,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Cap on samples read from each file.
        limit: Option<usize>,
        /// Use synthetic digits when the files are missing.
        fallback_synthetic: bool,
        train_per_class: usize,
        test_per_class: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    /// Model dimension.
    pub q: usize,
    /// Smoothness constant of every coordinate.
    pub l_per_coordinate: f64,
    /// Gradient noise deviation of every coordinate.
    pub sigma_per_coordinate: f64,
    pub f_star: f64,
    pub initial_loss: f64,
    pub gamma: f64,
    /// Effective SNR points, dB.
    pub xi_db: Vec<f64>,
    pub rounds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeEntry {
    pub name: Scheme,
    /// Back-off floor for power control; solved from the ACLR target when absent.
    pub obo_min_db: Option<f64>,
}

impl ExperimentConfig {
    pub fn default_profile() -> Self {
        Self::parse(DEFAULT_PROFILE).expect("shipped profile is valid")
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg_err = |e: chirp_oac::Error| CliError::Config(e.to_string());
        self.waveform.validate().map_err(cfg_err)?;
        self.rapp(0.0).validate().map_err(cfg_err)?;
        self.power_params(self.power_control.obo_ref, 1.0)
            .validate()
            .map_err(cfg_err)?;
        let d = &self.deployment;
        if d.devices == 0 || !(d.r_min > 0.0 && d.r_min < d.r_max) {
            return Err(CliError::Config(
                "deployment needs devices > 0 and 0 < r_min < r_max".into(),
            ));
        }
        if self.schemes.is_empty() {
            return Err(CliError::Config(
                "at least one [[scheme]] is required".into(),
            ));
        }
        for s in &self.schemes {
            if let Some(o) = s.obo_min_db {
                if o > self.power_control.obo_ref {
                    return Err(CliError::Config(format!(
                        "{}: obo_min_db {o} exceeds obo_ref {}",
                        s.name, self.power_control.obo_ref
                    )));
                }
            }
        }
        let m = &self.metrics;
        if m.symbols == 0 || m.aclr_symbols == 0 {
            return Err(CliError::Config(
                "metric ensembles need at least one symbol".into(),
            ));
        }
        if !(m.obo_step_db > 0.0 && m.obo_max_db >= 0.0 && m.distance_step_m > 0.0) {
            return Err(CliError::Config("sweep steps must be positive".into()));
        }
        let t = &self.training;
        if t.batch_size == 0 || t.repeats == 0 || t.hidden == 0 {
            return Err(CliError::Config(
                "batch_size, repeats and hidden must be positive".into(),
            ));
        }
        if !(t.learning_rate > 0.0) {
            return Err(CliError::Config("learning_rate must be positive".into()));
        }
        if t.snr_db.is_empty() || t.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(CliError::Config(
                "training.snr_db needs finite values".into(),
            ));
        }
        let b = &self.bound;
        if b.q == 0 || b.rounds.is_empty() || b.xi_db.is_empty() {
            return Err(CliError::Config(
                "bound needs q > 0 and non-empty round and xi_db lists".into(),
            ));
        }
        Ok(())
    }

    pub fn rapp(&self, obo_db: f64) -> RappPa {
        RappPa {
            sat_amplitude: self.pa.sat_amplitude,
            smoothness: self.pa.smoothness,
            obo_db,
        }
    }

    /// Power-control parameters for a scheme floor and a target SNR.
    pub fn power_params(&self, obo_min: f64, noise_power: f64) -> PowerControlParams {
        let p = &self.power_control;
        PowerControlParams {
            alpha: p.alpha,
            beta: p.beta,
            r_ref: p.r_ref,
            p_ref: p.p_ref,
            obo_ref: p.obo_ref,
            obo_min,
            noise_power,
        }
    }

    /// Noise power that puts fully compensated devices at `snr_db`.
    pub fn noise_for_snr(&self, snr_db: f64) -> f64 {
        self.power_control.p_ref * 10f64.powf(-snr_db / 10.0)
    }

    pub fn phy(&self, obo_min: f64, snr_db: f64) -> PhyConfig {
        PhyConfig {
            waveform: self.waveform.clone(),
            pa: self.rapp(0.0),
            power: self.power_params(obo_min, self.noise_for_snr(snr_db)),
            fading: self.channel.fading,
            max_sync_offset: self.channel.max_sync_offset,
            tci_threshold: self.channel.tci_threshold,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rounds: self.training.rounds,
            batch_size: self.training.batch_size,
            learning_rate: self.training.learning_rate,
            mode: self.training.mode,
        }
    }

    /// Schemes selected by `--scheme`, or all configured ones.
    pub fn select_schemes(&self, only: Option<Scheme>) -> Vec<SchemeEntry> {
        match only {
            None => self.schemes.clone(),
            Some(s) => {
                let entry = self.schemes.iter().find(|e| e.name == s).cloned();
                vec![entry.unwrap_or(SchemeEntry {
                    name: s,
                    obo_min_db: None,
                })]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_round_trips() {
        let cfg = ExperimentConfig::default_profile();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{DEFAULT_PROFILE}\nsurprise = 1\n");
        assert!(matches!(
            ExperimentConfig::parse(&text),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn seed_is_mandatory() {
        let text: String = DEFAULT_PROFILE
            .lines()
            .filter(|l| !l.starts_with("seed"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(matches!(
            ExperimentConfig::parse(&text),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn invalid_waveform_is_a_config_error() {
        let mut cfg = ExperimentConfig::default_profile();
        cfg.waveform.upper_index = 40;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}

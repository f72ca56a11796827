//! Command-line experiment runner for the chirp over-the-air computation
//! simulator.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use chirp_oac::oac::Scheme;
use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
use output::OutputDir;

#[derive(Debug, Parser)]
#[command(
    name = "chirp-oac",
    version,
    about = "Chirp-based over-the-air majority vote experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment configuration file; the built-in default profile when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Restricts the run to one scheme: ideal, obda or csc_mv:N.
    #[arg(long, global = true, value_name = "NAME")]
    pub scheme: Option<Scheme>,
    /// Comma-separated SNR points in dB for training and SNR curves.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Option<Vec<f64>>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// PMEPR distribution per scheme.
    Pmepr,
    /// Cubic metric distribution per scheme.
    Cm,
    /// ACLR against amplifier back-off, and spectra.
    Aclr,
    /// Back-off floor and coverage radius per scheme.
    Coverage,
    /// Received SNR against link distance.
    SnrDistance,
    /// Federated sign-SGD training over the simulated uplink.
    Train,
    /// FDSS coefficients and one chirp in time.
    WaveformDump,
    /// Convergence bound over SNR and round count.
    Bound,
    /// Prints the effective configuration.
    ShowConfig,
}

/// Configuration after applying command-line overrides.
pub fn resolve_config(args: &CommonArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default_profile(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(snr) = &args.snr_db {
        cfg.training.snr_db = snr.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli.common)?;
    let threads = cli.common.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} threads: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg, cli.common.scheme))
}

fn dispatch(command: Command, cfg: &ExperimentConfig, scheme: Option<Scheme>) -> CliResult<()> {
    if command == Command::ShowConfig {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let schemes = cfg.select_schemes(scheme);
    let out = OutputDir::create(&cfg.output_dir)?;
    out.text("config.toml", &cfg.to_toml()?)?;
    match command {
        Command::Pmepr => commands::pmepr(cfg, &schemes, &out),
        Command::Cm => commands::cm(cfg, &schemes, &out),
        Command::Aclr => commands::aclr(cfg, &schemes, &out),
        Command::Coverage => commands::coverage(cfg, &schemes, &out),
        Command::SnrDistance => commands::snr_distance(cfg, &schemes, &out),
        Command::Train => commands::train(cfg, &schemes, &out),
        Command::WaveformDump => commands::waveform_dump(cfg, &out),
        Command::Bound => commands::bound(cfg, &out),
        Command::ShowConfig => unreachable!(),
    }
}

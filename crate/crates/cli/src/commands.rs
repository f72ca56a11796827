//! Subcommand implementations. Every command is a pure function of the
//! configuration: reruns write byte-identical files.

use std::collections::BTreeMap;

use chirp_oac::deployment::{coverage_radius, snr_vs_distance, Deployment};
use chirp_oac::learn::{
    convergence_bound, evaluate, load_idx_dataset, noise_penalty, partition_dataset,
    synthetic_digits, BoundParams, Dataset, Federation, Mlp, Model, Phy, CLASSES, IMAGE_SIDE,
};
use chirp_oac::oac::Scheme;
use chirp_oac::rf::{
    aclr_sweep, apply_pa, cm_distribution, ensemble_stream, obo_for_aclr, obo_grid,
    pmepr_distribution, psd_db, MetricDistribution, MEASUREMENT_OVERSAMPLE,
};
use chirp_oac::waveform::{build_fdss, BinVector, Modem};
use chirp_oac::ComplexSignal;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{DatasetConfig, ExperimentConfig, SchemeEntry};
use crate::error::{CliError, CliResult};
use crate::output::{cell, OutputDir};

/// Percentiles reported for metric distributions.
const PERCENTILES: [f64; 16] = [
    0.0, 1.0, 5.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0, 99.0, 99.5, 99.9, 99.95, 99.99, 99.999,
    100.0,
];

/// Back-offs at which the PSD is dumped.
const PSD_OBOS_DB: [f64; 3] = [0.0, 5.0, 10.0];

/// Offset between the seeds of the training and test digit sets.
const TEST_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

fn waveform_schemes(schemes: &[SchemeEntry]) -> Vec<SchemeEntry> {
    schemes
        .iter()
        .filter(|s| s.name != Scheme::Ideal)
        .cloned()
        .collect()
}

#[derive(Serialize)]
struct DistributionSummary {
    scheme: String,
    symbols: usize,
    median: f64,
    p99_9: f64,
    max: f64,
}

fn write_distribution(
    cfg: &ExperimentConfig,
    schemes: &[SchemeEntry],
    out: &OutputDir,
    name: &str,
    measure: fn(
        &chirp_oac::waveform::WaveformConfig,
        Scheme,
        usize,
        u64,
    ) -> chirp_oac::Result<MetricDistribution>,
) -> CliResult<()> {
    let mut table = out.csv(
        &format!("{name}.csv"),
        &["scheme", "percentile", "value_db"],
    )?;
    let mut summary = Vec::new();
    for s in waveform_schemes(schemes) {
        let dist = measure(&cfg.waveform, s.name, cfg.metrics.symbols, cfg.seed)?;
        for p in PERCENTILES {
            table.row(&[cell(s.name), cell(p), cell(dist.percentile(p))])?;
        }
        summary.push(DistributionSummary {
            scheme: s.name.to_string(),
            symbols: dist.len(),
            median: dist.median(),
            p99_9: dist.percentile(99.9),
            max: dist.percentile(100.0),
        });
    }
    table.finish()?;
    out.json(&format!("{name}_summary.json"), &summary)
}

pub fn pmepr(cfg: &ExperimentConfig, schemes: &[SchemeEntry], out: &OutputDir) -> CliResult<()> {
    write_distribution(cfg, schemes, out, "pmepr", pmepr_distribution)
}

pub fn cm(cfg: &ExperimentConfig, schemes: &[SchemeEntry], out: &OutputDir) -> CliResult<()> {
    write_distribution(cfg, schemes, out, "cm", cm_distribution)
}

fn stream(cfg: &ExperimentConfig, scheme: Scheme) -> CliResult<ComplexSignal> {
    Ok(ensemble_stream(
        &cfg.waveform,
        scheme,
        cfg.metrics.aclr_symbols,
        cfg.seed,
    )?)
}

#[derive(Serialize)]
struct AclrSummary {
    scheme: String,
    floor_db: f64,
    floor_obo_db: f64,
    target_db: f64,
    obo_at_target_db: Option<f64>,
}

pub fn aclr(cfg: &ExperimentConfig, schemes: &[SchemeEntry], out: &OutputDir) -> CliResult<()> {
    let band = cfg.waveform.occupied_band();
    let pa = cfg.rapp(0.0);
    let grid = obo_grid(cfg.metrics.obo_max_db, cfg.metrics.obo_step_db);
    let mut table = out.csv("aclr.csv", &["scheme", "obo_db", "aclr_db"])?;
    let mut psd = out.csv("psd.csv", &["scheme", "obo_db", "frequency_hz", "psd_db"])?;
    let mut summary = Vec::new();
    for s in waveform_schemes(schemes) {
        let x = stream(cfg, s.name)?;
        let sweep = aclr_sweep(&x, band, &pa, &grid)?;
        for (obo, a) in &sweep {
            table.row(&[cell(s.name), cell(obo), cell(a)])?;
        }
        let (floor_obo_db, floor_db) =
            sweep
                .iter()
                .copied()
                .fold((f64::NAN, f64::INFINITY), |best, p| {
                    if p.1 < best.1 {
                        p
                    } else {
                        best
                    }
                });
        for obo in PSD_OBOS_DB {
            for (f, p) in psd_db(&apply_pa(&pa.with_obo(obo), &x))? {
                psd.row(&[cell(s.name), cell(obo), cell(f), cell(p)])?;
            }
        }
        let target = cfg.metrics.aclr_target_db;
        let obo_at_target_db = match obo_for_aclr(&x, band, &pa, target) {
            Ok(o) => Some(o),
            Err(chirp_oac::Error::Infeasible(_)) => None,
            Err(e) => return Err(e.into()),
        };
        summary.push(AclrSummary {
            scheme: s.name.to_string(),
            floor_db,
            floor_obo_db,
            target_db: target,
            obo_at_target_db,
        });
    }
    table.finish()?;
    psd.finish()?;
    out.json("aclr_summary.json", &summary)
}

/// Back-off floor solved from the ACLR target, or the reason it cannot be met.
fn solve_obo_min(cfg: &ExperimentConfig, scheme: Scheme) -> CliResult<Result<f64, String>> {
    let x = stream(cfg, scheme)?;
    match obo_for_aclr(
        &x,
        cfg.waveform.occupied_band(),
        &cfg.rapp(0.0),
        cfg.metrics.aclr_target_db,
    ) {
        Ok(o) => Ok(Ok(o)),
        Err(chirp_oac::Error::Infeasible(m)) => Ok(Err(m)),
        Err(e) => Err(e.into()),
    }
}

/// Back-off floor a scheme uses for power control: the configured value, or
/// the solved one.
fn obo_min_for(cfg: &ExperimentConfig, entry: &SchemeEntry) -> CliResult<f64> {
    if entry.name == Scheme::Ideal {
        return Ok(cfg.power_control.obo_ref);
    }
    if let Some(o) = entry.obo_min_db {
        return Ok(o);
    }
    solve_obo_min(cfg, entry.name)?
        .map_err(|m| CliError::Infeasible(format!("{}: {m}", entry.name)))
}

fn radius(cfg: &ExperimentConfig, obo_min: f64) -> CliResult<f64> {
    Ok(coverage_radius(&cfg.power_params(obo_min, 1.0))?)
}

#[derive(Serialize)]
struct CoverageRow {
    scheme: String,
    aclr_target_db: f64,
    solved_obo_min_db: Option<f64>,
    solved_r_p_m: Option<f64>,
    configured_obo_min_db: Option<f64>,
    configured_r_p_m: Option<f64>,
    infeasible: Option<String>,
}

pub fn coverage(cfg: &ExperimentConfig, schemes: &[SchemeEntry], out: &OutputDir) -> CliResult<()> {
    let mut rows = Vec::new();
    for s in waveform_schemes(schemes) {
        let solved = solve_obo_min(cfg, s.name)?;
        let (solved_obo, infeasible) = match solved {
            Ok(o) => (Some(o), None),
            Err(m) => (None, Some(m)),
        };
        rows.push(CoverageRow {
            scheme: s.name.to_string(),
            aclr_target_db: cfg.metrics.aclr_target_db,
            solved_obo_min_db: solved_obo,
            solved_r_p_m: solved_obo.map(|o| radius(cfg, o)).transpose()?,
            configured_obo_min_db: s.obo_min_db,
            configured_r_p_m: s.obo_min_db.map(|o| radius(cfg, o)).transpose()?,
            infeasible,
        });
    }
    let opt = |v: Option<f64>| v.map_or(String::new(), cell);
    let mut table = out.csv(
        "coverage.csv",
        &[
            "scheme",
            "aclr_target_db",
            "obo_min_db",
            "r_p_m",
            "configured_obo_min_db",
            "configured_r_p_m",
            "status",
        ],
    )?;
    for r in &rows {
        table.row(&[
            r.scheme.clone(),
            cell(r.aclr_target_db),
            opt(r.solved_obo_min_db),
            opt(r.solved_r_p_m),
            opt(r.configured_obo_min_db),
            opt(r.configured_r_p_m),
            if r.infeasible.is_some() {
                "infeasible"
            } else {
                "ok"
            }
            .to_string(),
        ])?;
    }
    table.finish()?;
    out.json("coverage.json", &rows)?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| r.infeasible.is_some())
        .map(|r| r.scheme.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!(
            "ACLR target {} dB unreachable for {}",
            cfg.metrics.aclr_target_db,
            failed.join(", ")
        )))
    }
}

pub fn snr_distance(
    cfg: &ExperimentConfig,
    schemes: &[SchemeEntry],
    out: &OutputDir,
) -> CliResult<()> {
    let d = &cfg.deployment;
    let step = cfg.metrics.distance_step_m;
    let n = ((d.r_max - d.r_min) / step).round() as usize;
    let distances: Vec<f64> = (0..=n).map(|k| d.r_min + k as f64 * step).collect();
    let mut table = out.csv(
        "snr_distance.csv",
        &[
            "scheme",
            "obo_min_db",
            "target_snr_db",
            "distance_m",
            "snr_db",
        ],
    )?;
    for s in waveform_schemes(schemes) {
        let obo_min = obo_min_for(cfg, &s)?;
        for target in &cfg.training.snr_db {
            let pc = cfg.power_params(obo_min, cfg.noise_for_snr(*target));
            for (dist, snr) in snr_vs_distance(&pc, &distances)? {
                table.row(&[
                    cell(s.name),
                    cell(obo_min),
                    cell(target),
                    cell(dist),
                    cell(snr),
                ])?;
            }
        }
    }
    table.finish()
}

pub fn waveform_dump(cfg: &ExperimentConfig, out: &OutputDir) -> CliResult<()> {
    let f = build_fdss(&cfg.waveform)?;
    let mut table = out.csv("fdss.csv", &["subcarrier", "re", "im", "power"])?;
    for (j, c) in cfg.waveform.subcarriers().zip(f.coeffs()) {
        table.row(&[cell(j), cell(c.re), cell(c.im), cell(c.norm_sqr())])?;
    }
    table.finish()?;

    let modem = Modem::oversampled(&cfg.waveform, MEASUREMENT_OVERSAMPLE)?;
    let mut impulse = BinVector::zeros(cfg.waveform.bins);
    impulse.values_mut()[0] = Complex64::new(1.0, 0.0);
    let sym = modem.spread(&f, &impulse)?;
    let cp = cfg.waveform.cp_len * MEASUREMENT_OVERSAMPLE;
    let body = sym.slice(cp, sym.len() - cp)?;
    let ts = body.sample_period();
    let x = body.samples();
    let mut table = out.csv(
        "chirp.csv",
        &["sample", "time_s", "re", "im", "inst_freq_hz"],
    )?;
    for (n, z) in x.iter().enumerate() {
        let next = x[(n + 1) % x.len()];
        let freq = (next * z.conj()).arg() / (std::f64::consts::TAU * ts);
        table.row(&[
            cell(n),
            cell(n as f64 * ts),
            cell(z.re),
            cell(z.im),
            cell(freq),
        ])?;
    }
    table.finish()
}

pub fn bound(cfg: &ExperimentConfig, out: &OutputDir) -> CliResult<()> {
    let b = &cfg.bound;
    let mut table = out.csv(
        "bound.csv",
        &["xi_db", "devices", "rounds", "noise_penalty", "bound"],
    )?;
    for xi_db in &b.xi_db {
        for rounds in &b.rounds {
            let p = BoundParams {
                l_vec: vec![b.l_per_coordinate; b.q],
                sigma_vec: vec![b.sigma_per_coordinate; b.q],
                f_star: b.f_star,
                gamma: b.gamma,
                devices: cfg.deployment.devices,
                xi: 10f64.powf(xi_db / 10.0),
                n_rounds: *rounds,
                initial_loss: b.initial_loss,
            };
            table.row(&[
                cell(xi_db),
                cell(cfg.deployment.devices),
                cell(rounds),
                cell(noise_penalty(&p)?),
                cell(convergence_bound(&p)?),
            ])?;
        }
    }
    table.finish()
}

/// First `per_class` samples of every label, in file order.
fn per_class(full: Dataset, per_class: usize) -> Dataset {
    let mut counts = [0usize; CLASSES];
    let samples = full
        .samples
        .into_iter()
        .filter(|s| {
            counts[s.label] += 1;
            counts[s.label] <= per_class
        })
        .collect();
    Dataset { samples }
}

fn load_data(cfg: &ExperimentConfig, seed: u64) -> CliResult<(Dataset, Dataset)> {
    let synthetic = |train: usize, test: usize| {
        (
            synthetic_digits(train, seed),
            synthetic_digits(test, seed.wrapping_add(TEST_SEED_OFFSET)),
        )
    };
    match &cfg.training.dataset {
        DatasetConfig::Synthetic {
            train_per_class,
            test_per_class,
        } => Ok(synthetic(*train_per_class, *test_per_class)),
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            limit,
            fallback_synthetic,
            train_per_class,
            test_per_class,
        } => {
            let files = [train_images, train_labels, test_images, test_labels];
            if let Some(missing) = files.iter().find(|p| !p.exists()) {
                if *fallback_synthetic {
                    return Ok(synthetic(*train_per_class, *test_per_class));
                }
                return Err(CliError::Config(format!(
                    "dataset file {} not found and synthetic fallback is disabled",
                    missing.display()
                )));
            }
            let train = load_idx_dataset(train_images, train_labels, *limit)?;
            let test = load_idx_dataset(test_images, test_labels, *limit)?;
            Ok((
                per_class(train, *train_per_class),
                per_class(test, *test_per_class),
            ))
        }
    }
}

#[derive(Serialize)]
struct RunSummary {
    phy: String,
    snr_db: f64,
    seed: u64,
    obo_min_db: Option<f64>,
    r_p_m: Option<f64>,
    initial_accuracy: f64,
    final_accuracy: f64,
    final_train_loss: f64,
    near_mean_loss: Option<f64>,
    far_mean_loss: Option<f64>,
}

#[derive(Serialize)]
struct GroupSummary {
    phy: String,
    snr_db: f64,
    runs: usize,
    mean_final_accuracy: f64,
    mean_near_loss: Option<f64>,
    mean_far_loss: Option<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    rounds: usize,
    devices: usize,
    mode: chirp_oac::learn::DataMode,
    params: usize,
    runs: Vec<RunSummary>,
    groups: Vec<GroupSummary>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn train(cfg: &ExperimentConfig, schemes: &[SchemeEntry], out: &OutputDir) -> CliResult<()> {
    let t = &cfg.training;
    let d = &cfg.deployment;
    let model = Mlp::new(IMAGE_SIDE * IMAGE_SIDE, t.hidden, CLASSES);
    let q = model.num_params();
    let floors = schemes
        .iter()
        .map(|s| Ok((s.name, obo_min_for(cfg, s)?)))
        .collect::<CliResult<Vec<_>>>()?;

    let mut history = out.csv(
        "history.csv",
        &[
            "round",
            "train_loss",
            "test_accuracy",
            "phy",
            "seed",
            "snr_db",
        ],
    )?;
    let mut by_distance = out.csv(
        "loss_by_distance.csv",
        &[
            "phy",
            "snr_db",
            "seed",
            "device",
            "distance_m",
            "near",
            "local_loss",
        ],
    )?;
    let mut runs = Vec::new();
    for repeat in 0..t.repeats {
        let seed = cfg.seed.wrapping_add(repeat as u64);
        let (train, test) = load_data(cfg, seed)?;
        let deployment = Deployment::sample(d.devices, d.r_min, d.r_max, d.placement, seed)?;
        let locals = partition_dataset(&train, &deployment, t.mode, seed)?;
        for (scheme, obo_min) in &floors {
            for snr in &t.snr_db {
                let phy = Phy::new(
                    *scheme,
                    cfg.phy(*obo_min, *snr),
                    q,
                    &deployment.ed_distances,
                )?;
                let fed = Federation {
                    model: &model,
                    locals: locals.clone(),
                    test: test.clone(),
                    phy,
                    batch_size: t.batch_size,
                    seed,
                };
                let mut state = fed.init_state(t.learning_rate);
                let initial_accuracy = evaluate(&model, &state.w, &fed.test);
                fed.run(&mut state, t.rounds)?;
                let phy_name = scheme.to_string();
                for r in &state.history {
                    history.row(&[
                        cell(r.round),
                        cell(r.train_loss),
                        cell(r.test_accuracy),
                        phy_name.clone(),
                        cell(seed),
                        cell(snr),
                    ])?;
                }
                let (mut near, mut far) = (Vec::new(), Vec::new());
                for (k, (dist, loss)) in fed.loss_by_distance(&state).into_iter().enumerate() {
                    let inner = deployment.is_inner(k);
                    if inner {
                        near.push(loss);
                    } else {
                        far.push(loss);
                    }
                    by_distance.row(&[
                        phy_name.clone(),
                        cell(snr),
                        cell(seed),
                        cell(k),
                        cell(dist),
                        cell(inner),
                        cell(loss),
                    ])?;
                }
                let last = state.history.last();
                let waveform = *scheme != Scheme::Ideal;
                runs.push(RunSummary {
                    phy: phy_name,
                    snr_db: *snr,
                    seed,
                    obo_min_db: waveform.then_some(*obo_min),
                    r_p_m: waveform.then(|| radius(cfg, *obo_min)).transpose()?,
                    initial_accuracy,
                    final_accuracy: last.map_or(initial_accuracy, |r| r.test_accuracy),
                    final_train_loss: last.map_or(f64::NAN, |r| r.train_loss),
                    near_mean_loss: mean(&near),
                    far_mean_loss: mean(&far),
                });
            }
        }
    }
    history.finish()?;
    by_distance.finish()?;

    let mut groups: BTreeMap<(usize, usize), Vec<&RunSummary>> = BTreeMap::new();
    for r in &runs {
        let si = floors
            .iter()
            .position(|(s, _)| s.to_string() == r.phy)
            .unwrap_or(0);
        let ni = t.snr_db.iter().position(|s| *s == r.snr_db).unwrap_or(0);
        groups.entry((si, ni)).or_default().push(r);
    }
    let groups = groups
        .into_values()
        .map(|g| {
            let acc: Vec<f64> = g.iter().map(|r| r.final_accuracy).collect();
            let near: Vec<f64> = g.iter().filter_map(|r| r.near_mean_loss).collect();
            let far: Vec<f64> = g.iter().filter_map(|r| r.far_mean_loss).collect();
            GroupSummary {
                phy: g[0].phy.clone(),
                snr_db: g[0].snr_db,
                runs: g.len(),
                mean_final_accuracy: mean(&acc).unwrap_or(f64::NAN),
                mean_near_loss: mean(&near),
                mean_far_loss: mean(&far),
            }
        })
        .collect();
    out.json(
        "train_summary.json",
        &TrainSummary {
            rounds: t.rounds,
            devices: d.devices,
            mode: t.mode,
            params: q,
            runs,
            groups,
        },
    )
}

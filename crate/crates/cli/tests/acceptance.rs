//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p chirp-oac-cli --test acceptance -- --nocapture`
//! to see the report lines.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::Command;

use chirp_oac::channel::{draw_epa, epa_rms_delay_spread, fits_prefix, propagate, SyncError};
use chirp_oac::deployment::{coverage_radius, PowerControlParams};
use chirp_oac::learn::{convergence_bound, noise_penalty, BoundParams};
use chirp_oac::oac::{detect_mv, encode_csc, guard_for_votes, Scheme, VotePlan, VoteVector};
use chirp_oac::rf::{
    aclr_sweep, ensemble_stream, obo_for_aclr, obo_grid, pmepr_distribution, MetricDistribution,
    RappPa,
};
use chirp_oac::rng::{keyed_rng, DrawKind};
use chirp_oac::waveform::{build_fdss, BinVector, Modem, WaveformConfig};
use chirp_oac::ComplexSignal;
use chirp_oac_cli::config::{DatasetConfig, SchemeEntry};
use chirp_oac_cli::ExperimentConfig;
use num_complex::Complex64;
use rand::Rng;
use serde_json::Value;

fn report(criterion: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion:>2} [{verdict}] {title}: {detail}");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn random_bins(rng: &mut impl Rng, len: usize) -> BinVector {
    BinVector::new(
        (0..len)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect(),
    )
}

/// Orthonormal forward DFT as a dense matrix.
fn dft_matrix(m: usize) -> Vec<Vec<Complex64>> {
    let norm = 1.0 / (m as f64).sqrt();
    (0..m)
        .map(|k| {
            (0..m)
                .map(|n| Complex64::from_polar(norm, -TAU * (k * n) as f64 / m as f64))
                .collect()
        })
        .collect()
}

fn mat_vec(a: &[Vec<Complex64>], x: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

fn adjoint(a: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j].conj()).collect())
        .collect()
}

#[test]
fn criterion_01_spread_identity_and_chirp_slope() {
    let cfg = WaveformConfig::default();
    let m = cfg.bins;
    let modem = Modem::new(&cfg).unwrap();
    let f = build_fdss(&cfg).unwrap();

    // |f_j|² sits on DFT bin j mod M.
    let mut gain = vec![0.0; m];
    for (j, c) in cfg.subcarriers().zip(f.coeffs()) {
        gain[j.rem_euclid(m as i64) as usize] = c.norm_sqr();
    }
    let fm = dft_matrix(m);
    let fm_h = adjoint(&fm);
    let mut rng = keyed_rng(1, 0, 0, DrawKind::Ensemble);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = random_bins(&mut rng, m);
        let got = modem.despread(&f, &modem.spread(&f, &s).unwrap()).unwrap();
        let shaped: Vec<Complex64> = mat_vec(&fm, s.values())
            .iter()
            .zip(&gain)
            .map(|(v, g)| v * g)
            .collect();
        let want = mat_vec(&fm_h, &shaped);
        for (a, b) in got.values().iter().zip(&want) {
            worst = worst.max((a - b).norm());
        }
    }

    // Instantaneous frequency of one chirp, fitted over the interior of the
    // symbol body where it sweeps linearly.
    let os = 16;
    let fine = Modem::oversampled(&cfg, os).unwrap();
    let mut impulse = BinVector::zeros(m);
    impulse.values_mut()[0] = Complex64::new(1.0, 0.0);
    let sym = fine.spread(&f, &impulse).unwrap();
    let cp = cfg.cp_len * os;
    let body = sym.slice(cp, sym.len() - cp).unwrap();
    let x = body.samples();
    let dt = body.sample_period();
    let (lo, hi) = (x.len() / 10, x.len() * 9 / 10);
    let pts: Vec<(f64, f64)> = (lo..hi)
        .map(|n| {
            let fr = (x[n + 1] * x[n].conj()).arg() / (TAU * dt);
            (n as f64 * dt, fr)
        })
        .collect();
    let nf = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let mf = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mf)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = cov / var;
    let ts = cfg.symbol_duration();
    let expected = cfg.sweep * cfg.subcarrier_spacing() / ts;
    let rel = (slope / expected - 1.0).abs();

    report(
        1,
        "despread of spread and chirp slope",
        worst < 1e-9 && rel < 0.05,
        &format!(
            "max |despread(spread(s)) - F^H diag(|f|^2) F s| = {worst:.2e} over 100 vectors (< 1e-9); \
             slope {slope:.4e} Hz/s vs D*df/Ts {expected:.4e} ({:.2}% off, < 5%)",
            rel * 100.0
        ),
    );
}

/// `true` when `hi` is never below `lo` in the usual stochastic order:
/// `F_hi(x) <= F_lo(x)` at every sample point of either distribution.
fn dominates(hi: &MetricDistribution, lo: &MetricDistribution) -> bool {
    hi.values()
        .iter()
        .chain(lo.values())
        .all(|x| hi.cdf(*x) <= lo.cdf(*x))
}

#[test]
fn criterion_02_pmepr_percentiles() {
    let cfg = WaveformConfig::default();
    let symbols = 10_000;
    let obda = pmepr_distribution(&cfg, Scheme::Obda, symbols, 1).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (votes, target) in [(1, 2.0), (2, 3.0), (4, 6.0)] {
        let d = pmepr_distribution(&cfg, Scheme::CscMv { votes }, symbols, 1).unwrap();
        let p = d.percentile(99.9);
        let ok = (p - target).abs() <= 1.0;
        let dom = dominates(&obda, &d);
        pass &= ok && dom;
        parts.push(format!(
            "M_v={votes}: {p:.2} dB (target {target}+-1 {}), obda dominates {dom}",
            if ok { "ok" } else { "MISS" }
        ));
    }
    parts.push(format!("obda 99.9th {:.2} dB", obda.percentile(99.9)));
    report(2, "PMEPR 99.9th percentiles", pass, &parts.join("; "));
}

#[test]
fn criterion_03_aclr_floors_and_backoff() {
    let cfg = WaveformConfig::default();
    let band = cfg.occupied_band();
    let pa = RappPa::default();
    let grid = obo_grid(30.0, 0.5);
    let mut pass = true;
    let mut parts = Vec::new();
    let cases = [
        (Scheme::Obda, Some(-23.0), 10.5),
        (Scheme::CscMv { votes: 2 }, Some(-28.2), 3.3),
        (Scheme::CscMv { votes: 4 }, None, 4.4),
    ];
    for (scheme, floor_target, obo_target) in cases {
        let x = ensemble_stream(&cfg, scheme, 1000, 1).unwrap();
        let floor = aclr_sweep(&x, band, &pa, &grid)
            .unwrap()
            .iter()
            .map(|p| p.1)
            .fold(f64::INFINITY, f64::min);
        if let Some(t) = floor_target {
            let ok = (floor - t).abs() <= 1.5;
            pass &= ok;
            parts.push(format!(
                "{scheme} floor {floor:.2} dB (target {t}+-1.5 {})",
                if ok { "ok" } else { "MISS" }
            ));
        } else {
            parts.push(format!("{scheme} floor {floor:.2} dB"));
        }
        match obo_for_aclr(&x, band, &pa, -22.0) {
            Ok(o) => {
                let ok = (o - obo_target).abs() <= 1.5;
                pass &= ok;
                parts.push(format!(
                    "{scheme} OBO_min {o:.2} dB (target {obo_target}+-1.5 {})",
                    if ok { "ok" } else { "MISS" }
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{scheme} OBO_min unsolved: {e}"));
            }
        }
    }
    report(
        3,
        "ACLR floors and OBO_min at -22 dB",
        pass,
        &parts.join("; "),
    );
}

#[test]
fn criterion_04_coverage_radius() {
    let pc = PowerControlParams {
        obo_ref: 30.0,
        obo_min: 10.5,
        beta: 4.0,
        r_ref: 10.0,
        ..PowerControlParams::default()
    };
    let r = coverage_radius(&pc).unwrap();
    let oracle = 10.0 * 10f64.powf(19.5 / 40.0);
    report(
        4,
        "coverage radius",
        (r - 30.73).abs() <= 0.1 && (r - oracle).abs() < 1e-12,
        &format!("r_P = {r:.4} m (30.73 +- 0.1)"),
    );
}

#[test]
fn criterion_05_epa_delay_spread() {
    let tau = epa_rms_delay_spread() * 1e9;
    report(
        5,
        "EPA RMS delay spread",
        (tau - 43.1).abs() <= 1.0,
        &format!("{tau:.2} ns (43.1 +- 1)"),
    );
}

fn receive(
    modem: &Modem,
    f: &chirp_oac::waveform::FdssVector,
    blocks: &[BinVector],
    links: &[(chirp_oac::channel::ChannelRealization, SyncError)],
    per_device: &[Vec<BinVector>],
) -> Vec<BinVector> {
    (0..blocks.len())
        .map(|b| {
            let len = modem.symbol_len();
            let mut acc = vec![Complex64::new(0.0, 0.0); len];
            let mut period = 0.0;
            for ((h, sync), dev) in links.iter().zip(per_device) {
                let tx = modem.spread(f, &dev[b]).unwrap();
                let rx = propagate(h, *sync, &tx);
                period = rx.sample_period();
                for (o, y) in acc.iter_mut().zip(rx.samples()) {
                    *o += y;
                }
            }
            modem
                .despread(f, &ComplexSignal::new(acc, period).unwrap())
                .unwrap()
        })
        .collect()
}

#[test]
fn criterion_06_detector_oracle() {
    let cfg = WaveformConfig::default();
    let modem = Modem::new(&cfg).unwrap();
    let f = build_fdss(&cfg).unwrap();
    let votes_per_block = 2;
    let guard = guard_for_votes(cfg.bins, votes_per_block).unwrap();

    // Single device, noiseless: detection returns the transmitted votes.
    let plan = VotePlan::new(3 * votes_per_block, cfg.bins, guard).unwrap();
    let mut rng = keyed_rng(6, 0, 0, DrawKind::Symbols);
    let mut exact = 0;
    let trials = 1000;
    for _ in 0..trials {
        let signs: Vec<i8> = (0..plan.q())
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        let votes = VoteVector::new(signs).unwrap();
        let h = draw_epa(cfg.sample_rate, &mut rng);
        let sync = SyncError::draw(4, &mut rng);
        assert!(fits_prefix(&cfg, &h, sync));
        let tx = encode_csc(&plan, &votes, &mut rng).unwrap();
        let rx = receive(&modem, &f, &tx, &[(h, sync)], &[tx.clone()]);
        if detect_mv(&plan, &rx).unwrap().mv == votes {
            exact += 1;
        }
    }

    // K <= 4 devices, every vote pattern: the sign of the mean margin over
    // random phases, channels and offsets is the majority. Tied patterns
    // must have a mean margin indistinguishable from zero.
    let one = VotePlan::new(1, cfg.bins, guard).unwrap();
    let draws = 1000;
    let mut mismatches = Vec::new();
    let mut patterns = 0;
    for k in 1..=4usize {
        for pattern in 0..(1u32 << k) {
            patterns += 1;
            let signs: Vec<i8> = (0..k)
                .map(|d| if pattern >> d & 1 == 1 { 1 } else { -1 })
                .collect();
            let sum: i32 = signs.iter().map(|s| *s as i32).sum();
            let votes: Vec<VoteVector> = signs
                .iter()
                .map(|s| VoteVector::new(vec![*s]).unwrap())
                .collect();
            let mut rng = keyed_rng(6, pattern as u64, k as u64, DrawKind::Channel);
            let margins: Vec<f64> = (0..draws)
                .map(|_| {
                    let links: Vec<_> = (0..k)
                        .map(|_| {
                            (
                                draw_epa(cfg.sample_rate, &mut rng),
                                SyncError::draw(4, &mut rng),
                            )
                        })
                        .collect();
                    let tx: Vec<Vec<BinVector>> = votes
                        .iter()
                        .map(|v| encode_csc(&one, v, &mut rng).unwrap())
                        .collect();
                    let rx = receive(&modem, &f, &tx[0], &links, &tx);
                    detect_mv(&one, &rx).unwrap().margins[0]
                })
                .collect();
            let n = draws as f64;
            let mean = margins.iter().sum::<f64>() / n;
            let sd = (margins.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let se = sd / n.sqrt();
            let ok = match sum.signum() {
                0 => mean.abs() <= 4.0 * se,
                s => mean.signum() as i32 == s,
            };
            if !ok {
                mismatches.push(format!("K={k} pattern {signs:?} mean {mean:.3} se {se:.3}"));
            }
        }
    }

    report(
        6,
        "detector oracle",
        exact == trials && mismatches.is_empty(),
        &format!(
            "single-device exact {exact}/{trials} (M_v=2, EPA, offset 0..=4); \
             expected-margin sign matches majority on {}/{patterns} patterns{}",
            patterns - mismatches.len(),
            if mismatches.is_empty() {
                String::new()
            } else {
                format!(" ({})", mismatches.join("; "))
            }
        ),
    );
}

fn run_train(cfg: &ExperimentConfig, dir: &Path) -> Value {
    let path = dir.join("experiment.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let out = dir.join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_chirp-oac"))
        .arg("train")
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&fs::read(out.join("train_summary.json")).unwrap()).unwrap()
}

fn group<'a>(summary: &'a Value, phy: &str) -> &'a Value {
    summary["groups"]
        .as_array()
        .unwrap()
        .iter()
        .find(|g| g["phy"] == phy)
        .unwrap()
}

fn profile(name: &str) -> ExperimentConfig {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    ExperimentConfig::load(&root.join(name)).unwrap()
}

#[test]
fn criterion_07_homogeneous_learning() {
    let mut cfg = profile("default.toml");
    cfg.deployment.devices = 20;
    cfg.training.rounds = 200;
    cfg.training.repeats = 5;
    cfg.training.snr_db = vec![20.0];
    cfg.training.dataset = DatasetConfig::Synthetic {
        train_per_class: 200,
        test_per_class: 100,
    };
    cfg.schemes = vec![
        SchemeEntry {
            name: Scheme::Ideal,
            obo_min_db: None,
        },
        SchemeEntry {
            name: Scheme::CscMv { votes: 2 },
            obo_min_db: Some(3.3),
        },
    ];
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_train(&cfg, tmp.path());
    let ideal = group(&summary, "ideal")["mean_final_accuracy"]
        .as_f64()
        .unwrap();
    let csc = group(&summary, "csc_mv:2")["mean_final_accuracy"]
        .as_f64()
        .unwrap();
    report(
        7,
        "homogeneous learning at 20 dB",
        csc >= ideal - 0.03,
        &format!(
            "K=20, 200 rounds, 5 seeds: ideal {ideal:.4}, csc_mv:2 {csc:.4}, gap {:.2} points (<= 3)",
            (ideal - csc) * 100.0
        ),
    );
}

#[test]
fn criterion_08_heterogeneous_learning() {
    let mut cfg = profile("heterogeneous.toml");
    cfg.training.repeats = 5;
    cfg.schemes = vec![
        SchemeEntry {
            name: Scheme::CscMv { votes: 2 },
            obo_min_db: Some(3.3),
        },
        SchemeEntry {
            name: Scheme::Obda,
            obo_min_db: Some(10.5),
        },
    ];
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_train(&cfg, tmp.path());
    let csc = group(&summary, "csc_mv:2");
    let obda = group(&summary, "obda");
    let csc_acc = csc["mean_final_accuracy"].as_f64().unwrap();
    let obda_acc = obda["mean_final_accuracy"].as_f64().unwrap();
    let near = obda["mean_near_loss"].as_f64().unwrap();
    let far = obda["mean_far_loss"].as_f64().unwrap();
    report(
        8,
        "heterogeneous learning",
        csc_acc - obda_acc >= 0.05 && far > near,
        &format!(
            "K={}, {} rounds, 5 seeds: csc_mv:2 {csc_acc:.4}, obda {obda_acc:.4} (lead {:.2} points, >= 5); \
             obda far-device loss {far:.3} vs near {near:.3}",
            cfg.deployment.devices,
            cfg.training.rounds,
            (csc_acc - obda_acc) * 100.0
        ),
    );
}

fn bound_params() -> BoundParams {
    BoundParams {
        l_vec: vec![0.5; 100],
        sigma_vec: vec![0.2; 100],
        f_star: 0.1,
        gamma: 0.04,
        devices: 10,
        xi: 3.0,
        n_rounds: 25,
        initial_loss: 2.3,
    }
}

#[test]
fn criterion_09_bound_calculator() {
    let p = bound_params();
    let mut checks = Vec::new();

    let b1 = convergence_bound(&BoundParams {
        n_rounds: 1,
        ..p.clone()
    })
    .unwrap();
    let b = convergence_bound(&p).unwrap();
    let scaling = (b * 5.0 / b1 - 1.0).abs();
    checks.push((
        "1/sqrt(N) scaling",
        scaling < 1e-14,
        format!("{scaling:.1e}"),
    ));

    let a_inf = noise_penalty(&BoundParams {
        xi: f64::INFINITY,
        ..p.clone()
    })
    .unwrap();
    let a_big = noise_penalty(&BoundParams {
        xi: 1e12,
        ..p.clone()
    })
    .unwrap();
    let limit = 1.0 / p.gamma.sqrt();
    let lim_ok = (a_inf - limit).abs() < 1e-12 && (a_big - limit).abs() < 1e-9;
    checks.push(("a -> 1/sqrt(gamma)", lim_ok, format!("{a_big} vs {limit}")));

    let a = noise_penalty(&p).unwrap();
    let closed = (1.0 + 2.0 / (p.xi * p.devices as f64)) / p.gamma.sqrt();
    let l1: f64 = p.l_vec.iter().sum();
    let s1: f64 = p.sigma_vec.iter().sum();
    let closed_b = (closed * l1.sqrt() * (p.initial_loss - p.f_star + p.gamma / 2.0)
        + 2.0 * (2.0 * p.gamma).sqrt() / 3.0 * s1)
        / (p.n_rounds as f64).sqrt();
    let exact = (a - closed).abs() < 1e-12 && (b - closed_b).abs() < 1e-12 * closed_b;
    checks.push(("closed form", exact, format!("a={a:.6}, bound={b:.6}")));

    let xis = [0.01, 0.1, 1.0, 10.0, 100.0];
    let by_xi: Vec<f64> = xis
        .iter()
        .map(|x| {
            convergence_bound(&BoundParams {
                xi: *x,
                ..p.clone()
            })
            .unwrap()
        })
        .collect();
    let xi_ok = by_xi.windows(2).all(|w| w[1] <= w[0]);
    checks.push(("non-increasing in xi", xi_ok, format!("{by_xi:.4?}")));

    let by_k: Vec<f64> = [1, 2, 5, 20, 100]
        .iter()
        .map(|k| {
            convergence_bound(&BoundParams {
                devices: *k,
                ..p.clone()
            })
            .unwrap()
        })
        .collect();
    let k_ok = by_k.windows(2).all(|w| w[1] <= w[0]);
    checks.push(("non-increasing in K", k_ok, format!("{by_k:.4?}")));

    let by_sigma: Vec<f64> = [0.0, 0.1, 0.2, 1.0]
        .iter()
        .map(|s| {
            convergence_bound(&BoundParams {
                sigma_vec: vec![*s; 100],
                ..p.clone()
            })
            .unwrap()
        })
        .collect();
    let s_ok = by_sigma.windows(2).all(|w| w[1] >= w[0]);
    checks.push((
        "non-decreasing in |sigma|_1",
        s_ok,
        format!("{by_sigma:.4?}"),
    ));

    let pass = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(name, ok, v)| format!("{name} {} ({v})", if *ok { "ok" } else { "MISS" }))
        .collect::<Vec<_>>()
        .join("; ");
    report(9, "convergence bound calculator", pass, &detail);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn criterion_10_cli_determinism() {
    let mut cfg = profile("default.toml");
    cfg.metrics.symbols = 1000;
    cfg.metrics.aclr_symbols = 100;
    cfg.metrics.obo_step_db = 2.5;
    cfg.deployment.devices = 6;
    cfg.training.rounds = 4;
    cfg.training.dataset = DatasetConfig::Synthetic {
        train_per_class: 12,
        test_per_class: 6,
    };
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("experiment.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let commands = [
        "pmepr",
        "cm",
        "aclr",
        "coverage",
        "snr-distance",
        "train",
        "waveform-dump",
        "bound",
    ];
    let mut differing = Vec::new();
    for cmd in commands {
        let out = tmp.path().join(cmd);
        let mut snaps = Vec::new();
        for threads in ["1", "4", "1"] {
            let o = Command::new(env!("CARGO_BIN_EXE_chirp-oac"))
                .args([cmd, "--threads", threads, "--config"])
                .arg(&path)
                .arg("--out")
                .arg(&out)
                .output()
                .unwrap();
            assert!(
                o.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
            snaps.push(snapshot(&out));
        }
        if snaps.windows(2).any(|w| w[0] != w[1]) {
            differing.push(cmd);
        }
    }
    report(
        10,
        "CLI determinism",
        differing.is_empty(),
        &format!(
            "{}/{} commands byte-identical over runs with 1, 4 and 1 threads{}",
            commands.len() - differing.len(),
            commands.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" (differ: {})", differing.join(", "))
            }
        ),
    );
}

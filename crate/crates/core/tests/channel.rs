use chirp_oac::channel::{
    admissible_spread, draw_epa, fits_prefix, propagate, ChannelRealization, SyncError, Tap,
    EPA_DELAYS,
};
use chirp_oac::rng::{keyed_rng, DrawKind};
use chirp_oac::waveform::{build_fdss, BinVector, Modem, WaveformConfig};
use chirp_oac::ComplexSignal;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

const DRAWS: usize = 10_000;

fn realizations() -> Vec<ChannelRealization> {
    let mut rng = keyed_rng(3, 0, 0, DrawKind::Channel);
    (0..DRAWS).map(|_| draw_epa(15.36e6, &mut rng)).collect()
}

#[test]
fn epa_power_is_normalized() {
    let mean = realizations().iter().map(|h| h.power()).sum::<f64>() / DRAWS as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean power {mean}");
}

#[test]
fn epa_taps_are_uncorrelated() {
    let hs = realizations();
    let n = EPA_DELAYS.len();
    for i in 0..n {
        for j in i + 1..n {
            let (mut cross, mut pi, mut pj) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
            for h in &hs {
                let (a, b) = (h.taps()[i].gain, h.taps()[j].gain);
                cross += a * b.conj();
                pi += a.norm_sqr();
                pj += b.norm_sqr();
            }
            let rho = cross.norm() / (pi * pj).sqrt();
            assert!(rho < 0.05, "taps {i},{j}: |rho| = {rho}");
        }
    }
}

#[test]
fn sync_offsets_cover_range_uniformly() {
    let mut rng = keyed_rng(3, 0, 0, DrawKind::Sync);
    let mut counts = [0usize; 5];
    for _ in 0..DRAWS {
        counts[SyncError::draw(4, &mut rng).offset] += 1;
    }
    for c in counts {
        assert!((c as f64 / DRAWS as f64 - 0.2).abs() < 0.02, "{counts:?}");
    }
}

fn signal(v: Vec<(f64, f64)>) -> ComplexSignal {
    ComplexSignal::new(
        v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect(),
        1.0,
    )
    .unwrap()
}

fn taps() -> impl Strategy<Value = ChannelRealization> {
    prop::collection::vec(((-1.0f64..1.0, -1.0f64..1.0), 0usize..8), 1..5).prop_map(|v| {
        ChannelRealization::new(
            v.into_iter()
                .map(|((re, im), delay)| Tap {
                    gain: Complex64::new(re, im),
                    delay,
                })
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagate_is_linear(
        h in taps(),
        offset in 0usize..5,
        x in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 40),
        y in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 40),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let (x, y) = (signal(x), signal(y));
        let sync = SyncError::new(offset);
        let mix = ComplexSignal::new(
            x.samples().iter().zip(y.samples()).map(|(p, q)| p * a + q * b).collect(),
            1.0,
        ).unwrap();
        let lhs = propagate(&h, sync, &mix);
        let px = propagate(&h, sync, &x);
        let py = propagate(&h, sync, &y);
        prop_assert_eq!(lhs.len(), 40);
        for ((l, p), q) in lhs.samples().iter().zip(px.samples()).zip(py.samples()) {
            prop_assert!((l - (p * a + q * b)).norm() < 1e-12);
        }
    }

    /// A delay within the prefix only rotates subcarrier phases, so the
    /// despread energy of a symbol does not change.
    #[test]
    fn admissible_delay_keeps_despread_energy(seed in 0u64..1000, delay in 0usize..15) {
        let cfg = WaveformConfig::default();
        prop_assume!(delay <= admissible_spread(&cfg));
        let modem = Modem::new(&cfg).unwrap();
        let f = build_fdss(&cfg).unwrap();
        let mut rng = keyed_rng(seed, 0, 0, DrawKind::Symbols);
        let s = BinVector::new(
            (0..cfg.bins)
                .map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU))
                .collect(),
        );
        let tx = modem.spread(&f, &s).unwrap();
        let reference = modem.despread(&f, &tx).unwrap().energy();
        let h = ChannelRealization::new(vec![Tap { gain: Complex64::new(1.0, 0.0), delay }]).unwrap();
        prop_assert!(fits_prefix(&cfg, &h, SyncError::new(0)));
        let rx = propagate(&h, SyncError::new(0), &tx);
        let got = modem.despread(&f, &rx).unwrap().energy();
        prop_assert!((got - reference).abs() <= 1e-9 * reference);
    }
}

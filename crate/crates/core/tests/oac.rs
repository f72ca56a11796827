use std::collections::HashSet;

use chirp_oac::oac::{detect_mv, encode_csc, guard_for_votes, VotePlan, VoteVector};
use chirp_oac::rng::{keyed_rng, DrawKind};
use chirp_oac::waveform::BinVector;
use proptest::prelude::*;

fn votes(q: usize) -> impl Strategy<Value = VoteVector> {
    prop::collection::vec(prop::bool::ANY, q).prop_map(|b| {
        VoteVector::new(b.into_iter().map(|x| if x { 1 } else { -1 }).collect()).unwrap()
    })
}

fn plan_and_votes() -> impl Strategy<Value = (VotePlan, VoteVector)> {
    (prop::sample::select(vec![1usize, 2, 4]), 1usize..200).prop_flat_map(|(mv, q)| {
        let plan = VotePlan::new(q, 54, guard_for_votes(54, mv).unwrap()).unwrap();
        (Just(plan), votes(q))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vote_groups_never_overlap((plan, _v) in plan_and_votes()) {
        let mut used = HashSet::new();
        for i in 0..plan.q() {
            let s = plan.slot(i);
            prop_assert!(s.block < plan.blocks());
            for first in [s.plus_bin, s.minus_bin] {
                for bin in plan.group(first) {
                    prop_assert!(bin < plan.bins());
                    prop_assert!(used.insert((s.block, bin)), "bin {} of block {} reused", bin, s.block);
                }
            }
        }
    }

    #[test]
    fn each_device_activates_one_bin_per_vote((plan, v) in plan_and_votes(), seed in any::<u64>()) {
        let blocks = encode_csc(&plan, &v, &mut keyed_rng(seed, 0, 0, DrawKind::Symbols)).unwrap();
        let active: usize = blocks
            .iter()
            .map(|b| b.values().iter().filter(|z| z.norm() > 0.0).count())
            .sum();
        prop_assert_eq!(active, plan.q());
    }

    #[test]
    fn ideal_channel_round_trip((plan, v) in plan_and_votes(), seed in any::<u64>()) {
        let blocks = encode_csc(&plan, &v, &mut keyed_rng(seed, 0, 0, DrawKind::Symbols)).unwrap();
        prop_assert_eq!(detect_mv(&plan, &blocks).unwrap().mv, v);
    }

    #[test]
    fn detector_ignores_common_scaling(
        (plan, v) in plan_and_votes(),
        seed in any::<u64>(),
        re in -5.0f64..5.0,
        im in -5.0f64..5.0,
    ) {
        let c = num_complex::Complex64::new(re, im);
        prop_assume!(c.norm() > 1e-3);
        let mut rng = keyed_rng(seed, 0, 0, DrawKind::Symbols);
        let a = encode_csc(&plan, &v, &mut rng).unwrap();
        let b = encode_csc(&plan, &v.clone(), &mut rng).unwrap();
        // Two devices with different phases so margins are not all equal.
        let sum: Vec<BinVector> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| BinVector::new(x.values().iter().zip(y.values()).map(|(p, q)| p + q * 0.5).collect()))
            .collect();
        let scaled: Vec<BinVector> = sum
            .iter()
            .map(|x| BinVector::new(x.values().iter().map(|z| z * c).collect()))
            .collect();
        let r0 = detect_mv(&plan, &sum).unwrap();
        let r1 = detect_mv(&plan, &scaled).unwrap();
        prop_assert_eq!(&r0.mv, &r1.mv);
        let k = c.norm_sqr();
        for (m0, m1) in r0.margins.iter().zip(&r1.margins) {
            prop_assert!((m1 - m0 * k).abs() <= 1e-9 * (1.0 + m0.abs() * k));
        }
    }
}

//! Property tests for the serialization formats, the check-node combiner
//! and the extrinsic-bracket conversions.

use ldpclab::channel::TabulatedChannel;
use ldpclab::ensemble::TannerGraph;
use ldpclab::exact_gibbs::{bracket_report, GibbsSystem};
use ldpclab::rs_solver::{check_combine, Population};
use proptest::prelude::*;

fn arb_graph() -> impl Strategy<Value = TannerGraph> {
    (2usize..10)
        .prop_flat_map(|n| {
            let checks = proptest::collection::vec(
                proptest::collection::vec(0..n, 1..=n.min(5)),
                0..6,
            );
            let obs = proptest::collection::vec(
                proptest::collection::vec(-5.0f64..5.0, 0..3),
                n..=n,
            );
            (Just(n), checks, obs, any::<u64>())
        })
        .prop_map(|(n, checks, extra_obs, seed)| {
            let mut g = TannerGraph {
                n,
                checks,
                extra_obs,
                seed,
                multi_edge_incidences: 0,
                degenerate_sockets: false,
            };
            // Normalize the derived count the way the samplers would.
            let text = g.serialize();
            g = TannerGraph::deserialize(&text).unwrap();
            g
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_serialization_roundtrips(g in arb_graph()) {
        let text = g.serialize();
        let back = TannerGraph::deserialize(&text).unwrap();
        prop_assert_eq!(&g, &back);
        prop_assert_eq!(text, back.serialize());
    }

    #[test]
    fn population_serialization_roundtrips(
        finite in proptest::collection::vec(-50.0f64..50.0, 1..200),
        atoms in 0usize..20,
    ) {
        let mut samples = finite;
        samples.extend(std::iter::repeat_n(f64::INFINITY, atoms));
        let pop = Population::from_samples(samples);
        let back = Population::deserialize(&pop.serialize()).unwrap();
        prop_assert_eq!(pop, back);
    }

    #[test]
    fn check_combine_magnitude_and_sign(vs in proptest::collection::vec(-4.0f64..4.0, 1..7)) {
        let out = check_combine(&vs);
        // Magnitude bounded by the weakest input.
        let min_abs = vs.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        prop_assert!(out.abs() <= min_abs + 1e-12);
        // Sign is the product of input signs (when no exact zero).
        if vs.iter().all(|&v| v != 0.0) {
            let neg = vs.iter().filter(|&&v| v < 0.0).count() % 2 == 1;
            prop_assert_eq!(out < 0.0, neg, "out = {}", out);
        }
        // Permutation invariance.
        let mut rev = vs.clone();
        rev.reverse();
        prop_assert!((check_combine(&rev) - out).abs() <= 1e-12);
    }

    #[test]
    fn extrinsic_conversions_agree_with_rebuild(
        seed in any::<u64>(),
        eps in 0.05f64..0.45,
    ) {
        use ldpclab::ensemble::{sample_standard, DegreeDistribution};
        use ldpclab::rng::{domain, stream};
        use rand::Rng;
        let mut rng = stream(seed, domain::GRAPH, 0);
        let g = sample_standard(
            8,
            &DegreeDistribution::regular(3),
            &DegreeDistribution::regular(4),
            &mut rng,
        ).unwrap();
        let channel = ldpclab::ChannelModel::bsc(eps).unwrap();
        let mut out_rng = stream(seed, domain::OUTPUT, 1);
        let sys = GibbsSystem::build(&g, &channel, &mut out_rng).unwrap();
        let i = out_rng.random_range(0..8);
        let j = (i + 1 + out_rng.random_range(0..7)) % 8;
        let report = bracket_report(&sys, i, j).unwrap();
        prop_assert!(report.conversion_residual < 1e-12,
            "residual {}", report.conversion_residual);
    }

    #[test]
    fn tabulated_symmetric_pairs_accepted(a in 0.05f64..0.95, mix in 0.05f64..0.95) {
        // Symmetric two-atom densities (BSC-like at magnitude a) mixed with
        // an erasure atom always validate; breaking the weight ratio fails.
        let w_plus = (1.0 - mix) * (1.0 + a) / 2.0;
        let w_minus = (1.0 - mix) * (1.0 - a) / 2.0;
        let ok = TabulatedChannel::new(0.0, vec![-a, 0.0, a], vec![w_minus, mix, w_plus], None);
        prop_assert!(ok.is_ok(), "{:?}", ok.err());
        let bad = TabulatedChannel::new(
            0.0,
            vec![-a, a],
            vec![0.5, 0.5],
            None,
        );
        prop_assert!(bad.is_err());
    }
}

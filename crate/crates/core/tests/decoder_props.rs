mod common;

use common::Instance;
use copytag::copy_model::{copy_logits, copy_posterior, marginal_over_types};
use copytag::decoder::{
    brute_force_decode, dp_decode_expected, dp_reconstruct, greedy_reconstruct, predict_marginal, CostSource, DPConfig,
    SegmentDict,
};
use proptest::prelude::*;

fn gold_for(seed: u64, len: usize, types: usize) -> Vec<usize> {
    (0..len).map(|t| ((seed >> (4 * (t % 16))) as usize + t) % (types + 1)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dp_matches_brute_force_and_pruning(seed in any::<u64>(), c in prop::sample::select(vec![0.0, 0.25, 0.7, 2.0, 10.0]), l_max in 1usize..6) {
        let inst = Instance::random(seed, 7, 3, 5, 3, 1.5);
        let dict = SegmentDict::from_sequences(inst.sequences(), l_max);
        let mm = inst.marginals();
        let gold = gold_for(seed, inst.x.rows(), 3);
        let plain = DPConfig { c, l_max, prune: false };
        let pruned = DPConfig { prune: true, ..plain };
        let neighbors: Vec<&[usize]> = inst.sequences().collect();
        for costs in [CostSource::Gold(&gold), CostSource::Marginals(&mm)] {
            let dp = match costs {
                CostSource::Gold(g) => dp_reconstruct(g, &dict, &plain).unwrap(),
                CostSource::Marginals(m) => dp_decode_expected(m, &dict, &plain).unwrap(),
            };
            let fast = match costs {
                CostSource::Gold(g) => dp_reconstruct(g, &dict, &pruned).unwrap(),
                CostSource::Marginals(m) => dp_decode_expected(m, &dict, &pruned).unwrap(),
            };
            let bf = brute_force_decode(&costs, &dict, &plain).unwrap();
            prop_assert!((dp.objective - bf.objective).abs() <= 1e-9);
            prop_assert_eq!(&fast, &dp);
            prop_assert!(dp.provenance_is_sound(&neighbors));
            prop_assert!(dp.segments.iter().all(|s| s.len <= l_max));
            prop_assert!((dp.recompute_objective(c, &costs) - dp.objective).abs() <= 1e-9);
        }
        let greedy = greedy_reconstruct(&gold, &dict, &plain).unwrap();
        prop_assert!(greedy.provenance_is_sound(&neighbors));
        prop_assert!(greedy.objective >= dp_reconstruct(&gold, &dict, &plain).unwrap().objective - 1e-9);
    }

    #[test]
    fn zero_cost_reduces_to_marginal_argmax(seed in any::<u64>()) {
        let inst = Instance::random(seed, 10, 4, 6, 5, 3.0);
        let mm = inst.marginals();
        let dict = SegmentDict::from_sequences(inst.sequences(), 64);
        prop_assert_eq!(dp_decode_expected(&mm, &dict, &DPConfig::new(0.0)).unwrap().labels, predict_marginal(&mm));
    }

    #[test]
    fn segment_count_falls_and_cost_rises_with_c(seed in any::<u64>()) {
        let inst = Instance::random(seed, 10, 4, 6, 4, 1.0);
        let mm = inst.marginals();
        let dict = SegmentDict::from_sequences(inst.sequences(), 64);
        let mut prev: Option<(usize, f64)> = None;
        for step in 0..=30 {
            let r = dp_decode_expected(&mm, &dict, &DPConfig::new(step as f64 / 10.0)).unwrap();
            if let Some((n, cost)) = prev {
                prop_assert!(r.num_segments() <= n);
                prop_assert!(r.cost_term >= cost - 1e-12);
            }
            prev = Some((r.num_segments(), r.cost_term));
        }
    }

    #[test]
    fn renaming_types_maps_decoded_labels(seed in any::<u64>(), shift in 1usize..5, c in 0.0f64..2.0) {
        let inst = Instance::random(seed, 8, 3, 5, 5, 2.0);
        let perm: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
        let (ns, np) = (inst.set(), inst.mapped(&perm));
        let mm = marginal_over_types(&copy_posterior(&copy_logits(&inst.x, &ns).unwrap()).unwrap(), &ns).unwrap();
        let mp = marginal_over_types(&copy_posterior(&copy_logits(&inst.x, &np).unwrap()).unwrap(), &np).unwrap();
        let cfg = DPConfig::new(c);
        let a = dp_decode_expected(&mm, &SegmentDict::from_sequences(ns.label_sequences(), 64), &cfg).unwrap();
        let b = dp_decode_expected(&mp, &SegmentDict::from_sequences(np.label_sequences(), 64), &cfg).unwrap();
        prop_assert_eq!(b.labels, a.labels.iter().map(|&l| perm[l]).collect::<Vec<_>>());
        prop_assert!((a.objective - b.objective).abs() <= 1e-12);
    }
}

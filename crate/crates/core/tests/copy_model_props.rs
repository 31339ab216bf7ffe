mod common;

use common::Instance;
use copytag::copy_model::{copy_logits, copy_posterior, grad_wrt_input, marginal_over_types, nll};
use proptest::prelude::*;

fn perm_of(types: usize, keys: &[u64]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..types).collect();
    perm.sort_by_key(|&i| keys[i % keys.len()].wrapping_mul(i as u64 + 1));
    perm
}

proptest! {
    #[test]
    fn marginals_are_sums_of_posterior_mass(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let inst = Instance::random(seed, 6, 4, 6, 5, scale);
        let ns = inst.set();
        let p = copy_posterior(&copy_logits(&inst.x, &ns).unwrap()).unwrap();
        let mm = marginal_over_types(&p, &ns).unwrap();
        for t in 0..inst.x.rows() {
            for (col, &z) in mm.types().iter().enumerate() {
                let naive: f64 = ns.flat_labels().iter().enumerate().filter(|&(_, &y)| y == z).map(|(i, _)| p.prob(t, i)).sum();
                prop_assert!((mm.probs().get(t, col) - naive).abs() <= 1e-12);
            }
            let row: f64 = mm.probs().row(t).iter().sum();
            prop_assert!((row - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn nll_is_negative_log_marginal(seed in any::<u64>(), gold_seed in any::<u64>()) {
        let inst = Instance::random(seed, 6, 4, 6, 4, 2.0);
        let ns = inst.set();
        let p = copy_posterior(&copy_logits(&inst.x, &ns).unwrap()).unwrap();
        let mm = marginal_over_types(&p, &ns).unwrap();
        // type 4 never occurs among the neighbors
        let gold: Vec<usize> = (0..inst.x.rows()).map(|t| ((gold_seed >> (3 * t)) % 5) as usize).collect();
        let report = nll(&p, &ns, &gold).unwrap();
        let mut expected = 0.0;
        let mut skipped = 0;
        for (t, &g) in gold.iter().enumerate() {
            match mm.column_of(g) {
                Some(col) => expected -= mm.probs().get(t, col).ln(),
                None => skipped += 1,
            }
        }
        prop_assert!((report.nll - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        prop_assert_eq!(report.skipped, skipped);
        let grad = grad_wrt_input(&p, &ns, &gold).unwrap();
        for (t, &g) in gold.iter().enumerate() {
            if mm.column_of(g).is_none() {
                prop_assert!(grad.row(t).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn renaming_types_permutes_marginals_only(seed in any::<u64>(), keys in proptest::collection::vec(any::<u64>(), 1..6)) {
        let inst = Instance::random(seed, 6, 4, 6, 5, 3.0);
        let perm = perm_of(5, &keys);
        let (ns, np) = (inst.set(), inst.mapped(&perm));
        let p = copy_posterior(&copy_logits(&inst.x, &ns).unwrap()).unwrap();
        let q = copy_posterior(&copy_logits(&inst.x, &np).unwrap()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(p.log_probs().as_slice()), bits(q.log_probs().as_slice()));

        let (mp, mq) = (marginal_over_types(&p, &ns).unwrap(), marginal_over_types(&q, &np).unwrap());
        for (col, &z) in mp.types().iter().enumerate() {
            let other = mq.column_of(perm[z]).unwrap();
            for t in 0..inst.x.rows() {
                prop_assert_eq!(mp.probs().get(t, col).to_bits(), mq.probs().get(t, other).to_bits());
            }
        }

        let gold: Vec<usize> = (0..inst.x.rows()).map(|t| (t * 7 + seed as usize) % 5).collect();
        let mapped: Vec<usize> = gold.iter().map(|&g| perm[g]).collect();
        let (a, b) = (nll(&p, &ns, &gold).unwrap(), nll(&q, &np, &mapped).unwrap());
        prop_assert_eq!(a.nll.to_bits(), b.nll.to_bits());
        prop_assert_eq!(a.skipped, b.skipped);
    }
}

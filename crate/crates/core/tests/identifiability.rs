mod common;

use common::*;
use nplm::identifiability::{
    check_identifiability, grouped_conditional_matrix, rank_diagnostic, singleton_witness, IdentifiabilityReport,
    DEFAULT_PRODUCT_CAP,
};
use nplm::label_space::LabelSpace;
use nplm::model::BalanceMode;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute force: does some choice of one set per PLF in `subset` intersect to
/// exactly `{class}`?
fn brute_isolates(specs: &[nplm::PlfSpec], subset: &[usize], class: usize) -> bool {
    let k = specs[0].k();
    let mut idx = vec![0usize; subset.len()];
    loop {
        let hit: Vec<usize> = (0..k)
            .filter(|&c| subset.iter().zip(&idx).all(|(&i, &t)| specs[i].codomain()[t].contains(c)))
            .collect();
        if hit == [class] {
            return true;
        }
        let mut p = 0;
        loop {
            if p == subset.len() {
                return false;
            }
            idx[p] += 1;
            if idx[p] < specs[subset[p]].codomain().len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

#[test]
fn worked_example_witness() {
    // sets {1,2,3}, {1,3,4}, {1,2,4} over classes 1..=4, shifted to 0-based
    let k = 4;
    let specs = vec![
        spec("g1", &[&[0, 1, 2], &[3]], k),
        spec("g2", &[&[0, 2, 3], &[1]], k),
        spec("g3", &[&[0, 1, 3], &[2]], k),
    ];
    assert_eq!(singleton_witness(&specs, &[0, 1, 2], 0), Some(vec![0, 0, 0]));
    for class in 1..k {
        assert_eq!(singleton_witness(&specs, &[0, 1, 2], class).is_some(), brute_isolates(&specs, &[0, 1, 2], class));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn witness_search_agrees_with_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=5);
        let n = rng.random_range(1..=4);
        let specs = random_specs(n, k, &mut rng);
        let subset: Vec<usize> = (0..n).collect();
        for class in 0..k {
            let found = singleton_witness(&specs, &subset, class);
            prop_assert_eq!(found.is_some(), brute_isolates(&specs, &subset, class));
            if let Some(w) = found {
                let hit: Vec<usize> = (0..k)
                    .filter(|&c| subset.iter().zip(&w).all(|(&i, &t)| specs[i].codomain()[t].contains(c)))
                    .collect();
                prop_assert_eq!(hit, vec![class]);
            }
        }
    }

    #[test]
    fn result_is_stable_under_reordering(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=4);
        let n = rng.random_range(3..=7);
        let specs = random_specs(n, k, &mut rng);
        let space = LabelSpace::new(k).unwrap();
        let base = check_identifiability(&specs, space).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<_> = order.iter().map(|&i| specs[i].clone()).collect();
        let other = check_identifiability(&shuffled, space).unwrap();
        prop_assert_eq!(base.is_satisfied(), other.is_satisfied());
        for (report, set) in [(&base, &specs), (&other, &shuffled)] {
            if let IdentifiabilityReport::Satisfied { partition, .. } = report {
                prop_assert!(partition.verify(set));
            }
        }
    }

    #[test]
    fn grouped_rows_are_distributions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=5);
        let n = rng.random_range(1..=4);
        let specs = random_specs(n, k, &mut rng);
        let params = random_logit_params(n, k, 6.0, BalanceMode::Fixed, &mut rng);
        let mut subset: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.7)).collect();
        if subset.is_empty() {
            subset.push(0);
        }
        let m = grouped_conditional_matrix(&specs, &subset, &params, DEFAULT_PRODUCT_CAP).unwrap();
        prop_assert_eq!(m.nrows(), k);
        for r in 0..k {
            let s: f64 = m.row(r).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "row {} sums to {}", r, s);
            prop_assert!(m.row(r).iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn perfect_accuracy_on_witness_groups_gives_rank_k() {
    for k in 2..=5 {
        let space = LabelSpace::new(k).unwrap();
        let specs = vec![
            nplm::label_space::traditional_lf(space).renamed("x"),
            nplm::label_space::traditional_lf(space).renamed("y"),
            nplm::label_space::traditional_lf(space).renamed("z"),
        ];
        let params = nplm::ModelParams::new(
            ndarray::Array2::from_elem((3, k), 40.0),
            ndarray::Array1::from_elem(3, 0.3),
            nplm::model::uniform_balance(k),
            BalanceMode::Fixed,
        )
        .unwrap();
        let m = grouped_conditional_matrix(&specs, &[0], &params, DEFAULT_PRODUCT_CAP).unwrap();
        let diag = rank_diagnostic(&m);
        assert_eq!(diag.row_rank, k);
        assert!(!diag.rank_deficient);
    }
}

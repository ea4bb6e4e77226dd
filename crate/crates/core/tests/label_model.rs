mod common;

use common::*;
use nplm::model::{
    conditional_prob, conditional_prob_at, log_joint, naive_example_logliks, posterior, precompute_batch, vectorized_example_logliks,
    BalanceMode,
};
use nplm::training::value_and_grad;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, range: f64) -> (Vec<nplm::PlfSpec>, nplm::ModelParams64, nplm::VoteMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=5);
    let n = rng.random_range(1..=5);
    let m = rng.random_range(1..=20);
    let specs = random_specs(n, k, &mut rng);
    let params = random_logit_params(n, k, range, BalanceMode::Fixed, &mut rng);
    let votes = random_votes(&specs, m, &mut rng);
    (specs, params, votes)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn posterior_matches_enumeration(seed in any::<u64>()) {
        let (specs, params, votes) = instance(seed, 4.0);
        let post = posterior(&specs, &params, &votes).unwrap();
        let oracle = oracle_posterior(&specs, &params, &votes);
        for (p, o) in post.probs().iter().zip(oracle.iter()) {
            prop_assert!((p - o).abs() < 1e-9, "{p} vs {o}");
        }
        for row in post.probs().rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn log_joint_matches_enumeration(seed in any::<u64>()) {
        let (specs, params, votes) = instance(seed, 4.0);
        let batch = precompute_batch::<f64>(&specs, &votes).unwrap();
        let lj = log_joint(&batch, &params).unwrap();
        let oracle = oracle_log_joint(&specs, &params, &votes);
        for (x, y) in lj.iter().zip(oracle.iter()) {
            prop_assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0), "{x} vs {y}");
        }
        let vec = vectorized_example_logliks(&batch, &params).unwrap();
        let naive = naive_example_logliks(&specs, &params, &votes).unwrap();
        let brute = oracle_example_logliks(&specs, &params, &votes);
        prop_assert!(max_scaled_diff(vec.as_slice().unwrap(), &brute) < 1e-10);
        prop_assert!(max_scaled_diff(&naive, &brute) < 1e-10);
    }

    #[test]
    fn posterior_invariant_to_plf_order(seed in any::<u64>()) {
        let (specs, params, votes) = instance(seed, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut order: Vec<usize> = (0..specs.len()).collect();
        order.shuffle(&mut rng);
        let specs2: Vec<_> = order.iter().map(|&i| specs[i].clone()).collect();
        let params2 = params.select_plfs(&order);
        let votes2 = votes.select_columns(&order);
        let p1 = posterior(&specs, &params, &votes).unwrap();
        let p2 = posterior(&specs2, &params2, &votes2).unwrap();
        for (a, b) in p1.probs().iter().zip(p2.probs().iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn label_swap_permutes_posterior_columns(seed in any::<u64>()) {
        let (specs, params, votes) = instance(seed, 4.0);
        let k = params.k();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1a55);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let specs2: Vec<_> = specs.iter().map(|s| s.permute_classes(&perm)).collect();
        let params2 = params.permute_classes(&perm);
        let p1 = posterior(&specs, &params, &votes).unwrap();
        let p2 = posterior(&specs2, &params2, &votes).unwrap();
        for a in 0..votes.m() {
            for j in 0..k {
                prop_assert!((p1.probs()[[a, j]] - p2.probs()[[a, perm[j]]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extreme_logits_stay_finite(seed in any::<u64>(), learned in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=5);
        let n = rng.random_range(1..=5);
        let specs = random_specs(n, k, &mut rng);
        let mode = if learned { BalanceMode::Learned } else { BalanceMode::Fixed };
        let mut params = random_logit_params(n, k, 30.0, mode, &mut rng);
        // push a few entries exactly to the boundary
        let a = params.acc_logits().mapv(|x| if x.abs() > 25.0 { 30.0 * x.signum() } else { x });
        let b = params.prop_logits().mapv(|x| if x.abs() > 25.0 { 30.0 * x.signum() } else { x });
        params = nplm::ModelParams::new(a, b, params.class_balance().clone(), mode).unwrap();
        let votes = random_votes(&specs, 20, &mut rng);
        let batch = precompute_batch::<f64>(&specs, &votes).unwrap();
        let ll = vectorized_example_logliks(&batch, &params).unwrap();
        prop_assert!(ll.iter().all(|x| x.is_finite()));
        let post = posterior(&specs, &params, &votes).unwrap();
        prop_assert!(post.probs().iter().all(|x| x.is_finite()));
        for row in post.probs().rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        let (value, grad) = value_and_grad(&batch, &params).unwrap();
        prop_assert!(value.is_finite());
        prop_assert!(grad.acc_logits.iter().chain(grad.prop_logits.iter()).all(|x| x.is_finite()));
    }

    #[test]
    fn conditional_matches_generative_story(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=6);
        let spec = random_specs(1, k, &mut rng).remove(0);
        let alpha: f64 = rng.random_range(0.01..0.99);
        let beta: f64 = rng.random_range(0.01..0.99);
        for j in 0..k {
            let mut total = 0.0;
            for v in spec.codomain().iter().map(Some).chain([None]) {
                let p = conditional_prob(&spec, alpha, beta, v, j).unwrap();
                let at = v.map(|t| spec.index_of(t).unwrap());
                prop_assert_eq!(p, conditional_prob_at(&spec, alpha, beta, at, j).unwrap());
                prop_assert!((p - oracle_conditional(&spec, alpha, beta, at, j)).abs() < 1e-14);
                total += p;
            }
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

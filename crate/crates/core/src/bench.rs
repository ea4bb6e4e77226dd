//! Throughput comparison of the naive and vectorized likelihood paths, plus
//! training-epoch timing.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::label_space::{LabelSpace, PlfSpec, VoteMatrix};
use crate::model::{naive_marginal_loglik, precompute_batch, uniform_balance, vectorized_marginal_loglik, ModelParams};
use crate::synthetic::{random_params, random_plf_spec, sample};
use crate::training::{fit, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// Largest `m` the naive path is timed at; larger runs are extrapolated
    /// linearly.
    pub naive_cap: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Timed repetitions after one warmup run; the median is reported.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { m: 100_000, n: 10, k: 4, seed: 0, naive_cap: 20_000, epochs: 1, batch_size: 256, repeats: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// Examples the naive/vectorized comparison ran on.
    pub compare_m: usize,
    pub naive_seconds: f64,
    pub vectorized_seconds: f64,
    /// Building the indicator tensors for `compare_m` examples.
    pub precompute_seconds: f64,
    /// `naive_seconds / vectorized_seconds`.
    pub speedup: f64,
    /// `naive_seconds / (vectorized_seconds + precompute_seconds)`.
    pub speedup_with_precompute: f64,
    /// Naive time scaled linearly to the full `m`.
    pub naive_seconds_extrapolated: f64,
    pub vectorized_seconds_full: f64,
    /// Wall time of `fit` for `config.epochs` epochs on all `m` examples,
    /// including tensor precomputation.
    pub train_seconds: f64,
    pub train_examples_per_second: f64,
}

/// Median wall time of `repeats` runs after one warmup run.
pub fn median_seconds<R>(repeats: usize, mut f: impl FnMut() -> R) -> f64 {
    std::hint::black_box(f());
    let mut times: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

/// A random PLF set over `k` classes and votes drawn from random parameters.
pub fn random_workload(m: usize, n: usize, k: usize, seed: u64) -> Result<(Vec<PlfSpec>, ModelParams<f64>, VoteMatrix)> {
    let space = LabelSpace::new(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<PlfSpec> = (0..n).map(|i| random_plf_spec(format!("plf{i}"), space, 4, &mut rng)).collect();
    let params = random_params(n, k, (0.6, 0.95), (0.3, 0.9), uniform_balance(k), &mut rng)?;
    let votes = sample(&specs, &params, m, seed)?.votes;
    Ok((specs, params, votes))
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    let (specs, params, votes) = random_workload(config.m, config.n, config.k, config.seed)?;
    let compare_m = config.m.min(config.naive_cap);
    let subset = votes.select_rows(&(0..compare_m).collect::<Vec<_>>());

    let naive_seconds = median_seconds(config.repeats, || naive_marginal_loglik(&specs, &params, &subset));
    let precompute_seconds = median_seconds(config.repeats, || precompute_batch::<f64>(&specs, &subset));
    let batch = precompute_batch::<f64>(&specs, &subset)?;
    let vectorized_seconds = median_seconds(config.repeats, || vectorized_marginal_loglik(&batch, &params));

    let full_batch = precompute_batch::<f64>(&specs, &votes)?;
    let vectorized_seconds_full = median_seconds(config.repeats, || vectorized_marginal_loglik(&full_batch, &params));
    drop(full_batch);

    let train_cfg = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        seed: config.seed,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let report = fit::<f64>(&specs, &votes, &train_cfg, None)?;
    let train_seconds = t.elapsed().as_secs_f64();

    Ok(BenchReport {
        config: config.clone(),
        compare_m,
        naive_seconds,
        vectorized_seconds,
        precompute_seconds,
        speedup: naive_seconds / vectorized_seconds,
        speedup_with_precompute: naive_seconds / (vectorized_seconds + precompute_seconds),
        naive_seconds_extrapolated: naive_seconds * config.m as f64 / compare_m.max(1) as f64,
        vectorized_seconds_full,
        train_seconds,
        train_examples_per_second: (report.examples * config.epochs) as f64 / train_seconds,
    })
}

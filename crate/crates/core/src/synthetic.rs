//! Sampling `(Y, G)` from known parameters, and aligning fitted parameters to
//! the truth up to a relabeling of classes.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), which produces the same
//! stream on every platform. Example `a` draws its label from stream
//! `a·(n+1)` and PLF `i`'s vote from stream `a·(n+1) + i + 1`, all under the
//! key derived from the seed, so samples can be generated in parallel and
//! still reproduce exactly.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::label_space::{specs_k, validate_plf_spec, LabelSpace, PartialLabel, PlfSpec, VoteMatrix};
use crate::model::{BalanceMode, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample<T> {
    pub true_labels: Vec<usize>,
    pub votes: VoteMatrix,
    pub generating_params: ModelParams<T>,
    pub seed: u64,
}

/// Draws `m` examples from the generative model.
pub fn sample<T: Scalar>(specs: &[PlfSpec], params: &ModelParams<T>, m: usize, seed: u64) -> Result<SynthSample<T>> {
    let k = specs_k(specs)?;
    let space = LabelSpace::new(k)?;
    for s in specs {
        validate_plf_spec(s, space)?;
    }
    let n = specs.len();
    params.check_shape(n, k)?;

    let alpha = params.accuracies().mapv(T::to_f64_lossy);
    let beta = params.propensities().mapv(T::to_f64_lossy);
    let mut cdf: Vec<f64> = params
        .class_balance()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p.to_f64_lossy();
            Some(*acc)
        })
        .collect();
    *cdf.last_mut().expect("k >= 2") = f64::INFINITY;
    // codomain indices containing / not containing each class, per PLF
    let split: Vec<Vec<(Vec<usize>, Vec<usize>)>> = specs
        .iter()
        .map(|s| {
            (0..k)
                .map(|j| (0..s.codomain().len()).partition(|&t| s.codomain()[t].contains(j)))
                .collect()
        })
        .collect();

    let base = ChaCha8Rng::seed_from_u64(seed);
    let stream = |id: u64| {
        let mut rng = base.clone();
        rng.set_stream(id);
        rng
    };
    let stride = n as u64 + 1;
    let rows: Vec<(usize, Vec<Option<usize>>)> = (0..m)
        .into_par_iter()
        .map(|a| {
            let first = a as u64 * stride;
            let u: f64 = stream(first).random();
            let y = cdf.iter().position(|&c| u < c).expect("last cdf entry is infinite");
            let votes = (0..n)
                .map(|i| {
                    let mut rng = stream(first + 1 + i as u64);
                    if rng.random::<f64>() >= beta[i] {
                        return None;
                    }
                    let (inside, outside) = &split[i][y];
                    let pool = if rng.random::<f64>() < alpha[[i, y]] { inside } else { outside };
                    Some(pool[rng.random_range(0..pool.len())])
                })
                .collect();
            (y, votes)
        })
        .collect();

    let (true_labels, vote_rows): (Vec<usize>, Vec<Vec<Option<usize>>>) = rows.into_iter().unzip();
    Ok(SynthSample {
        true_labels,
        votes: VoteMatrix::from_rows(n, &vote_rows)?,
        generating_params: params.clone(),
        seed,
    })
}

/// Parameters with accuracies drawn uniformly from `alpha_range` and
/// propensities from `beta_range`.
pub fn random_params<T: Scalar, R: Rng>(
    n: usize,
    k: usize,
    alpha_range: (f64, f64),
    beta_range: (f64, f64),
    class_balance: Array1<T>,
    rng: &mut R,
) -> Result<ModelParams<T>> {
    let mut draw = |(lo, hi): (f64, f64)| T::lit(if hi > lo { rng.random_range(lo..hi) } else { lo });
    let alpha = Array2::from_shape_simple_fn((n, k), || draw(alpha_range));
    let beta = Array1::from_shape_simple_fn(n, || draw(beta_range));
    ModelParams::from_probabilities(&alpha, &beta, class_balance, BalanceMode::Fixed)
}

/// A random valid PLF over `space` with between 2 and `max_sets` codomain
/// elements.
pub fn random_plf_spec<R: Rng>(name: impl Into<String>, space: LabelSpace, max_sets: usize, rng: &mut R) -> PlfSpec {
    let k = space.k();
    let name = name.into();
    let max_sets = max_sets.max(2);
    loop {
        let target = rng.random_range(2..=max_sets);
        let mut codomain: Vec<PartialLabel> = Vec::with_capacity(target);
        for _ in 0..target * 4 {
            if codomain.len() == target {
                break;
            }
            let members: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
            if members.is_empty() || members.len() == k {
                continue;
            }
            let t = PartialLabel::new(members).expect("non-empty");
            if !codomain.contains(&t) {
                codomain.push(t);
            }
        }
        let spec = PlfSpec::from_codomain(name.clone(), codomain, space);
        if validate_plf_spec(&spec, space).is_ok() {
            return spec;
        }
    }
}

/// Result of matching estimated classes to true classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment<T> {
    /// `permutation[j]` is the estimated class matched to true class `j`.
    pub permutation: Vec<usize>,
    /// Estimated parameters relabeled into the true class order.
    pub aligned: ModelParams<T>,
    pub mean_alpha_error: f64,
    pub max_alpha_error: f64,
    /// Largest accuracy error per true class.
    pub class_alpha_error: Vec<f64>,
    pub max_beta_error: f64,
    pub max_balance_error: f64,
}

/// Largest class count aligned by trying every permutation.
pub const EXHAUSTIVE_ALIGN_MAX_CLASSES: usize = 8;

/// Finds the class permutation minimizing mean absolute accuracy error.
pub fn align_labels<T: Scalar>(truth: &ModelParams<T>, est: &ModelParams<T>) -> Result<Alignment<T>> {
    if truth.n() != est.n() || truth.k() != est.k() {
        return Err(Error::ShapeMismatch(format!(
            "truth is {}x{}, estimate is {}x{}",
            truth.n(),
            truth.k(),
            est.n(),
            est.k()
        )));
    }
    let (n, k) = (truth.n(), truth.k());
    let ta = truth.accuracies().mapv(T::to_f64_lossy);
    let ea = est.accuracies().mapv(T::to_f64_lossy);
    // cost[j][c]: true class j matched to estimated class c
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..k).map(|c| (0..n).map(|i| (ta[[i, j]] - ea[[i, c]]).abs()).sum()).collect())
        .collect();
    let permutation = if k <= EXHAUSTIVE_ALIGN_MAX_CLASSES {
        best_permutation(&cost)
    } else {
        hungarian(&cost)
    };

    // aligned class j takes estimated class permutation[j]
    let mut inverse = vec![0; k];
    for (j, &c) in permutation.iter().enumerate() {
        inverse[c] = j;
    }
    let aligned = est.permute_classes(&inverse);
    let aa = aligned.accuracies().mapv(T::to_f64_lossy);
    let class_alpha_error: Vec<f64> = (0..k)
        .map(|j| (0..n).map(|i| (ta[[i, j]] - aa[[i, j]]).abs()).fold(0.0, f64::max))
        .collect();
    let abs_diff = |a: f64, b: f64| (a - b).abs();
    let mean_alpha_error = if n * k == 0 {
        0.0
    } else {
        ta.iter().zip(aa.iter()).map(|(&a, &b)| abs_diff(a, b)).sum::<f64>() / (n * k) as f64
    };
    let max_beta_error = truth
        .propensities()
        .iter()
        .zip(aligned.propensities().iter())
        .map(|(a, b)| abs_diff(a.to_f64_lossy(), b.to_f64_lossy()))
        .fold(0.0, f64::max);
    let max_balance_error = truth
        .class_balance()
        .iter()
        .zip(aligned.class_balance().iter())
        .map(|(a, b)| abs_diff(a.to_f64_lossy(), b.to_f64_lossy()))
        .fold(0.0, f64::max);
    Ok(Alignment {
        permutation,
        aligned,
        mean_alpha_error,
        max_alpha_error: class_alpha_error.iter().copied().fold(0.0, f64::max),
        class_alpha_error,
        max_beta_error,
        max_balance_error,
    })
}

/// Minimum-cost permutation by enumeration; the first minimum in
/// lexicographic order wins.
fn best_permutation(cost: &[Vec<f64>]) -> Vec<usize> {
    let k = cost.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let total = |p: &[usize]| p.iter().enumerate().map(|(j, &c)| cost[j][c]).sum::<f64>();
    let mut best = perm.clone();
    let mut best_cost = total(&perm);
    while next_permutation(&mut perm) {
        let c = total(&perm);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
    }
    best
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else { return false };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Hungarian algorithm for a square cost matrix; returns the column assigned
/// to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials; column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r - 1][col - 1] - u[r] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

//! Instance generators and reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use nplm::label_space::{traditional_lf, LabelSpace, PartialLabel, PlfSpec, VoteMatrix};
use nplm::model::{uniform_balance, BalanceMode, ModelParams};
use nplm::synthetic::random_plf_spec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn pl(members: &[usize]) -> PartialLabel {
    PartialLabel::new(members.iter().copied()).unwrap()
}

pub fn spec(name: &str, sets: &[&[usize]], k: usize) -> PlfSpec {
    let space = LabelSpace::new(k).unwrap();
    PlfSpec::new(name, sets.iter().map(|s| pl(s)).collect(), space).unwrap()
}

/// A random probability vector with entries bounded away from zero.
pub fn random_balance<R: Rng>(k: usize, rng: &mut R) -> Array1<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Array1::from_iter(raw.into_iter().map(|x| x / total))
}

pub fn random_specs<R: Rng>(n: usize, k: usize, rng: &mut R) -> Vec<PlfSpec> {
    let space = LabelSpace::new(k).unwrap();
    (0..n)
        .map(|i| {
            if rng.random_bool(0.25) {
                traditional_lf(space).renamed(format!("p{i}"))
            } else {
                random_plf_spec(format!("p{i}"), space, 5, rng)
            }
        })
        .collect()
}

/// Logits drawn uniformly from `[-range, range]`.
pub fn random_logit_params<R: Rng>(n: usize, k: usize, range: f64, mode: BalanceMode, rng: &mut R) -> ModelParams<f64> {
    let a = Array2::from_shape_simple_fn((n, k), || rng.random_range(-range..range));
    let b = Array1::from_shape_simple_fn(n, || rng.random_range(-range..range));
    let balance = random_balance(k, rng);
    ModelParams::new(a, b, balance, mode).unwrap()
}

/// Votes drawn uniformly over each PLF's codomain plus abstain.
pub fn random_votes<R: Rng>(specs: &[PlfSpec], m: usize, rng: &mut R) -> VoteMatrix {
    let rows: Vec<Vec<Option<usize>>> = (0..m)
        .map(|_| {
            specs
                .iter()
                .map(|s| {
                    let t = rng.random_range(0..=s.codomain().len());
                    (t < s.codomain().len()).then_some(t)
                })
                .collect()
        })
        .collect();
    VoteMatrix::from_rows(specs.len(), &rows).unwrap()
}

/// `P(G_i = vote | Y = class)` written out from the generative story: with
/// probability `1-β` abstain; otherwise with probability `α` pick uniformly
/// among sets containing the class, else uniformly among sets that do not.
pub fn oracle_conditional(spec: &PlfSpec, alpha: f64, beta: f64, vote: Option<usize>, class: usize) -> f64 {
    let Some(v) = vote else { return 1.0 - beta };
    let sets = spec.codomain();
    let inside = sets.iter().filter(|t| t.members().contains(&class)).count() as f64;
    let outside = sets.len() as f64 - inside;
    if sets[v].members().contains(&class) {
        beta * alpha / inside
    } else {
        beta * (1.0 - alpha) / outside
    }
}

/// `log P(y_j) + Σ_i log P(G_ai | y_j)` for every example and class, computed
/// directly from probabilities.
pub fn oracle_log_joint(specs: &[PlfSpec], params: &ModelParams<f64>, votes: &VoteMatrix) -> Array2<f64> {
    let k = params.k();
    let alpha = params.accuracies();
    let beta = params.propensities();
    Array2::from_shape_fn((votes.m(), k), |(a, j)| {
        let mut s = params.class_balance()[j].ln();
        for (i, spec) in specs.iter().enumerate() {
            s += oracle_conditional(spec, alpha[[i, j]], beta[i], votes.get(a, i), j).ln();
        }
        s
    })
}

/// Per-example marginal log-likelihood via a max-shifted log-sum-exp.
pub fn oracle_example_logliks(specs: &[PlfSpec], params: &ModelParams<f64>, votes: &VoteMatrix) -> Vec<f64> {
    oracle_log_joint(specs, params, votes)
        .rows()
        .into_iter()
        .map(|row| {
            let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            top + row.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
        })
        .collect()
}

/// Bayes' rule by enumeration over classes, in probability space.
pub fn oracle_posterior(specs: &[PlfSpec], params: &ModelParams<f64>, votes: &VoteMatrix) -> Array2<f64> {
    let joint = oracle_log_joint(specs, params, votes).mapv(f64::exp);
    let mut post = joint.clone();
    for mut row in post.rows_mut() {
        let z: f64 = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    post
}

/// Two traditional LFs and four partial PLFs over three classes.
pub fn recovery_specs() -> Vec<PlfSpec> {
    let space = LabelSpace::new(3).unwrap();
    vec![
        traditional_lf(space).renamed("lf_a"),
        traditional_lf(space).renamed("lf_b"),
        spec("p01", &[&[0, 1], &[2]], 3),
        spec("p12", &[&[1, 2], &[0]], 3),
        spec("p02", &[&[0, 2], &[1]], 3),
        spec("pmix", &[&[0, 1], &[1, 2], &[0, 2]], 3),
    ]
}

/// `max_a |x_a - y_a| / max(1, |y_a|)`.
pub fn max_scaled_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)).fold(0.0, f64::max)
}

/// As [`random_votes`], but every row has at least one non-abstaining vote,
/// matching what the trainer sees after coverage filtering.
pub fn random_covered_votes<R: Rng>(specs: &[PlfSpec], m: usize, rng: &mut R) -> VoteMatrix {
    let mut rows: Vec<Vec<Option<usize>>> = Vec::with_capacity(m);
    while rows.len() < m {
        let row: Vec<Option<usize>> = specs
            .iter()
            .map(|s| {
                let t = rng.random_range(0..=s.codomain().len());
                (t < s.codomain().len()).then_some(t)
            })
            .collect();
        if row.iter().any(Option::is_some) {
            rows.push(row);
        }
    }
    VoteMatrix::from_rows(specs.len(), &rows).unwrap()
}

/// One accurate traditional LF plus seven random PLFs over four classes;
/// the first three PLFs are right about 95% of the time, the rest about 55%.
pub fn confusable_setup(rng: &mut ChaCha8Rng) -> (Vec<PlfSpec>, ModelParams<f64>) {
    let k = 4;
    let space = LabelSpace::new(k).unwrap();
    let mut specs = vec![traditional_lf(space).renamed("lf_good")];
    specs.extend(random_specs(7, k, rng).into_iter().enumerate().map(|(i, s)| s.renamed(format!("p{i}"))));
    let n = specs.len();
    let alpha = Array2::from_shape_fn((n, k), |(i, _)| {
        let centre: f64 = if i < 3 { 0.95 } else { 0.55 };
        centre + rng.random_range(-0.02..0.02)
    });
    let beta = Array1::from_shape_simple_fn(n, || rng.random_range(0.5..0.9));
    let params = ModelParams::from_probabilities(&alpha, &beta, uniform_balance(k), BalanceMode::Fixed).unwrap();
    (specs, params)
}

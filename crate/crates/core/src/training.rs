//! Marginal maximum-likelihood training of [`ModelParams`].
//!
//! For example `a` the marginal log-likelihood is
//! `ℓ_a = log Σ_j P(y_j) exp(L_aj)` with `L` from
//! [`model::class_log_likelihood`]. Writing `w_aj` for the class posterior,
//!
//! * `∂ℓ/∂A_ij = Σ_a w_aj · PI_ai · (AI_aij − tanh A_ij)`
//! * `∂ℓ/∂B_i  = Σ_a (PI_ai − β_i)`
//! * `∂ℓ/∂c_j  = Σ_a (w_aj − P(y_j))` for balance logits `c` with
//!   `P(Y) = softmax(c)`.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_space::{coverage_filter, specs_k, PlfSpec, VoteMatrix};
use crate::model::{
    self, log_joint, precompute_batch, propensity_from_logit, BalanceMode, ModelParams,
    PrecomputedBatch,
};
use crate::scalar::{log_sum_exp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub initial_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Minimum improvement of the mean per-example log-likelihood that
    /// resets the plateau counter.
    pub plateau_threshold: f64,
    pub seed: u64,
    pub learn_balance: bool,
    pub filter_uncovered: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            epochs: 5,
            optimizer: Optimizer::Sgd,
            initial_lr: 0.01,
            plateau_factor: 0.1,
            plateau_patience: 3,
            plateau_threshold: 1e-6,
            seed: 0,
            learn_balance: false,
            filter_uncovered: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.initial_lr >= 0.0 && self.initial_lr.is_finite()) {
            return bad("learning rate must be a non-negative finite number");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if self.plateau_patience == 0 {
            return bad("plateau_patience must be positive");
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return bad("Adam moments must lie in [0, 1) and eps must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    /// Full-data marginal log-likelihood after each epoch.
    pub trace: Vec<T>,
    pub params: ModelParams<T>,
    pub seconds: f64,
    pub batches: usize,
    pub final_lr: f64,
    /// Rows of the input that were used (after coverage filtering).
    pub examples: usize,
}

/// Gradient of the (summed) batch marginal log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub acc_logits: Array2<T>,
    pub prop_logits: Array1<T>,
    /// Present when the class balance is learned.
    pub balance_logits: Option<Array1<T>>,
}

impl<T: Scalar> Gradient<T> {
    fn flatten_into(&self, out: &mut Vec<T>) {
        out.clear();
        out.extend(self.acc_logits.iter().copied());
        out.extend(self.prop_logits.iter().copied());
        if let Some(c) = &self.balance_logits {
            out.extend(c.iter().copied());
        }
    }

    fn is_finite(&self) -> bool {
        self.acc_logits
            .iter()
            .chain(self.prop_logits.iter())
            .chain(self.balance_logits.iter().flatten())
            .all(|x| x.is_finite())
    }
}

/// Gradient and value of the batch marginal log-likelihood.
pub fn value_and_grad<T: Scalar>(batch: &PrecomputedBatch<T>, params: &ModelParams<T>) -> Result<(T, Gradient<T>)> {
    let mut weights = log_joint(batch, params)?;
    let norms = model::row_log_sum_exp(&weights);
    let value: T = norms.sum();
    for (mut row, &z) in weights.rows_mut().into_iter().zip(norms.iter()) {
        row.mapv_inplace(|x| (x - z).exp());
    }
    let m = T::from_usize(batch.m()).expect("m fits");

    let (signed, coverage) = batch.vote_weighted_sums(weights.as_slice().expect("fresh array"));
    let tanh = params.acc_logits().mapv(|a| a.tanh());
    let acc_grad = signed - tanh * coverage;

    let votes_per_plf = batch.pi().sum_axis(Axis(0));
    let prop_grad = Zip::from(&votes_per_plf)
        .and(params.prop_logits())
        .map_collect(|&v, &b| v - m * propensity_from_logit(b));

    let balance_grad = match params.balance_mode() {
        BalanceMode::Fixed => None,
        BalanceMode::Learned => {
            let mut g = weights.sum_axis(Axis(0));
            g.scaled_add(-m, params.class_balance());
            Some(g)
        }
    };
    Ok((value, Gradient { acc_logits: acc_grad, prop_logits: prop_grad, balance_logits: balance_grad }))
}

/// `∂/∂Θ` of the batch marginal log-likelihood.
pub fn grad_marginal_loglik<T: Scalar>(batch: &PrecomputedBatch<T>, params: &ModelParams<T>) -> Result<Gradient<T>> {
    Ok(value_and_grad(batch, params)?.1)
}

/// Flat view of the trainable parameters: `A` (row-major), `B`, then the
/// balance logits when learned.
struct FlatParams<T> {
    values: Vec<T>,
    n: usize,
    k: usize,
    mode: BalanceMode,
}

impl<T: Scalar> FlatParams<T> {
    fn from_params(p: &ModelParams<T>) -> Self {
        let mut values: Vec<T> = p.acc_logits().iter().copied().collect();
        values.extend(p.prop_logits().iter().copied());
        if p.balance_mode() == BalanceMode::Learned {
            values.extend(p.class_balance().iter().map(|x| x.ln()));
        }
        Self { values, n: p.n(), k: p.k(), mode: p.balance_mode() }
    }

    fn to_params(&self, fixed_balance: &Array1<T>) -> ModelParams<T> {
        let (n, k) = (self.n, self.k);
        let acc = Array2::from_shape_vec((n, k), self.values[..n * k].to_vec()).expect("shape");
        let prop = Array1::from(self.values[n * k..n * k + n].to_vec());
        let balance = match self.mode {
            BalanceMode::Fixed => fixed_balance.clone(),
            BalanceMode::Learned => {
                let logits = &self.values[n * k + n..];
                let norm = log_sum_exp(logits.iter().copied());
                logits.iter().map(|&c| (c - norm).exp()).collect()
            }
        };
        ModelParams::from_parts_unchecked(acc, prop, balance, self.mode)
    }
}

enum OptimizerState<T> {
    Sgd,
    Adam { beta1: T, beta2: T, eps: T, m: Vec<T>, v: Vec<T>, t: i32 },
}

impl<T: Scalar> OptimizerState<T> {
    fn new(opt: Optimizer, len: usize) -> Self {
        match opt {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam { beta1, beta2, eps } => OptimizerState::Adam {
                beta1: T::lit(beta1),
                beta2: T::lit(beta2),
                eps: T::lit(eps),
                m: vec![T::zero(); len],
                v: vec![T::zero(); len],
                t: 0,
            },
        }
    }

    /// Ascent step on `params` along `grad`.
    fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        match self {
            OptimizerState::Sgd => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p += lr * g;
                }
            }
            OptimizerState::Adam { beta1, beta2, eps, m, v, t } => {
                *t += 1;
                let c1 = T::one() - beta1.powi(*t);
                let c2 = T::one() - beta2.powi(*t);
                for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = *beta1 * *m + (T::one() - *beta1) * g;
                    *v = *beta2 * *v + (T::one() - *beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p += lr * m_hat / (v_hat.sqrt() + *eps);
                }
            }
        }
    }
}

/// Reduce-on-plateau learning-rate schedule on the full-data objective.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64) -> Self {
        Self { lr, factor, patience, threshold, best: f64::NEG_INFINITY, stale: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records an objective value (higher is better) and returns the
    /// learning rate to use next.
    pub fn observe(&mut self, objective: f64) -> f64 {
        if objective > self.best + self.threshold {
            self.best = objective;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr *= self.factor;
                self.stale = 0;
            }
        }
        self.lr
    }
}

/// Fits the label model to `votes` by mini-batch gradient ascent on the
/// marginal log-likelihood.
///
/// Rows where every PLF abstains are dropped first when
/// `config.filter_uncovered` is set. Each step uses the batch-mean gradient.
/// Batch order comes from a ChaCha8 stream seeded with `config.seed`, so runs
/// with equal inputs are bitwise reproducible.
pub fn fit<T: Scalar>(
    specs: &[PlfSpec],
    votes: &VoteMatrix,
    config: &TrainConfig,
    init: Option<ModelParams<T>>,
) -> Result<TrainReport<T>> {
    config.validate()?;
    let k = specs_k(specs)?;
    votes.validate(specs)?;
    let votes = if config.filter_uncovered {
        votes.select_rows(&coverage_filter(votes))
    } else {
        votes.clone()
    };
    if votes.m() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mode = if config.learn_balance { BalanceMode::Learned } else { BalanceMode::Fixed };
    let init = init.unwrap_or_else(|| ModelParams::default_init(specs.len(), k)).with_balance_mode(mode);
    init.check_shape(specs.len(), k)?;

    let start = Instant::now();
    let full = precompute_batch::<T>(specs, &votes)?;
    let m = full.m();
    let fixed_balance = init.class_balance().clone();
    let mut flat = FlatParams::from_params(&init);
    let mut params = init;
    let mut opt = OptimizerState::new(config.optimizer, flat.values.len());
    let mut sched = PlateauScheduler::new(
        config.initial_lr,
        config.plateau_factor,
        config.plateau_patience,
        config.plateau_threshold,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..m).collect();
    let mut grad_flat = Vec::with_capacity(flat.values.len());
    let mut trace = Vec::with_capacity(config.epochs);
    let mut batches = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = T::lit(sched.lr());
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let batch = full.select(rows);
            let (value, grad) = value_and_grad(&batch, &params)?;
            if !value.is_finite() || !grad.is_finite() {
                return Err(Error::NonFinite(format!("epoch {epoch}, batch {b}: objective {value}")));
            }
            grad.flatten_into(&mut grad_flat);
            let scale = T::one() / T::from_usize(rows.len()).expect("batch fits");
            grad_flat.iter_mut().for_each(|g| *g *= scale);
            opt.step(&mut flat.values, &grad_flat, lr);
            params = flat.to_params(&fixed_balance);
            batches += 1;
        }
        let ll = model::vectorized_marginal_loglik(&full, &params)?;
        if !ll.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch}: full-data log-likelihood {ll}")));
        }
        trace.push(ll);
        sched.observe(ll.to_f64_lossy() / m as f64);
    }

    Ok(TrainReport {
        trace,
        params,
        seconds: start.elapsed().as_secs_f64(),
        batches,
        final_lr: sched.lr(),
        examples: m,
    })
}

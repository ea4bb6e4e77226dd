//! Noise-aware end model: a linear softmax classifier trained with the
//! expected cross-entropy against label-model posteriors.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Posterior;
use crate::scalar::{log_sum_exp, Scalar};

/// Lower clamp on `log p` inside the loss.
pub const LOG_CLAMP: f64 = -30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T>(Array2<T>);

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(x: Array2<T>) -> Result<Self> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("features must be finite".into()));
        }
        Ok(Self(x))
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.0.view()
    }

    pub fn m(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }
}

/// `m × k` row-stochastic targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabels<T>(Array2<T>);

impl<T: Scalar> SoftLabels<T> {
    pub fn new(probs: Array2<T>) -> Result<Self> {
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(16.0 * probs.ncols() as f64));
        for (a, row) in probs.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !p.is_finite() || p < T::zero()) || (row.sum() - T::one()).abs() > tol {
                return Err(Error::InvalidParams(format!("soft label row {a} is not a distribution")));
            }
        }
        Ok(Self(probs))
    }

    /// Detaches a label-model posterior.
    pub fn from_posterior(post: &Posterior<T>) -> Self {
        Self(post.probs().clone())
    }

    pub fn one_hot(labels: &[usize], k: usize) -> Result<Self> {
        let mut out = Array2::zeros((labels.len(), k));
        for (a, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::ShapeMismatch(format!("label {y} out of range for {k} classes")));
            }
            out[[a, y]] = T::one();
        }
        Ok(Self(out))
    }

    pub fn probs(&self) -> &Array2<T> {
        &self.0
    }
}

/// `-(1/m) Σ_a Σ_j soft_aj · max(log predicted_aj, -30)`.
pub fn expected_ce_loss<T: Scalar>(predicted: &Array2<T>, soft: &SoftLabels<T>) -> Result<T> {
    if predicted.dim() != soft.0.dim() {
        return Err(Error::ShapeMismatch(format!(
            "predictions are {:?}, soft labels are {:?}",
            predicted.dim(),
            soft.0.dim()
        )));
    }
    let m = predicted.nrows();
    if m == 0 {
        return Ok(T::zero());
    }
    let clamp = T::lit(LOG_CLAMP);
    let total: T = predicted
        .iter()
        .zip(soft.0.iter())
        .map(|(&p, &s)| if s == T::zero() { T::zero() } else { s * p.ln().max(clamp) })
        .sum();
    Ok(-total / T::from_usize(m).expect("m fits"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T> {
    /// `d × k`.
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn zeros(d: usize, k: usize) -> Self {
        Self { weights: Array2::zeros((d, k)), bias: Array1::zeros(k) }
    }

    pub fn logits(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        x.dot(&self.weights) + &self.bias
    }

    pub fn predict_log_proba(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut z = self.logits(x);
        for mut row in z.rows_mut() {
            let norm = log_sum_exp(row.iter().copied());
            row.mapv_inplace(|v| v - norm);
        }
        z
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        self.predict_log_proba(x).mapv(|v| v.exp())
    }

    pub fn predict(&self, x: ArrayView2<'_, T>) -> Vec<usize> {
        Posterior::from_log_joint(self.logits(x)).argmax()
    }
}

/// Expected cross-entropy of `model` and its gradient `(∂W, ∂b)`.
pub fn loss_and_grad<T: Scalar>(
    model: &LinearModel<T>,
    x: ArrayView2<'_, T>,
    soft: ArrayView2<'_, T>,
) -> (T, Array2<T>, Array1<T>) {
    let m = T::from_usize(x.nrows().max(1)).expect("m fits");
    let clamp = T::lit(LOG_CLAMP);
    let log_p = model.predict_log_proba(x);
    let mut loss = T::zero();
    // ∂loss/∂z_ac = -(1/m) (s_ac·[c unclamped] − p_ac · Σ_j s_aj·[j unclamped])
    let mut dz = Array2::zeros(log_p.raw_dim());
    for ((lp, s), mut d) in log_p.rows().into_iter().zip(soft.rows()).zip(dz.rows_mut()) {
        let mut active_mass = T::zero();
        for (&l, &s) in lp.iter().zip(s.iter()) {
            if s != T::zero() {
                loss -= s * l.max(clamp);
            }
            if l > clamp {
                active_mass += s;
            }
        }
        for ((d, &l), &s) in d.iter_mut().zip(lp.iter()).zip(s.iter()) {
            let own = if l > clamp { s } else { T::zero() };
            *d = (l.exp() * active_mass - own) / m;
        }
    }
    let grad_w = x.t().dot(&dz);
    let grad_b = dz.sum_axis(Axis(0));
    (loss / m, grad_w, grad_b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndConfig {
    pub epochs: usize,
    pub lr: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for EndConfig {
    fn default() -> Self {
        Self { epochs: 200, lr: 0.5, batch_size: None, seed: 0 }
    }
}

/// Gradient descent on [`expected_ce_loss`], starting from zero weights.
pub fn fit_linear<T: Scalar>(
    features: &FeatureMatrix<T>,
    soft: &SoftLabels<T>,
    config: &EndConfig,
) -> Result<LinearModel<T>> {
    let m = features.m();
    if m == 0 {
        return Err(Error::EmptyDataset);
    }
    if soft.0.nrows() != m {
        return Err(Error::ShapeMismatch(format!("{m} feature rows, {} soft label rows", soft.0.nrows())));
    }
    if config.batch_size == Some(0) || config.lr.is_nan() || config.lr <= 0.0 {
        return Err(Error::InvalidConfig("end model needs a positive batch size and learning rate".into()));
    }
    let k = soft.0.ncols();
    let mut model = LinearModel::zeros(features.d(), k);
    let lr = T::lit(config.lr);
    let batch = config.batch_size.unwrap_or(m).min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..m).collect();
    for epoch in 0..config.epochs {
        if batch < m {
            order.shuffle(&mut rng);
        }
        for rows in order.chunks(batch) {
            let (loss, gw, gb) = if batch == m {
                loss_and_grad(&model, features.view(), soft.0.view())
            } else {
                let x = features.0.select(Axis(0), rows);
                let s = soft.0.select(Axis(0), rows);
                loss_and_grad(&model, x.view(), s.view())
            };
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("end model loss {loss} at epoch {epoch}")));
            }
            model.weights.scaled_add(-lr, &gw);
            model.bias.scaled_add(-lr, &gb);
        }
    }
    Ok(model)
}

/// Fraction of positions where `pred` equals `gold`.
pub fn accuracy(pred: &[usize], gold: &[usize]) -> f64 {
    if gold.is_empty() {
        return 0.0;
    }
    pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / gold.len() as f64
}

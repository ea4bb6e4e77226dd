//! The generative label model `P(G, Y)`.
//!
//! Each PLF `i` has a per-class accuracy `α_ij` (probability that a
//! non-abstaining vote contains the true class) and a propensity `β_i`
//! (probability of not abstaining). Mistakes are drawn uniformly from the
//! codomain elements that do not contain the true class. Parameters live in
//! log space: `α_ij = σ(2·A_ij)`, `β_i = σ(B_i)`.
//!
//! Two routes compute the marginal log-likelihood: [`naive_marginal_loglik`]
//! loops over examples, PLFs and classes, and [`vectorized_marginal_loglik`]
//! works on the indicator tensors of a [`PrecomputedBatch`]. The former is the
//! reference for the latter.

use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_space::{specs_k, PartialLabel, PlfSpec, VoteMatrix};
use crate::scalar::{log_sum_exp, sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceMode {
    #[default]
    Fixed,
    Learned,
}

/// Accuracy of 0.7 and propensity of 0.5 for every PLF, uniform class balance.
pub const DEFAULT_INIT_ACCURACY: f64 = 0.7;
pub const DEFAULT_INIT_PROPENSITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    acc_logits: Array2<T>,
    prop_logits: Array1<T>,
    class_balance: Array1<T>,
    balance_mode: BalanceMode,
}

impl<T: Scalar> ModelParams<T> {
    /// `acc_logits` is `n × k` (`A`), `prop_logits` has length `n` (`B`).
    pub fn new(
        acc_logits: Array2<T>,
        prop_logits: Array1<T>,
        class_balance: Array1<T>,
        balance_mode: BalanceMode,
    ) -> Result<Self> {
        let params = Self { acc_logits, prop_logits, class_balance, balance_mode };
        params.validate()?;
        Ok(params)
    }

    pub fn default_init(n: usize, k: usize) -> Self {
        let a = accuracy_logit(T::lit(DEFAULT_INIT_ACCURACY));
        let b = propensity_logit(T::lit(DEFAULT_INIT_PROPENSITY));
        Self {
            acc_logits: Array2::from_elem((n, k), a),
            prop_logits: Array1::from_elem(n, b),
            class_balance: uniform_balance(k),
            balance_mode: BalanceMode::Fixed,
        }
    }

    /// Builds parameters from accuracies `α` (`n × k`) and propensities `β`.
    pub fn from_probabilities(
        alpha: &Array2<T>,
        beta: &Array1<T>,
        class_balance: Array1<T>,
        balance_mode: BalanceMode,
    ) -> Result<Self> {
        let open = |x: T| x > T::zero() && x < T::one();
        if !alpha.iter().chain(beta.iter()).all(|&x| open(x)) {
            return Err(Error::InvalidParams("accuracies and propensities must lie in (0, 1)".into()));
        }
        Self::new(
            alpha.mapv(accuracy_logit),
            beta.mapv(propensity_logit),
            class_balance,
            balance_mode,
        )
    }

    fn validate(&self) -> Result<()> {
        let (n, k) = self.acc_logits.dim();
        if self.prop_logits.len() != n || self.class_balance.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "A is {n}x{k}, B has {} entries, balance has {}",
                self.prop_logits.len(),
                self.class_balance.len()
            )));
        }
        if !self.acc_logits.iter().chain(self.prop_logits.iter()).all(|x| x.is_finite()) {
            return Err(Error::InvalidParams("non-finite logit".into()));
        }
        check_balance(self.class_balance.view())
    }

    pub fn n(&self) -> usize {
        self.acc_logits.nrows()
    }

    pub fn k(&self) -> usize {
        self.acc_logits.ncols()
    }

    pub fn acc_logits(&self) -> &Array2<T> {
        &self.acc_logits
    }

    pub fn prop_logits(&self) -> &Array1<T> {
        &self.prop_logits
    }

    pub fn class_balance(&self) -> &Array1<T> {
        &self.class_balance
    }

    pub fn balance_mode(&self) -> BalanceMode {
        self.balance_mode
    }

    pub fn with_balance_mode(mut self, mode: BalanceMode) -> Self {
        self.balance_mode = mode;
        self
    }

    pub fn with_class_balance(mut self, balance: Array1<T>) -> Result<Self> {
        if balance.len() != self.k() {
            return Err(Error::ShapeMismatch("class balance length".into()));
        }
        check_balance(balance.view())?;
        self.class_balance = balance;
        Ok(self)
    }

    /// `α`, `n × k`.
    pub fn accuracies(&self) -> Array2<T> {
        self.acc_logits.mapv(accuracy_from_logit)
    }

    /// `β`, length `n`.
    pub fn propensities(&self) -> Array1<T> {
        self.prop_logits.mapv(propensity_from_logit)
    }

    /// Relabels classes: class `j` becomes class `perm[j]`.
    pub fn permute_classes(&self, perm: &[usize]) -> Self {
        let mut acc = self.acc_logits.clone();
        let mut balance = self.class_balance.clone();
        for (j, &p) in perm.iter().enumerate() {
            acc.column_mut(p).assign(&self.acc_logits.column(j));
            balance[p] = self.class_balance[j];
        }
        Self { acc_logits: acc, class_balance: balance, ..self.clone() }
    }

    /// Keeps only the PLFs listed in `cols`.
    pub fn select_plfs(&self, cols: &[usize]) -> Self {
        Self {
            acc_logits: self.acc_logits.select(Axis(0), cols),
            prop_logits: self.prop_logits.select(Axis(0), cols),
            ..self.clone()
        }
    }

    pub(crate) fn from_parts_unchecked(
        acc_logits: Array2<T>,
        prop_logits: Array1<T>,
        class_balance: Array1<T>,
        balance_mode: BalanceMode,
    ) -> Self {
        Self { acc_logits, prop_logits, class_balance, balance_mode }
    }

    pub(crate) fn check_shape(&self, n: usize, k: usize) -> Result<()> {
        if self.n() != n || self.k() != k {
            return Err(Error::ShapeMismatch(format!(
                "parameters are for {} PLFs x {} classes, data has {n} x {k}",
                self.n(),
                self.k()
            )));
        }
        Ok(())
    }
}

pub fn uniform_balance<T: Scalar>(k: usize) -> Array1<T> {
    Array1::from_elem(k, T::one() / T::from_usize(k).expect("k fits"))
}

fn check_balance<T: Scalar>(balance: ArrayView1<T>) -> Result<()> {
    if !balance.iter().all(|&p| p > T::zero() && p.is_finite()) {
        return Err(Error::InvalidParams("class balance entries must be strictly positive".into()));
    }
    let tol = T::lit(1e-9).max(T::epsilon() * T::lit(8.0 * balance.len() as f64));
    if (balance.sum() - T::one()).abs() > tol {
        return Err(Error::InvalidParams("class balance must sum to 1".into()));
    }
    Ok(())
}

/// `α = e^A / (e^A + e^-A)`.
#[inline]
pub fn accuracy_from_logit<T: Scalar>(a: T) -> T {
    sigmoid(a + a)
}

#[inline]
pub fn accuracy_logit<T: Scalar>(alpha: T) -> T {
    T::lit(0.5) * (alpha / (T::one() - alpha)).ln()
}

/// `β = e^B / (e^B + 1)`.
#[inline]
pub fn propensity_from_logit<T: Scalar>(b: T) -> T {
    sigmoid(b)
}

#[inline]
pub fn propensity_logit<T: Scalar>(beta: T) -> T {
    (beta / (T::one() - beta)).ln()
}

/// Maps log-space parameters back to accuracies `α` (`n × k`) and
/// propensities `β` (length `n`).
pub fn to_probability<T: Scalar>(params: &ModelParams<T>) -> (Array2<T>, Array1<T>) {
    (params.accuracies(), params.propensities())
}

/// `P(G_i = vote | Y = class)` for a PLF with accuracy `alpha` on `class` and
/// propensity `beta`. `None` is an abstention.
pub fn conditional_prob<T: Scalar>(
    spec: &PlfSpec,
    alpha: T,
    beta: T,
    vote: Option<&PartialLabel>,
    class: usize,
) -> Result<T> {
    let index = match vote {
        None => None,
        Some(label) => Some(spec.index_of(label).ok_or_else(|| Error::VoteNotInCodomain {
            plf: spec.name().to_owned(),
            vote: format!("{label:?}"),
        })?),
    };
    conditional_prob_at(spec, alpha, beta, index, class)
}

/// As [`conditional_prob`], with the vote given as a codomain index.
pub fn conditional_prob_at<T: Scalar>(
    spec: &PlfSpec,
    alpha: T,
    beta: T,
    vote: Option<usize>,
    class: usize,
) -> Result<T> {
    let Some(v) = vote else {
        return Ok(T::one() - beta);
    };
    let label = spec.codomain().get(v).ok_or_else(|| Error::VoteNotInCodomain {
        plf: spec.name().to_owned(),
        vote: format!("index {v}"),
    })?;
    let p = if label.contains(class) {
        beta * alpha / count::<T>(spec.consistent_counts()[class])
    } else {
        beta * (T::one() - alpha) / count::<T>(spec.inconsistent_counts()[class])
    };
    Ok(p)
}

#[inline]
fn count<T: Scalar>(c: usize) -> T {
    T::from_usize(c).expect("count fits in scalar")
}

fn check_inputs<T: Scalar>(specs: &[PlfSpec], params: &ModelParams<T>, votes: &VoteMatrix) -> Result<usize> {
    votes.validate(specs)?;
    let k = specs_k(specs)?;
    params.check_shape(specs.len(), k)?;
    Ok(k)
}

/// Per-example marginal log-likelihood `log Σ_j P(y_j) Π_i P(G_ai | y_j)`,
/// evaluated with explicit loops over examples, PLFs and classes.
pub fn naive_example_logliks<T: Scalar>(
    specs: &[PlfSpec],
    params: &ModelParams<T>,
    votes: &VoteMatrix,
) -> Result<Vec<T>> {
    let k = check_inputs(specs, params, votes)?;
    let a_logit = params.acc_logits();
    let b_logit = params.prop_logits();
    let balance = params.class_balance();
    let mut out = Vec::with_capacity(votes.m());
    let mut acc = vec![T::zero(); k];
    for a in 0..votes.m() {
        for (j, slot) in acc.iter_mut().enumerate() {
            *slot = balance[j].ln();
        }
        for (i, spec) in specs.iter().enumerate() {
            let vote = votes.get(a, i);
            for (j, slot) in acc.iter_mut().enumerate() {
                let alpha = accuracy_from_logit(a_logit[[i, j]]);
                let beta = propensity_from_logit(b_logit[i]);
                *slot += conditional_prob_at(spec, alpha, beta, vote, j)?.ln();
            }
        }
        out.push(log_sum_exp(acc.iter().copied()));
    }
    Ok(out)
}

/// Reference marginal log-likelihood `Σ_a log P(G_a)`.
pub fn naive_marginal_loglik<T: Scalar>(
    specs: &[PlfSpec],
    params: &ModelParams<T>,
    votes: &VoteMatrix,
) -> Result<T> {
    Ok(naive_example_logliks(specs, params, votes)?.into_iter().sum())
}

/// Indicator tensors for a batch of votes.
///
/// * `ai[a,i,j]` is `+1` when class `j` is in the label set PLF `i` output on
///   example `a`, else `-1`.
/// * `nlog[a,i,j]` is `-log|N_ij|` where `ai` is `+1`, else `-log|N_ij^C|`.
/// * `pi[a,i]` is `1` for a non-abstaining vote, else `0`.
///
/// Abstentions are filled as if the full label set had been output; they are
/// masked by `pi` downstream. Since `nlog` does not depend on the parameters,
/// its masked sum over PLFs is cached as an `m × k` matrix.
///
/// The likelihood kernel reads `ai` and `pi` through a compact form: `codes`
/// holds, per example and PLF, a row of `signs`, the `ai` pattern of that
/// vote. Abstentions point at a trailing row reserved for them.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedBatch<T> {
    ai: Array3<T>,
    nlog: Array3<T>,
    pi: Array2<T>,
    masked_nlog: Array2<T>,
    codes: Array2<u32>,
    signs: Array2<T>,
    /// PLF owning each row of `signs`, except the abstain row.
    sign_plf: Vec<usize>,
}

impl<T: Scalar> PrecomputedBatch<T> {
    pub fn ai(&self) -> &Array3<T> {
        &self.ai
    }

    pub fn nlog(&self) -> &Array3<T> {
        &self.nlog
    }

    pub fn pi(&self) -> &Array2<T> {
        &self.pi
    }

    /// `Σ_i pi[a,i] · nlog[a,i,j]`.
    pub fn masked_nlog(&self) -> &Array2<T> {
        &self.masked_nlog
    }

    pub fn m(&self) -> usize {
        self.ai.dim().0
    }

    pub fn n(&self) -> usize {
        self.ai.dim().1
    }

    pub fn k(&self) -> usize {
        self.ai.dim().2
    }

    /// The sub-batch made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            ai: self.ai.select(Axis(0), rows),
            nlog: self.nlog.select(Axis(0), rows),
            pi: self.pi.select(Axis(0), rows),
            masked_nlog: self.masked_nlog.select(Axis(0), rows),
            codes: self.codes.select(Axis(0), rows),
            signs: self.signs.clone(),
            sign_plf: self.sign_plf.clone(),
        }
    }

    /// For `m × k` row weights `w`, returns `(Σ_a w_aj PI_ai AI_aij,
    /// Σ_a w_aj PI_ai)`, both `n × k`.
    pub(crate) fn vote_weighted_sums(&self, w: &[T]) -> (Array2<T>, Array2<T>) {
        let (n, k) = (self.n(), self.k());
        let mut per_code = vec![T::zero(); self.signs.len()];
        if k > 0 && n > 0 {
            let codes = self.codes.as_slice().expect("batch tensors are contiguous");
            for (codes, w) in codes.chunks_exact(n).zip(w.chunks_exact(k)) {
                for &c in codes {
                    for (s, &x) in per_code[c as usize * k..(c as usize + 1) * k].iter_mut().zip(w) {
                        *s += x;
                    }
                }
            }
        }
        let mut signed = Array2::zeros((n, k));
        let mut coverage = Array2::zeros((n, k));
        for ((sums, signs), &i) in per_code.chunks_exact(k.max(1)).zip(self.signs.rows()).zip(&self.sign_plf) {
            for j in 0..k {
                signed[[i, j]] += signs[j] * sums[j];
                coverage[[i, j]] += sums[j];
            }
        }
        (signed, coverage)
    }
}

pub fn precompute_batch<T: Scalar>(specs: &[PlfSpec], votes: &VoteMatrix) -> Result<PrecomputedBatch<T>> {
    votes.validate(specs)?;
    let k = specs_k(specs)?;
    let (m, n) = (votes.m(), votes.n());
    // -log|N_ij| and -log|N_ij^C| per PLF and class
    let neg_log = |c: usize| if c == 0 { T::zero() } else { -count::<T>(c).ln() };
    let in_log: Vec<Vec<T>> = specs.iter().map(|s| s.consistent_counts().iter().map(|&c| neg_log(c)).collect()).collect();
    let out_log: Vec<Vec<T>> = specs.iter().map(|s| s.inconsistent_counts().iter().map(|&c| neg_log(c)).collect()).collect();
    // sign pattern of every codomain element, one row per (PLF, element)
    let mut first = Vec::with_capacity(n);
    let mut sign_plf = Vec::new();
    let mut sign_rows: Vec<T> = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        first.push(sign_plf.len());
        for t in s.codomain() {
            sign_plf.push(i);
            sign_rows.extend((0..k).map(|j| if t.contains(j) { T::one() } else { -T::one() }));
        }
    }
    let abstain_code = u32::try_from(sign_plf.len()).expect("codomain sizes fit in u32");
    sign_rows.extend(std::iter::repeat_n(T::zero(), k));

    let mut ai = vec![T::one(); m * n * k];
    let mut nlog = vec![T::zero(); m * n * k];
    let mut pi = vec![T::zero(); m * n];
    let mut masked_nlog = vec![T::zero(); m * k];
    let mut codes = vec![abstain_code; m * n];
    for a in 0..m {
        let sum = &mut masked_nlog[a * k..(a + 1) * k];
        for (i, vote) in votes.row(a).enumerate() {
            let at = (a * n + i) * k;
            let (ai, nlog) = (&mut ai[at..at + k], &mut nlog[at..at + k]);
            match vote {
                None => nlog.copy_from_slice(&in_log[i]),
                Some(v) => {
                    let code = first[i] + v;
                    pi[a * n + i] = T::one();
                    codes[a * n + i] = code as u32;
                    ai.copy_from_slice(&sign_rows[code * k..(code + 1) * k]);
                    for j in 0..k {
                        nlog[j] = if ai[j] > T::zero() { in_log[i][j] } else { out_log[i][j] };
                        sum[j] += nlog[j];
                    }
                }
            }
        }
    }
    let shape = "buffer sized to shape";
    let rows = sign_plf.len() + 1;
    Ok(PrecomputedBatch {
        ai: Array3::from_shape_vec((m, n, k), ai).expect(shape),
        nlog: Array3::from_shape_vec((m, n, k), nlog).expect(shape),
        pi: Array2::from_shape_vec((m, n), pi).expect(shape),
        masked_nlog: Array2::from_shape_vec((m, k), masked_nlog).expect(shape),
        codes: Array2::from_shape_vec((m, n), codes).expect(shape),
        signs: Array2::from_shape_vec((rows, k), sign_rows).expect(shape),
        sign_plf,
    })
}

/// `ZA_ij = -log(e^A_ij + e^-A_ij)`.
pub fn accuracy_normalizer<T: Scalar>(acc_logits: &Array2<T>) -> Array2<T> {
    acc_logits.mapv(|a| {
        let a = a.abs();
        -(a + (-(a + a)).exp().ln_1p())
    })
}

/// `ZB_i = -log(e^B_i + 1)`.
pub fn propensity_normalizer<T: Scalar>(prop_logits: &Array1<T>) -> Array1<T> {
    prop_logits.mapv(|b| -softplus(b))
}

fn check_batch<T: Scalar>(batch: &PrecomputedBatch<T>, params: &ModelParams<T>) -> Result<()> {
    params.check_shape(batch.n(), batch.k())
}

/// `log P(G_a | Y = y_j)` for every example and class, `m × k`.
///
/// With `T = A ∘ AI + NLOG + B + ZA` (broadcast over examples), this is
/// `Σ_i (ZB_i + PI_ai · T_aij)`.
pub fn class_log_likelihood<T: Scalar>(batch: &PrecomputedBatch<T>, params: &ModelParams<T>) -> Result<Array2<T>> {
    let mut ll = log_joint(batch, params)?;
    ll -= &params.class_balance().mapv(|p| p.ln());
    Ok(ll)
}

/// Row-by-row evaluation of `log P(y_j) + Σ_i (ZB_i + PI_ai · T_aij)`.
///
/// The PLF sum is split by linearity into `Σ_i PI_ai (A_ij·AI_aij + B_i +
/// ZA_ij)` and the cached parameter-free part `Σ_i PI_ai · NLOG_aij`. The
/// first term only depends on which element PLF `i` voted, so it is tabulated
/// once per call and gathered through the batch codes.
struct JointRows<'a, T> {
    n: usize,
    k: usize,
    codes: &'a [u32],
    masked_nlog: &'a [T],
    /// One row per batch code; the abstain row is zero.
    table: Vec<T>,
    prior: Vec<T>,
}

impl<'a, T: Scalar> JointRows<'a, T> {
    fn new(batch: &'a PrecomputedBatch<T>, params: &'a ModelParams<T>) -> Result<Self> {
        check_batch(batch, params)?;
        let k = batch.k();
        let zb_total: T = propensity_normalizer(params.prop_logits()).sum();
        let za = accuracy_normalizer(params.acc_logits());
        let (acc, b) = (params.acc_logits(), params.prop_logits());
        let mut table = vec![T::zero(); batch.signs.len()];
        for ((row, signs), &i) in table.chunks_exact_mut(k).zip(batch.signs.rows()).zip(&batch.sign_plf) {
            for j in 0..k {
                row[j] = acc[[i, j]] * signs[j] + b[i] + za[[i, j]];
            }
        }
        let contiguous = "batch tensors are contiguous";
        Ok(Self {
            n: batch.n(),
            k,
            codes: batch.codes.as_slice().expect(contiguous),
            masked_nlog: batch.masked_nlog.as_slice().expect(contiguous),
            table,
            prior: params.class_balance().iter().map(|&p| p.ln() + zb_total).collect(),
        })
    }

    /// Calls `emit` with each row of the log joint, in order.
    fn for_each_row(&self, emit: impl FnMut(&[T])) {
        match self.k {
            2 => self.fixed::<2>(emit),
            3 => self.fixed::<3>(emit),
            4 => self.fixed::<4>(emit),
            5 => self.fixed::<5>(emit),
            6 => self.fixed::<6>(emit),
            7 => self.fixed::<7>(emit),
            8 => self.fixed::<8>(emit),
            k => self.general(k, emit),
        }
    }

    /// Register-resident accumulators for small class counts.
    fn fixed<const K: usize>(&self, mut emit: impl FnMut(&[T])) {
        let n = self.n;
        let m = self.masked_nlog.len() / K;
        for a in 0..m {
            let mut sum = [T::zero(); K];
            let nl = &self.masked_nlog[a * K..(a + 1) * K];
            for j in 0..K {
                sum[j] = self.prior[j] + nl[j];
            }
            for &c in &self.codes[a * n..(a + 1) * n] {
                let t = &self.table[c as usize * K..(c as usize + 1) * K];
                for j in 0..K {
                    sum[j] += t[j];
                }
            }
            emit(&sum);
        }
    }

    fn general(&self, k: usize, mut emit: impl FnMut(&[T])) {
        let n = self.n;
        let m = self.masked_nlog.len().checked_div(k).unwrap_or(0);
        let mut row = vec![T::zero(); k];
        for a in 0..m {
            for ((r, &p), &nl) in row.iter_mut().zip(&self.prior).zip(&self.masked_nlog[a * k..(a + 1) * k]) {
                *r = p + nl;
            }
            for &c in &self.codes[a * n..(a + 1) * n] {
                let t = &self.table[c as usize * k..(c as usize + 1) * k];
                for (r, &x) in row.iter_mut().zip(t) {
                    *r += x;
                }
            }
            emit(&row);
        }
    }
}

/// `log Σ_j exp(row_j)` for each row.
pub(crate) fn row_log_sum_exp<T: Scalar>(joint: &Array2<T>) -> Array1<T> {
    let k = joint.ncols();
    if k == 0 {
        return Array1::from_elem(joint.nrows(), T::neg_infinity());
    }
    let joint = joint.as_standard_layout();
    let data = joint.as_slice().expect("standard layout");
    data.chunks_exact(k).map(lse_row).collect()
}

#[inline]
fn lse_row<T: Scalar>(row: &[T]) -> T {
    match row.len() {
        2 => lse_fixed::<T, 2>(row),
        3 => lse_fixed::<T, 3>(row),
        4 => lse_fixed::<T, 4>(row),
        5 => lse_fixed::<T, 5>(row),
        6 => lse_fixed::<T, 6>(row),
        7 => lse_fixed::<T, 7>(row),
        8 => lse_fixed::<T, 8>(row),
        _ => log_sum_exp(row.iter().copied()),
    }
}

/// The maximum is moved to the front so that only `K - 1` exponentials are
/// needed: `top + ln(1 + Σ_{j>0} exp(x_j - top))`. The sum is at least 1, so
/// plain `ln` costs at most an ulp of absolute error.
#[inline]
fn lse_fixed<T: Scalar, const K: usize>(row: &[T]) -> T {
    let mut x = [T::zero(); K];
    x.copy_from_slice(row);
    let mut at = 0;
    for j in 1..K {
        if x[j] > x[at] {
            at = j;
        }
    }
    x.swap(0, at);
    let top = x[0];
    if !top.is_finite() {
        return top;
    }
    let mut total = T::one();
    for &v in &x[1..] {
        total += (v - top).exp();
    }
    top + total.ln()
}

/// `log P(y_j) + log P(G_a | y_j)`, `m × k`.
pub fn log_joint<T: Scalar>(batch: &PrecomputedBatch<T>, params: &ModelParams<T>) -> Result<Array2<T>> {
    let rows = JointRows::new(batch, params)?;
    let mut out = Vec::with_capacity(batch.m() * batch.k());
    rows.for_each_row(|row| out.extend_from_slice(row));
    Ok(Array2::from_shape_vec((batch.m(), batch.k()), out).expect("one row per example"))
}

/// Per-example marginal log-likelihood from the indicator tensors.
pub fn vectorized_example_logliks<T: Scalar>(batch: &PrecomputedBatch<T>, params: &ModelParams<T>) -> Result<Array1<T>> {
    let rows = JointRows::new(batch, params)?;
    let mut out = Vec::with_capacity(batch.m());
    rows.for_each_row(|row| out.push(lse_row(row)));
    Ok(Array1::from(out))
}

pub fn vectorized_marginal_loglik<T: Scalar>(batch: &PrecomputedBatch<T>, params: &ModelParams<T>) -> Result<T> {
    Ok(vectorized_example_logliks(batch, params)?.sum())
}

/// Row-stochastic `m × k` matrix of class posteriors `P(Y | G)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<T> {
    probs: Array2<T>,
}

impl<T: Scalar> Posterior<T> {
    /// Normalizes each row of a log-joint matrix.
    pub fn from_log_joint(mut log_joint: Array2<T>) -> Self {
        for mut row in log_joint.rows_mut() {
            let norm = log_sum_exp(row.iter().copied());
            row.mapv_inplace(|x| (x - norm).exp());
        }
        Self { probs: log_joint }
    }

    pub fn from_probs(probs: Array2<T>) -> Result<Self> {
        let tol = T::lit(1e-6);
        for (a, row) in probs.rows().into_iter().enumerate() {
            if row.iter().any(|&p| p < T::zero() || !p.is_finite()) || (row.sum() - T::one()).abs() > tol {
                return Err(Error::InvalidParams(format!("posterior row {a} is not a distribution")));
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &Array2<T> {
        &self.probs
    }

    pub fn into_probs(self) -> Array2<T> {
        self.probs
    }

    pub fn m(&self) -> usize {
        self.probs.nrows()
    }

    pub fn k(&self) -> usize {
        self.probs.ncols()
    }

    /// Most probable class per row; ties go to the lower index.
    pub fn argmax(&self) -> Vec<usize> {
        self.probs
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |best, (j, &p)| if p > best.1 { (j, p) } else { best })
                    .0
            })
            .collect()
    }
}

pub fn posterior_from_batch<T: Scalar>(batch: &PrecomputedBatch<T>, params: &ModelParams<T>) -> Result<Posterior<T>> {
    Ok(Posterior::from_log_joint(log_joint(batch, params)?))
}

/// `P(Y | G)` for every row of `votes`.
pub fn posterior<T: Scalar>(specs: &[PlfSpec], params: &ModelParams<T>, votes: &VoteMatrix) -> Result<Posterior<T>> {
    check_inputs(specs, params, votes)?;
    let batch = precompute_batch(specs, votes)?;
    posterior_from_batch(&batch, params)
}

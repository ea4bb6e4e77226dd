//! Sufficient condition for generic identifiability of the label model, and a
//! numeric rank diagnostic on grouped conditional-probability matrices.
//!
//! The condition: the PLFs split into three disjoint non-empty groups such
//! that, in each of the first two groups, every class `y` can be isolated by
//! picking one codomain element per PLF whose intersection is exactly `{y}`.
//! Failing the check does not mean the model is non-identifiable; the
//! condition is only sufficient.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::label_space::{specs_k, LabelSpace, PlfSpec};
use crate::model::{accuracy_from_logit, conditional_prob_at, propensity_from_logit, ModelParams};
use crate::scalar::Scalar;

/// Largest PLF count searched exhaustively.
pub const EXHAUSTIVE_MAX_PLFS: usize = 12;
/// Largest class count for which Kruskal rank is computed.
pub const KRUSKAL_MAX_CLASSES: usize = 8;
/// Default cap on `k × |grouped codomain|`.
pub const DEFAULT_PRODUCT_CAP: u128 = 1_000_000;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Fixed-width class bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ClassSet(Vec<u64>);

impl ClassSet {
    fn full(k: usize) -> Self {
        let mut words = vec![u64::MAX; k.div_ceil(64)];
        if !k.is_multiple_of(64) {
            *words.last_mut().expect("k > 0") = (1u64 << (k % 64)) - 1;
        }
        Self(words)
    }

    fn from_members(k: usize, members: &[usize]) -> Self {
        let mut words = vec![0u64; k.div_ceil(64)];
        for &c in members {
            words[c / 64] |= 1 << (c % 64);
        }
        Self(words)
    }

    fn contains(&self, c: usize) -> bool {
        self.0[c / 64] & (1 << (c % 64)) != 0
    }

    fn intersect(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }

    fn is_singleton_of(&self, c: usize) -> bool {
        self.contains(c) && self.0.iter().map(|w| w.count_ones()).sum::<u32>() == 1
    }
}

/// For each PLF in `subset` (indices into `specs`), a codomain index such that
/// the chosen sets intersect to exactly `{class}`. `None` if no such choice
/// exists.
pub fn singleton_witness(specs: &[PlfSpec], subset: &[usize], class: usize) -> Option<Vec<usize>> {
    let k = specs.first()?.k();
    if subset.is_empty() || class >= k {
        return None;
    }
    let sets: Vec<Vec<ClassSet>> = subset
        .iter()
        .map(|&i| specs[i].codomain().iter().map(|t| ClassSet::from_members(k, t.members())).collect())
        .collect();
    let mut chosen = Vec::with_capacity(subset.len());
    search_witness(&sets, class, &ClassSet::full(k), &mut chosen).then_some(chosen)
}

fn search_witness(sets: &[Vec<ClassSet>], class: usize, current: &ClassSet, chosen: &mut Vec<usize>) -> bool {
    let depth = chosen.len();
    if current.is_singleton_of(class) {
        // remaining PLFs only need a set that keeps `class`
        for options in &sets[depth..] {
            match options.iter().position(|t| t.contains(class)) {
                Some(idx) => chosen.push(idx),
                None => {
                    chosen.truncate(depth);
                    return false;
                }
            }
        }
        return true;
    }
    if depth == sets.len() {
        return false;
    }
    for (idx, t) in sets[depth].iter().enumerate() {
        if !t.contains(class) {
            continue;
        }
        let next = current.intersect(t);
        chosen.push(idx);
        if search_witness(sets, class, &next, chosen) {
            return true;
        }
        chosen.truncate(depth);
    }
    false
}

/// Witnesses for every class over one PLF group.
fn group_witnesses(specs: &[PlfSpec], group: &[usize], k: usize) -> Option<Vec<Vec<usize>>> {
    (0..k).map(|y| singleton_witness(specs, group, y)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tripartition {
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub s3: Vec<usize>,
    /// `witnesses1[y][p]` is the codomain index chosen for PLF `s1[p]` to
    /// isolate class `y`.
    pub witnesses1: Vec<Vec<usize>>,
    pub witnesses2: Vec<Vec<usize>>,
}

impl Tripartition {
    /// Re-checks disjointness, coverage and every witness by direct
    /// intersection.
    pub fn verify(&self, specs: &[PlfSpec]) -> bool {
        let n = specs.len();
        let Some(k) = specs.first().map(PlfSpec::k) else { return false };
        let mut seen = vec![false; n];
        for &i in self.s1.iter().chain(&self.s2).chain(&self.s3) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        if seen.contains(&false) || self.s1.is_empty() || self.s2.is_empty() || self.s3.is_empty() {
            return false;
        }
        let check = |group: &[usize], witnesses: &[Vec<usize>]| {
            witnesses.len() == k
                && witnesses.iter().enumerate().all(|(y, choice)| {
                    choice.len() == group.len()
                        && group.iter().zip(choice).all(|(&i, &t)| t < specs[i].codomain().len())
                        && group
                            .iter()
                            .zip(choice)
                            .fold(ClassSet::full(k), |acc, (&i, &t)| {
                                acc.intersect(&ClassSet::from_members(k, specs[i].codomain()[t].members()))
                            })
                            .is_singleton_of(y)
                })
        };
        check(&self.s1, &self.witnesses1) && check(&self.s2, &self.witnesses2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exhaustive,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "status")]
pub enum IdentifiabilityReport {
    /// A tripartition meeting the sufficient condition was found.
    Satisfied { mode: SearchMode, partition: Tripartition },
    /// Exhaustive search found no tripartition. The model may still be
    /// identifiable; the condition is only sufficient.
    Unsatisfied { classes_without_witness: Vec<usize> },
    /// The heuristic search for large PLF sets failed; nothing is concluded.
    Unknown,
}

impl IdentifiabilityReport {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, IdentifiabilityReport::Satisfied { .. })
    }

    pub fn summary(&self, specs: &[PlfSpec]) -> String {
        let names = |g: &[usize]| g.iter().map(|&i| specs[i].name()).collect::<Vec<_>>().join(", ");
        match self {
            IdentifiabilityReport::Satisfied { mode, partition } => format!(
                "sufficient condition satisfied ({mode:?} search): generically identifiable up to label swapping\n  S1 = {{{}}}\n  S2 = {{{}}}\n  S3 = {{{}}}",
                names(&partition.s1),
                names(&partition.s2),
                names(&partition.s3)
            ),
            IdentifiabilityReport::Unsatisfied { classes_without_witness } => {
                let mut s = String::from(
                    "sufficient condition not satisfied by any tripartition (exhaustive search); \
                     this does not prove the model is non-identifiable",
                );
                if !classes_without_witness.is_empty() {
                    s.push_str(&format!(
                        "\n  classes that no PLF group can isolate: {classes_without_witness:?}"
                    ));
                }
                s
            }
            IdentifiabilityReport::Unknown => {
                "heuristic search found no tripartition; result unknown".to_owned()
            }
        }
    }
}

/// Searches for a tripartition meeting the sufficient identifiability
/// condition.
///
/// Exhaustive up to [`EXHAUSTIVE_MAX_PLFS`] PLFs; the first hit in ascending
/// `(S1, S2)` bitmask order is returned. Beyond that a greedy search is used
/// and a miss is reported as [`IdentifiabilityReport::Unknown`].
pub fn check_identifiability(specs: &[PlfSpec], space: LabelSpace) -> Result<IdentifiabilityReport> {
    let n = specs.len();
    if n < 3 {
        return Err(Error::TooFewPlfs(n));
    }
    let k = specs_k(specs)?;
    if k != space.k() {
        return Err(Error::ShapeMismatch(format!("PLFs have {k} classes, label space has {}", space.k())));
    }
    if n <= EXHAUSTIVE_MAX_PLFS {
        Ok(exhaustive(specs, k))
    } else {
        Ok(greedy(specs, k))
    }
}

fn members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask & (1 << i) != 0).collect()
}

fn exhaustive(specs: &[PlfSpec], k: usize) -> IdentifiabilityReport {
    let n = specs.len();
    let all = (1u32 << n) - 1;
    let mut cache: Vec<Option<Option<Vec<Vec<usize>>>>> = vec![None; 1 << n];
    let mut complete = |mask: u32| -> Option<Vec<Vec<usize>>> {
        cache[mask as usize]
            .get_or_insert_with(|| group_witnesses(specs, &members(mask, n), k))
            .clone()
    };
    for s1 in 1..all {
        let Some(w1) = complete(s1) else { continue };
        let rest = all & !s1;
        // ascending non-empty proper submasks of `rest`
        let mut subs: Vec<u32> = Vec::new();
        let mut s = rest;
        while s != 0 {
            if s != rest {
                subs.push(s);
            }
            s = (s - 1) & rest;
        }
        subs.sort_unstable();
        for s2 in subs {
            if let Some(w2) = complete(s2) {
                return IdentifiabilityReport::Satisfied {
                    mode: SearchMode::Exhaustive,
                    partition: Tripartition {
                        s1: members(s1, n),
                        s2: members(s2, n),
                        s3: members(rest & !s2, n),
                        witnesses1: w1,
                        witnesses2: w2,
                    },
                };
            }
        }
    }
    let everything: Vec<usize> = (0..n).collect();
    let classes_without_witness = (0..k).filter(|&y| singleton_witness(specs, &everything, y).is_none()).collect();
    IdentifiabilityReport::Unsatisfied { classes_without_witness }
}

/// Grows `S1` then `S2` one PLF at a time, preferring PLFs that isolate the
/// most classes, and leaves the remainder for `S3`.
fn greedy(specs: &[PlfSpec], k: usize) -> IdentifiabilityReport {
    let n = specs.len();
    let isolated = |group: &[usize]| (0..k).filter(|&y| singleton_witness(specs, group, y).is_some()).count();
    let mut unused: Vec<usize> = (0..n).collect();
    let mut groups: Vec<(Vec<usize>, Vec<Vec<usize>>)> = Vec::new();
    for _ in 0..2 {
        let mut group: Vec<usize> = Vec::new();
        let witnesses = loop {
            if let Some(w) = (!group.is_empty()).then(|| group_witnesses(specs, &group, k)).flatten() {
                break Some(w);
            }
            // keep at least one PLF for S3 and, while building S1, one for S2
            if unused.len() <= 2 - groups.len() {
                break None;
            }
            let best = unused
                .iter()
                .enumerate()
                .max_by_key(|&(pos, &i)| {
                    let mut g = group.clone();
                    g.push(i);
                    (isolated(&g), std::cmp::Reverse(pos))
                })
                .map(|(pos, _)| pos)
                .expect("unused non-empty");
            group.push(unused.remove(best));
        };
        match witnesses {
            Some(w) => {
                group.sort_unstable();
                groups.push((group, w));
            }
            None => return IdentifiabilityReport::Unknown,
        }
    }
    let (s2, w2) = groups.pop().expect("two groups");
    let (s1, w1) = groups.pop().expect("two groups");
    IdentifiabilityReport::Satisfied {
        mode: SearchMode::Heuristic,
        partition: Tripartition { s1, s2, s3: unused, witnesses1: w1, witnesses2: w2 },
    }
}

/// `k × Π_i (|T(G_i)| + 1)` matrix of joint output probabilities for a group
/// of PLFs. Columns enumerate output tuples in mixed-radix order with the last
/// PLF varying fastest; within a PLF, codomain indices come first and
/// abstain last.
pub fn grouped_conditional_matrix<T: Scalar>(
    specs: &[PlfSpec],
    subset: &[usize],
    params: &ModelParams<T>,
    cap: u128,
) -> Result<DMatrix<f64>> {
    let k = specs_k(specs)?;
    params.check_shape(specs.len(), k)?;
    if subset.is_empty() {
        return Err(Error::ShapeMismatch("empty PLF subset".into()));
    }
    let radices: Vec<usize> = subset.iter().map(|&i| specs[i].codomain().len() + 1).collect();
    let cols = radices.iter().fold(1u128, |acc, &r| acc.saturating_mul(r as u128));
    let size = cols.saturating_mul(k as u128);
    if size > cap {
        return Err(Error::ProductTooLarge { size, cap });
    }
    let cols = cols as usize;
    let alpha = params.acc_logits().mapv(accuracy_from_logit);
    let beta = params.prop_logits().mapv(propensity_from_logit);

    // per-PLF outcome probabilities, table[p][j][outcome]
    let mut table: Vec<Vec<Vec<f64>>> = Vec::with_capacity(subset.len());
    for (&i, &radix) in subset.iter().zip(&radices) {
        let mut rows = Vec::with_capacity(k);
        for j in 0..k {
            let row = (0..radix)
                .map(|o| {
                    let vote = (o + 1 < radix).then_some(o);
                    conditional_prob_at(&specs[i], alpha[[i, j]], beta[i], vote, j).map(T::to_f64_lossy)
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        table.push(rows);
    }

    let mut out = DMatrix::<f64>::zeros(k, cols);
    let mut digits = vec![0usize; subset.len()];
    for col in 0..cols {
        for j in 0..k {
            out[(j, col)] = digits.iter().enumerate().map(|(p, &o)| table[p][j][o]).product();
        }
        for p in (0..digits.len()).rev() {
            digits[p] += 1;
            if digits[p] < radices[p] {
                break;
            }
            digits[p] = 0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankDiagnostic {
    pub singular_values: Vec<f64>,
    pub row_rank: usize,
    /// Computed only for `k ≤ KRUSKAL_MAX_CLASSES`.
    pub kruskal_rank: Option<usize>,
    /// Set when the row rank is below `k` at this parameter point. A deficient
    /// point is not a proof of non-identifiability.
    pub rank_deficient: bool,
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `RANK_TOLERANCE` times the largest.
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    rank_from_singular_values(&sv)
}

fn rank_from_singular_values(sv: &[f64]) -> usize {
    let Some(&top) = sv.first() else { return 0 };
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * top).count()
}

/// Largest `r` such that every `r` rows of `m` are linearly independent.
pub fn kruskal_rank(m: &DMatrix<f64>) -> usize {
    let rows = m.nrows();
    let mut best = 0;
    for r in 1..=rows {
        let all_independent = subsets(rows, r).all(|idx| numeric_rank(&m.select_rows(idx.iter())) == r);
        if !all_independent {
            break;
        }
        best = r;
    }
    best
}

fn subsets(n: usize, r: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..(1 << n)).filter(move |m| m.count_ones() as usize == r).map(move |m| members(m, n))
}

pub fn rank_diagnostic(m: &DMatrix<f64>) -> RankDiagnostic {
    let singular_values = singular_values(m);
    let row_rank = rank_from_singular_values(&singular_values);
    let kruskal_rank = (m.nrows() <= KRUSKAL_MAX_CLASSES).then(|| kruskal_rank(m));
    RankDiagnostic { singular_values, row_rank, kruskal_rank, rank_deficient: row_rank < m.nrows() }
}

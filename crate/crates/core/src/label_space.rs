//! Label spaces, partial labels, PLF codomains and vote matrices.
//!
//! Classes are dense indices `0..k`. A PLF's codomain excludes the full label
//! set; abstention is carried by [`VoteMatrix`] as a sentinel instead.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelSpace {
    k: usize,
}

impl LabelSpace {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// A non-empty set of classes.
///
/// Members are kept sorted. When every member is below 64 a bitset mirror is
/// kept for constant-time membership tests.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PartialLabel {
    members: Vec<usize>,
    bits: Option<u64>,
}

impl PartialLabel {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::EmptyPartialLabel);
        }
        let bits = if members.last().is_some_and(|&c| c < 64) {
            Some(members.iter().fold(0u64, |acc, &c| acc | (1 << c)))
        } else {
            None
        };
        Ok(Self { members, bits })
    }

    pub fn singleton(class: usize) -> Self {
        Self::new([class]).expect("singleton is non-empty")
    }

    /// The full label set, i.e. an abstention.
    pub fn full(space: LabelSpace) -> Self {
        Self::new(0..space.k()).expect("k >= 2")
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn contains(&self, class: usize) -> bool {
        match self.bits {
            Some(bits) => class < 64 && bits & (1 << class) != 0,
            None => self.members.binary_search(&class).is_ok(),
        }
    }

    pub fn is_full(&self, space: LabelSpace) -> bool {
        self.members.len() == space.k() && self.members.last() == Some(&(space.k() - 1))
    }

    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }

    pub fn max_member(&self) -> usize {
        *self.members.last().expect("non-empty")
    }
}

impl fmt::Debug for PartialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(&self.members).finish()
    }
}

/// One partial labeling function: its codomain plus, per class, the number of
/// codomain elements that contain it (`consistent_counts`) and that do not
/// (`inconsistent_counts`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlfSpec {
    name: String,
    k: usize,
    codomain: Vec<PartialLabel>,
    consistent_counts: Vec<usize>,
    inconsistent_counts: Vec<usize>,
}

impl PlfSpec {
    /// Builds and validates a spec.
    pub fn new(name: impl Into<String>, codomain: Vec<PartialLabel>, space: LabelSpace) -> Result<Self> {
        let spec = Self::from_codomain(name, codomain, space);
        validate_plf_spec(&spec, space)?;
        Ok(spec)
    }

    /// Builds a spec and its counts without checking the codomain conditions.
    pub fn from_codomain(name: impl Into<String>, codomain: Vec<PartialLabel>, space: LabelSpace) -> Self {
        let k = space.k();
        let consistent_counts: Vec<usize> = (0..k)
            .map(|j| codomain.iter().filter(|t| t.contains(j)).count())
            .collect();
        let inconsistent_counts = consistent_counts.iter().map(|&c| codomain.len() - c).collect();
        Self {
            name: name.into(),
            k,
            codomain,
            consistent_counts,
            inconsistent_counts,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn codomain(&self) -> &[PartialLabel] {
        &self.codomain
    }

    /// `|N_ij|` for every class `j`.
    pub fn consistent_counts(&self) -> &[usize] {
        &self.consistent_counts
    }

    /// `|N_ij^C|` for every class `j`.
    pub fn inconsistent_counts(&self) -> &[usize] {
        &self.inconsistent_counts
    }

    pub fn index_of(&self, label: &PartialLabel) -> Option<usize> {
        self.codomain.iter().position(|t| t == label)
    }

    /// True when every codomain element is a single class.
    pub fn is_traditional(&self) -> bool {
        self.codomain.iter().all(PartialLabel::is_singleton)
    }

    /// Applies a class relabeling `perm[old] = new` to every codomain element.
    pub fn permute_classes(&self, perm: &[usize]) -> Self {
        let codomain = self
            .codomain
            .iter()
            .map(|t| PartialLabel::new(t.members().iter().map(|&c| perm[c])).expect("non-empty"))
            .collect();
        Self::from_codomain(self.name.clone(), codomain, LabelSpace { k: self.k })
    }
}

/// Checks the codomain conditions; returns the first violation found.
pub fn validate_plf_spec(spec: &PlfSpec, space: LabelSpace) -> Result<()> {
    let k = space.k();
    let plf = || spec.name.clone();
    for t in &spec.codomain {
        if t.max_member() >= k {
            return Err(Error::LabelOutOfRange { plf: plf(), label: t.max_member(), k });
        }
    }
    if spec.codomain.is_empty() {
        return Err(Error::EmptyCodomain { plf: plf() });
    }
    for (index, t) in spec.codomain.iter().enumerate() {
        if t.is_full(space) {
            return Err(Error::FullSetInCodomain { plf: plf(), index });
        }
        if spec.codomain[..index].contains(t) {
            return Err(Error::DuplicatePartialLabel { plf: plf(), index });
        }
    }
    if spec.k != k || spec.consistent_counts.len() != k || spec.inconsistent_counts.len() != k {
        return Err(Error::InconsistentCounts { plf: plf() });
    }
    for class in 0..k {
        let inside = spec.codomain.iter().filter(|t| t.contains(class)).count();
        if spec.consistent_counts[class] != inside
            || spec.inconsistent_counts[class] != spec.codomain.len() - inside
        {
            return Err(Error::InconsistentCounts { plf: plf() });
        }
        if inside == 0 {
            return Err(Error::ClassMissingFromCodomain { plf: plf(), class });
        }
        if inside == spec.codomain.len() {
            return Err(Error::ClassInEverySet { plf: plf(), class });
        }
    }
    Ok(())
}

/// An ordinary labeling function: codomain `[{0}, {1}, …, {k-1}]`.
pub fn traditional_lf(space: LabelSpace) -> PlfSpec {
    let codomain = (0..space.k()).map(PartialLabel::singleton).collect();
    PlfSpec::from_codomain("lf", codomain, space)
}

/// Checks every spec against `space`.
pub fn validate_specs(specs: &[PlfSpec], space: LabelSpace) -> Result<()> {
    specs.iter().try_for_each(|s| validate_plf_spec(s, space))
}

/// Number of classes shared by all specs.
pub fn specs_k(specs: &[PlfSpec]) -> Result<usize> {
    let k = specs
        .first()
        .map(PlfSpec::k)
        .ok_or_else(|| Error::ShapeMismatch("no PLFs given".into()))?;
    if specs.iter().any(|s| s.k() != k) {
        return Err(Error::ShapeMismatch("PLFs disagree on the number of classes".into()));
    }
    Ok(k)
}

/// `m × n` matrix of PLF outputs stored as codomain indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMatrix {
    m: usize,
    n: usize,
    data: Vec<u32>,
}

impl VoteMatrix {
    /// Raw sentinel used for abstentions.
    pub const ABSTAIN: u32 = u32::MAX;

    pub fn from_rows(n: usize, rows: &[Vec<Option<usize>>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * n);
        for (a, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "row {a} has {} votes, expected {n}",
                    row.len()
                )));
            }
            data.extend(row.iter().map(|v| encode(*v)));
        }
        Ok(Self { m: rows.len(), n, data })
    }

    pub fn all_abstain(m: usize, n: usize) -> Self {
        Self { m, n, data: vec![Self::ABSTAIN; m * n] }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize) -> Option<usize> {
        decode(self.data[a * self.n + i])
    }

    pub fn set(&mut self, a: usize, i: usize, vote: Option<usize>) {
        self.data[a * self.n + i] = encode(vote);
    }

    pub fn row(&self, a: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        self.data[a * self.n..(a + 1) * self.n].iter().map(|&v| decode(v))
    }

    /// Checks shapes and that every vote indexes its PLF's codomain.
    pub fn validate(&self, specs: &[PlfSpec]) -> Result<()> {
        if specs.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "{} PLF specs for {} vote columns",
                specs.len(),
                self.n
            )));
        }
        for a in 0..self.m {
            for (i, spec) in specs.iter().enumerate() {
                if let Some(v) = self.get(a, i) {
                    if v >= spec.codomain().len() {
                        return Err(Error::VoteNotInCodomain {
                            plf: spec.name().to_owned(),
                            vote: format!("index {v} (row {a})"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n);
        for &a in rows {
            data.extend_from_slice(&self.data[a * self.n..(a + 1) * self.n]);
        }
        Self { m: rows.len(), n: self.n, data }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.m * cols.len());
        for a in 0..self.m {
            data.extend(cols.iter().map(|&i| self.data[a * self.n + i]));
        }
        Self { m: self.m, n: cols.len(), data }
    }
}

#[inline]
fn encode(v: Option<usize>) -> u32 {
    match v {
        Some(v) => u32::try_from(v).ok().filter(|&v| v != VoteMatrix::ABSTAIN).expect("vote index fits in u32"),
        None => VoteMatrix::ABSTAIN,
    }
}

#[inline]
fn decode(v: u32) -> Option<usize> {
    (v != VoteMatrix::ABSTAIN).then_some(v as usize)
}

/// Indices of rows where at least one PLF did not abstain, in order.
pub fn coverage_filter(votes: &VoteMatrix) -> Vec<usize> {
    (0..votes.m())
        .filter(|&a| votes.row(a).any(|v| v.is_some()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pl(m: &[usize]) -> PartialLabel {
        PartialLabel::new(m.iter().copied()).unwrap()
    }

    fn space(k: usize) -> LabelSpace {
        LabelSpace::new(k).unwrap()
    }

    #[test]
    fn label_space_needs_two_classes() {
        assert!(LabelSpace::new(1).is_err());
        assert!(LabelSpace::new(0).is_err());
        assert_eq!(LabelSpace::new(2).unwrap().k(), 2);
    }

    #[test]
    fn dummy_set_example_is_valid() {
        let spec = PlfSpec::from_codomain("sports", vec![pl(&[0, 1]), pl(&[2])], space(3));
        validate_plf_spec(&spec, space(3)).unwrap();
        assert_eq!(spec.consistent_counts(), &[1, 1, 1]);
        assert_eq!(spec.inconsistent_counts(), &[1, 1, 1]);
    }

    #[test]
    fn stripes_example_is_valid() {
        let spec = PlfSpec::from_codomain("stripes", vec![pl(&[1, 3]), pl(&[0, 2])], space(4));
        validate_plf_spec(&spec, space(4)).unwrap();
    }

    #[test]
    fn class_in_every_set_is_rejected() {
        let spec = PlfSpec::from_codomain("bad", vec![pl(&[0, 1]), pl(&[0, 2])], space(3));
        assert!(matches!(
            validate_plf_spec(&spec, space(3)),
            Err(Error::ClassInEverySet { class: 0, .. })
        ));
    }

    #[test]
    fn other_violations_are_reported() {
        let s = space(3);
        let out_of_range = PlfSpec::from_codomain("x", vec![pl(&[0, 5]), pl(&[1])], s);
        assert!(matches!(validate_plf_spec(&out_of_range, s), Err(Error::LabelOutOfRange { label: 5, .. })));

        let empty = PlfSpec::from_codomain("x", vec![], s);
        assert!(matches!(validate_plf_spec(&empty, s), Err(Error::EmptyCodomain { .. })));

        let dup = PlfSpec::from_codomain("x", vec![pl(&[0]), pl(&[1, 2]), pl(&[0])], s);
        assert!(matches!(validate_plf_spec(&dup, s), Err(Error::DuplicatePartialLabel { index: 2, .. })));

        let missing = PlfSpec::from_codomain("x", vec![pl(&[0]), pl(&[1])], s);
        assert!(matches!(
            validate_plf_spec(&missing, s),
            Err(Error::ClassMissingFromCodomain { class: 2, .. })
        ));

        let full = PlfSpec::from_codomain("x", vec![pl(&[0, 1, 2]), pl(&[1])], s);
        assert!(matches!(validate_plf_spec(&full, s), Err(Error::FullSetInCodomain { index: 0, .. })));

        assert!(PartialLabel::new([]).is_err());
    }

    #[test]
    fn traditional_lfs() {
        let lf = traditional_lf(space(3));
        assert_eq!(lf.codomain(), &[pl(&[0]), pl(&[1]), pl(&[2])]);
        assert!(lf.is_traditional());
        assert_eq!(traditional_lf(space(2)).codomain(), &[pl(&[0]), pl(&[1])]);
        for k in 2..20 {
            validate_plf_spec(&traditional_lf(space(k)), space(k)).unwrap();
        }
    }

    #[test]
    fn wide_label_spaces_fall_back_to_member_lists() {
        let t = pl(&[3, 70, 100]);
        assert!(t.contains(70) && t.contains(3) && !t.contains(64));
        let narrow = pl(&[3, 63]);
        assert!(narrow.contains(63) && !narrow.contains(64) && !narrow.contains(100));
        let s = space(128);
        let lf = traditional_lf(s);
        validate_plf_spec(&lf, s).unwrap();
    }

    #[test]
    fn coverage_filter_examples() {
        let v = VoteMatrix::from_rows(2, &[vec![None, None], vec![Some(0), None], vec![None, Some(1)]]).unwrap();
        assert_eq!(coverage_filter(&v), vec![1, 2]);
        assert!(coverage_filter(&VoteMatrix::all_abstain(4, 3)).is_empty());
        let full = VoteMatrix::from_rows(2, &[vec![Some(0), Some(1)], vec![Some(1), Some(0)]]).unwrap();
        assert_eq!(coverage_filter(&full), vec![0, 1]);
    }

    #[test]
    fn vote_validation() {
        let s = space(3);
        let specs = vec![traditional_lf(s), PlfSpec::new("p", vec![pl(&[0, 1]), pl(&[2])], s).unwrap()];
        let ok = VoteMatrix::from_rows(2, &[vec![Some(2), Some(1)], vec![None, Some(0)]]).unwrap();
        ok.validate(&specs).unwrap();
        let bad = VoteMatrix::from_rows(2, &[vec![Some(0), Some(2)]]).unwrap();
        assert!(matches!(bad.validate(&specs), Err(Error::VoteNotInCodomain { .. })));
        assert!(matches!(ok.validate(&specs[..1]), Err(Error::ShapeMismatch(_))));
        assert!(VoteMatrix::from_rows(2, &[vec![Some(0)]]).is_err());
    }

    fn arb_votes() -> impl Strategy<Value = VoteMatrix> {
        (1usize..5, 0usize..30).prop_flat_map(|(n, m)| {
            proptest::collection::vec(proptest::collection::vec(proptest::option::of(0usize..3), n), m)
                .prop_map(move |rows| VoteMatrix::from_rows(n, &rows).unwrap())
        })
    }

    fn arb_codomain(k: usize) -> impl Strategy<Value = Vec<PartialLabel>> {
        proptest::collection::btree_set(1u64..(1 << k) - 1, 1..6).prop_map(move |masks| {
            masks
                .into_iter()
                .map(|mask| PartialLabel::new((0..k).filter(|&c| mask & (1 << c) != 0)).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn coverage_filter_is_idempotent_subsequence(v in arb_votes()) {
            let kept = coverage_filter(&v);
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(kept.iter().all(|&a| a < v.m()));
            let sub = v.select_rows(&kept);
            prop_assert_eq!(coverage_filter(&sub), (0..sub.m()).collect::<Vec<_>>());
        }

        #[test]
        fn counts_partition_the_codomain(codomain in arb_codomain(4)) {
            let s = space(4);
            let spec = PlfSpec::from_codomain("p", codomain, s);
            if validate_plf_spec(&spec, s).is_ok() {
                for j in 0..4 {
                    let (c, ic) = (spec.consistent_counts()[j], spec.inconsistent_counts()[j]);
                    prop_assert!(c >= 1 && ic >= 1);
                    prop_assert_eq!(c + ic, spec.codomain().len());
                }
            }
        }
    }
}

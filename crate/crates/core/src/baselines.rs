//! Comparison methods: Nearest Class aggregation and the LFs-only reduction.

use crate::label_space::{PlfSpec, VoteMatrix};
use crate::scalar::Scalar;

/// One hard label per example; `None` where every PLF abstained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardLabels {
    pub labels: Vec<Option<usize>>,
}

impl HardLabels {
    pub fn m(&self) -> usize {
        self.labels.len()
    }

    /// Replaces unlabeled rows with `fallback`.
    pub fn filled(&self, fallback: usize) -> Vec<usize> {
        self.labels.iter().map(|l| l.unwrap_or(fallback)).collect()
    }
}

/// Per row, the class contained in the most non-abstaining votes.
///
/// Ties go to the class with the larger `balance` entry, then the lower index.
/// `balance` must have one entry per class.
pub fn nearest_class<T: Scalar>(specs: &[PlfSpec], votes: &VoteMatrix, balance: &[T]) -> HardLabels {
    let k = balance.len();
    let mut counts = vec![0usize; k];
    let labels = (0..votes.m())
        .map(|a| {
            counts.iter_mut().for_each(|c| *c = 0);
            let mut any = false;
            for (i, vote) in votes.row(a).enumerate() {
                if let Some(v) = vote {
                    any = true;
                    for &c in specs[i].codomain()[v].members() {
                        counts[c] += 1;
                    }
                }
            }
            any.then(|| {
                (0..k)
                    .max_by(|&x, &y| {
                        counts[x]
                            .cmp(&counts[y])
                            .then(balance[x].partial_cmp(&balance[y]).unwrap_or(std::cmp::Ordering::Equal))
                            .then(y.cmp(&x))
                    })
                    .expect("k >= 1")
            })
        })
        .collect();
    HardLabels { labels }
}

/// The traditional labeling functions among `specs`, and their vote columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LfsOnly {
    pub specs: Vec<PlfSpec>,
    pub votes: VoteMatrix,
    /// Original column index of each retained PLF.
    pub kept: Vec<usize>,
}

impl LfsOnly {
    /// True when no PLF had an all-singleton codomain.
    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }
}

/// Keeps only PLFs whose codomain is made of singletons.
pub fn lfs_only(specs: &[PlfSpec], votes: &VoteMatrix) -> LfsOnly {
    let kept: Vec<usize> = specs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_traditional())
        .map(|(i, _)| i)
        .collect();
    LfsOnly {
        specs: kept.iter().map(|&i| specs[i].clone()).collect(),
        votes: votes.select_columns(&kept),
        kept,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_space::{traditional_lf, LabelSpace, PartialLabel};

    fn pl(m: &[usize]) -> PartialLabel {
        PartialLabel::new(m.iter().copied()).unwrap()
    }

    #[test]
    fn nc_picks_most_compatible_class() {
        let s = LabelSpace::new(3).unwrap();
        let specs = vec![
            PlfSpec::new("a", vec![pl(&[0, 1]), pl(&[2])], s).unwrap(),
            PlfSpec::new("b", vec![pl(&[1, 2]), pl(&[0])], s).unwrap(),
        ];
        let votes = VoteMatrix::from_rows(2, &[vec![Some(0), Some(0)], vec![None, None]]).unwrap();
        let out = nearest_class(&specs, &votes, &[1.0 / 3.0; 3]);
        assert_eq!(out.labels, vec![Some(1), None]);
    }

    #[test]
    fn nc_ties_follow_balance_then_index() {
        let s = LabelSpace::new(3).unwrap();
        let specs = vec![PlfSpec::new("a", vec![pl(&[0, 2]), pl(&[1])], s).unwrap()];
        let votes = VoteMatrix::from_rows(1, &[vec![Some(0)]]).unwrap();
        assert_eq!(nearest_class(&specs, &votes, &[0.2, 0.3, 0.5]).labels, vec![Some(2)]);
        assert_eq!(nearest_class(&specs, &votes, &[0.5, 0.3, 0.2]).labels, vec![Some(0)]);
        assert_eq!(nearest_class(&specs, &votes, &[0.4, 0.2, 0.4]).labels, vec![Some(0)]);
    }

    #[test]
    fn lfs_only_keeps_singleton_codomains() {
        let s = LabelSpace::new(3).unwrap();
        let partial = PlfSpec::new("p", vec![pl(&[0, 1]), pl(&[2])], s).unwrap();
        let specs = vec![
            partial.clone(),
            traditional_lf(s).renamed("lf1"),
            partial.clone().renamed("p2"),
            traditional_lf(s).renamed("lf2"),
            partial.renamed("p3"),
        ];
        let votes = VoteMatrix::from_rows(5, &[vec![Some(0), Some(2), None, Some(1), Some(1)]]).unwrap();
        let out = lfs_only(&specs, &votes);
        assert_eq!(out.kept, vec![1, 3]);
        assert_eq!(out.votes.row(0).collect::<Vec<_>>(), vec![Some(2), Some(1)]);
        let again = lfs_only(&out.specs, &out.votes);
        assert_eq!(again.specs, out.specs);
        assert_eq!(again.votes, out.votes);

        let none = lfs_only(&specs[..1], &votes.select_columns(&[0]));
        assert!(none.is_empty());
        assert_eq!(none.votes.n(), 0);
    }
}

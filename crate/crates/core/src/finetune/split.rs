use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&f| f <= 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("split fractions must be positive and sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits<R> {
    pub train: Vec<R>,
    pub val: Vec<R>,
    pub test: Vec<R>,
}

// ceil() that ignores float noise such as 2.0000000000000004
fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Splits class-grouped indices into two parts, the second holding
/// `ceil(second_fraction · N)` items allocated across classes by largest
/// remainder. Each part keeps input order.
fn two_way<G: Rng + ?Sized>(groups: &[Vec<usize>], second_fraction: f64, rng: &mut G) -> (Vec<usize>, Vec<usize>) {
    let total: usize = groups.iter().map(Vec::len).sum();
    let n_first = total - ceil_count(second_fraction * total as f64).min(total);
    let quotas: Vec<f64> = groups
        .iter()
        .map(|g| n_first as f64 * g.len() as f64 / total as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - alloc[a] as f64, quotas[b] - alloc[b] as f64);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n_first - alloc.iter().sum::<usize>();
    for i in order.into_iter().cycle().take(groups.len() * 2) {
        if left == 0 {
            break;
        }
        if alloc[i] < groups[i].len() {
            alloc[i] += 1;
            left -= 1;
        }
    }
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for (g, take) in groups.iter().zip(alloc) {
        let mut shuffled = g.clone();
        shuffled.shuffle(rng);
        first.extend_from_slice(&shuffled[..take]);
        second.extend_from_slice(&shuffled[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}

fn group_by<L: Ord>(indices: &[usize], labels: &[L]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        groups.entry(&labels[i]).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Two-stage stratified split: train vs the rest, then the rest into
/// validation and test, both stages stratified by label and seeded by
/// `spec.seed`.
pub fn split_stratified<R, L, F>(records: &[R], label_of: F, spec: &SplitSpec) -> Result<Splits<R>>
where
    R: Clone,
    L: Ord + std::fmt::Debug,
    F: Fn(&R) -> L,
{
    spec.validate()?;
    let labels: Vec<L> = records.iter().map(&label_of).collect();
    let all: Vec<usize> = (0..records.len()).collect();
    let groups = group_by(&all, &labels);
    if groups.len() < 2 {
        return Err(Error::InvalidConfig("stratified split needs at least two classes".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 3) {
        return Err(Error::ClassTooSmall(format!("{:?} has {} members", labels[g[0]], g.len())));
    }
    let mut r = rng::stream(spec.seed, "split");
    let (train, rest) = two_way(&groups, spec.val + spec.test, &mut r);
    let rest_groups = group_by(&rest, &labels);
    let (val, test) = two_way(&rest_groups, spec.test / (spec.val + spec.test), &mut r);
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect();
    Ok(Splits {
        train: pick(&train),
        val: pick(&val),
        test: pick(&test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_items_two_classes() {
        let recs: Vec<(usize, char)> = (0..10).map(|i| (i, if i < 5 { 'A' } else { 'B' })).collect();
        let s = split_stratified(&recs, |r| r.1, &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
        for (part, frac) in [(&s.train, 0.7), (&s.val, 0.1), (&s.test, 0.2)] {
            for c in ['A', 'B'] {
                let n = part.iter().filter(|r| r.1 == c).count() as f64;
                assert!((n - 5.0 * frac).abs() <= 1.0);
            }
        }
        let again = split_stratified(&recs, |r| r.1, &SplitSpec::default()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn errors() {
        let one_class = vec!['A'; 10];
        assert!(split_stratified(&one_class, |c| *c, &SplitSpec::default()).is_err());
        let tiny = vec!['A', 'A', 'A', 'B', 'B'];
        let err = split_stratified(&tiny, |c| *c, &SplitSpec::default()).unwrap_err();
        assert!(matches!(err, Error::ClassTooSmall(_)));
        let bad = SplitSpec {
            train: 0.5,
            ..SplitSpec::default()
        };
        assert!(split_stratified(&['A', 'B'], |c| *c, &bad).is_err());
    }
}

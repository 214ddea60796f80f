use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::Label;
use crate::{Error, Result};

/// Classes whose proportional allocation falls below this many members are
/// included in full.
pub const FORCED_INCLUSION_THRESHOLD: f64 = 5.0;

/// Cochran's sample size with `p = 0.5` and finite-population correction,
/// rounded up and capped at `population`.
pub fn sample_size(population: usize, margin: f64, confidence: f64) -> usize {
    if population == 0 {
        return 0;
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 + confidence / 2.0);
    let n0 = z * z * 0.25 / (margin * margin);
    let n = n0 / (1.0 + (n0 - 1.0) / population as f64);
    (n.ceil() as usize).clamp(1, population)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub population: usize,
    pub margin: f64,
    pub confidence: f64,
    pub sample_size: usize,
    pub forced_classes: Vec<Label>,
}

impl SamplePlan {
    /// Sizes the sample for the population described by `class_counts` and
    /// marks under-represented classes for full inclusion.
    pub fn new(class_counts: &BTreeMap<Label, usize>, margin: f64, confidence: f64) -> Result<Self> {
        if !(margin > 0.0 && margin < 1.0) || !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::InvalidConfig("margin and confidence must lie in (0, 1)".into()));
        }
        let population: usize = class_counts.values().sum();
        if population == 0 {
            return Err(Error::EmptyCorpus);
        }
        let n = sample_size(population, margin, confidence);
        let forced_classes = class_counts
            .iter()
            .filter(|&(_, &c)| c > 0 && (n as f64) * (c as f64) / (population as f64) < FORCED_INCLUSION_THRESHOLD)
            .map(|(&l, _)| l)
            .collect();
        Ok(Self {
            population,
            margin,
            confidence,
            sample_size: n,
            forced_classes,
        })
    }
}

/// Largest-remainder proportional allocation of `n` over `counts`.
fn allocate(counts: &[(Label, usize)], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().map(|(_, c)| c).sum();
    let quotas: Vec<f64> = counts.iter().map(|&(_, c)| n as f64 * c as f64 / total as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - alloc.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        if alloc[i] < counts[i].1 {
            alloc[i] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Proportional-by-class sample of `plan.sample_size` items, united with
/// every member of the plan's forced classes. Output keeps input order.
pub fn stratified_validation_sample<R, F, G>(records: &[R], label_of: F, plan: &SamplePlan, rng: &mut G) -> Result<Vec<R>>
where
    R: Clone,
    F: Fn(&R) -> Label,
    G: Rng + ?Sized,
{
    if plan.sample_size > records.len() {
        return Err(Error::SampleTooLarge {
            n: plan.sample_size,
            population: records.len(),
        });
    }
    let mut members: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        members.entry(label_of(r)).or_default().push(i);
    }
    let counts: Vec<(Label, usize)> = members.iter().map(|(&l, v)| (l, v.len())).collect();
    let alloc = allocate(&counts, plan.sample_size);

    let mut chosen = vec![false; records.len()];
    for ((label, idxs), take) in members.iter().zip(alloc) {
        if plan.forced_classes.contains(label) {
            idxs.iter().for_each(|&i| chosen[i] = true);
            continue;
        }
        for &i in idxs.choose_multiple(rng, take) {
            chosen[i] = true;
        }
    }
    Ok(records
        .iter()
        .zip(chosen)
        .filter_map(|(r, keep)| keep.then(|| r.clone()))
        .collect())
}

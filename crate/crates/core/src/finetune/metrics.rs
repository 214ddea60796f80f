use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `w_c = N / (K · n_c)` over the classes present in `labels`.
pub fn class_weights<L: Ord + Clone>(labels: &[L]) -> BTreeMap<L, f64> {
    let mut counts: BTreeMap<L, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.clone()).or_insert(0) += 1;
    }
    let n = labels.len() as f64;
    let k = counts.len() as f64;
    counts.into_iter().map(|(l, c)| (l, n / (k * c as f64))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores<L> {
    pub class: L,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Per-class precision, recall and F1 over the classes found in `gold`.
pub fn classification_report<L: Ord + Clone>(predictions: &[L], gold: &[L]) -> Result<Vec<ClassScores<L>>> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch(predictions.len(), gold.len()));
    }
    let mut classes: Vec<L> = gold.to_vec();
    classes.sort();
    classes.dedup();
    Ok(classes
        .into_iter()
        .map(|c| {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for (p, g) in predictions.iter().zip(gold) {
                match (p == &c, g == &c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                class: c,
                precision,
                recall,
                f1,
                support: tp + fn_,
            }
        })
        .collect())
}

/// Unweighted mean of per-class F1 over the gold class set.
pub fn macro_f1<L: Ord + Clone>(predictions: &[L], gold: &[L]) -> Result<f64> {
    let report = classification_report(predictions, gold)?;
    if report.is_empty() {
        return Ok(0.0);
    }
    Ok(report.iter().map(|c| c.f1).sum::<f64>() / report.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights() {
        let w = class_weights(&["A", "A", "B", "B"]);
        assert_eq!(w["A"], 1.0);
        assert_eq!(w["B"], 1.0);
        let w = class_weights(&["A", "A", "B"]);
        assert_eq!(w["A"], 0.75);
        assert_eq!(w["B"], 1.5);
        assert_eq!(class_weights(&["B", "A", "A"]), w);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(macro_f1(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        let f = macro_f1(&["A", "B", "B", "B"], &["A", "A", "B", "B"]).unwrap();
        assert!((f - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert_eq!(macro_f1(&[1, 0, 1, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert!(macro_f1(&[1], &[1, 2]).is_err());
    }
}

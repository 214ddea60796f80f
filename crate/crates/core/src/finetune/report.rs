use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::metrics::{classification_report, ClassScores};
use super::split::Splits;
use super::train::{finetune_run, Example, FinetuneConfig, FinetuneOutcome, SequenceClassifier};
use crate::encoder::EncoderConfig;
use crate::{rng, Error, Result};

/// Mean macro F1 over repeated runs with a 95% Student-t interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub task: String,
    pub runs: Vec<f64>,
    pub mean: f64,
    /// Half-width of the interval; 0 when it is undefined.
    pub ci_half_width: f64,
    /// Half-width as a percentage of the mean.
    pub ci_relative_pct: f64,
    /// False with a single run, where no interval exists.
    pub ci_defined: bool,
    /// Per-class scores on the test split, averaged over runs.
    pub per_class: Vec<ClassScores<String>>,
}

impl MetricsReport {
    /// `model<TAB>task<TAB>mean<TAB>±abs (±rel%)`
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{:.4}\t±{:.4} (±{:.2}%)",
            self.model, self.task, self.mean, self.ci_half_width, self.ci_relative_pct
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Summarizes per-run scores: mean ± `t_{0.975, r−1} · s / √r`.
pub fn repeat_with_ci(model: &str, task: &str, runs: &[f64]) -> Result<MetricsReport> {
    if runs.is_empty() {
        return Err(Error::InvalidConfig("at least one run is required".into()));
    }
    if runs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let r = runs.len() as f64;
    let mean = runs.iter().sum::<f64>() / r;
    let (half, defined) = if runs.len() < 2 {
        (0.0, false)
    } else if runs.iter().all(|&x| x == runs[0]) {
        (0.0, true)
    } else {
        let var = runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
        let t = StudentsT::new(0.0, 1.0, r - 1.0)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .inverse_cdf(0.975);
        (t * var.sqrt() / r.sqrt(), true)
    };
    Ok(MetricsReport {
        model: model.to_string(),
        task: task.to_string(),
        runs: runs.to_vec(),
        mean,
        ci_half_width: half,
        ci_relative_pct: if mean != 0.0 { 100.0 * half / mean } else { 0.0 },
        ci_defined: defined,
        per_class: Vec::new(),
    })
}

/// Fine-tunes `cfg.repeats` fresh models on fixed splits, each with its own
/// initialization and batch order, and reports test macro F1 across runs.
/// `class_names[i]` names label index `i` in the per-class table.
pub fn repeat_finetune(
    model_name: &str,
    task: &str,
    config: &EncoderConfig,
    data: &Splits<Example>,
    cfg: &FinetuneConfig,
    class_names: &[String],
) -> Result<(MetricsReport, Vec<FinetuneOutcome>)> {
    cfg.validate()?;
    if data.test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let gold: Vec<usize> = data.test.iter().map(|e| e.label).collect();
    let seqs: Vec<_> = data.test.iter().map(|e| e.seq.clone()).collect();
    let mut scores = Vec::new();
    let mut outcomes = Vec::new();
    let mut per_class: Vec<ClassScores<String>> = Vec::new();
    for r in 0..cfg.repeats {
        let mut init = rng::stream(cfg.seed, &format!("finetune_init_{r}"));
        let mut order = rng::stream(cfg.seed, &format!("finetune_order_{r}"));
        let mut model = SequenceClassifier::new(config.clone(), &mut init)?;
        outcomes.push(finetune_run(&mut model, data, cfg, &mut order)?);
        let pred = model.predict(&seqs, 64)?;
        let report = classification_report(&pred, &gold)?;
        scores.push(report.iter().map(|c| c.f1).sum::<f64>() / report.len() as f64);
        if per_class.is_empty() {
            per_class = report
                .iter()
                .map(|c| ClassScores {
                    class: class_names.get(c.class).cloned().unwrap_or_else(|| c.class.to_string()),
                    precision: 0.0,
                    recall: 0.0,
                    f1: 0.0,
                    support: c.support,
                })
                .collect();
        }
        for (acc, c) in per_class.iter_mut().zip(&report) {
            acc.precision += c.precision / cfg.repeats as f64;
            acc.recall += c.recall / cfg.repeats as f64;
            acc.f1 += c.f1 / cfg.repeats as f64;
        }
    }
    let mut report = repeat_with_ci(model_name, task, &scores)?;
    report.per_class = per_class;
    Ok((report, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_runs() {
        let r = repeat_with_ci("m", "t", &[0.70, 0.80]).unwrap();
        assert!((r.mean - 0.75).abs() < 1e-12);
        assert!((r.ci_half_width - 0.635).abs() < 1e-3, "{}", r.ci_half_width);
        assert!(r.ci_defined);
    }

    #[test]
    fn identical_and_single_runs() {
        let r = repeat_with_ci("m", "t", &[0.8; 3]).unwrap();
        assert_eq!(r.ci_half_width, 0.0);
        let r = repeat_with_ci("m", "t", &[0.8]).unwrap();
        assert!(!r.ci_defined);
        assert_eq!(r.ci_half_width, 0.0);
        assert!(r.tsv_row().starts_with("m\tt\t0.8000\t±0.0000"));
    }
}

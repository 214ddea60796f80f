use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Label;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaReport<L = Label> {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    /// Classes indexing the confusion matrix, sorted.
    pub classes: Vec<L>,
    /// `confusion[i][j]`: items labelled `classes[i]` by the first rater and
    /// `classes[j]` by the second.
    pub confusion: Vec<Vec<usize>>,
}

/// Cohen's kappa `(p_o − p_e) / (1 − p_e)` with `p_e` from the marginal
/// products. When `p_e = 1` both raters used one identical constant label
/// and kappa is 1.
pub fn cohens_kappa<L: Ord + Clone>(a: &[L], b: &[L]) -> Result<KappaReport<L>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let classes: Vec<L> = a.iter().chain(b).cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index = |l: &L| classes.binary_search(l).expect("class collected above");
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (x, y) in a.iter().zip(b) {
        confusion[index(x)][index(y)] += 1;
    }
    let n = a.len() as f64;
    let agree: usize = (0..k).map(|i| confusion[i][i]).sum();
    let p_o = agree as f64 / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: usize = confusion[i].iter().sum();
            let col: usize = confusion.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    let kappa = if (1.0 - p_e).abs() < f64::EPSILON {
        1.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok(KappaReport {
        kappa,
        p_o,
        p_e,
        classes,
        confusion,
    })
}

/// Conventional reading of a kappa value.
pub fn interpretation_band(kappa: f64) -> &'static str {
    match kappa {
        k if k >= 0.81 => "almost perfect",
        k if k >= 0.61 => "substantial",
        k if k >= 0.41 => "moderate",
        k if k >= 0.21 => "fair",
        k if k > 0.0 => "none to slight",
        _ => "no agreement",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanAgreement {
    pub annotator: String,
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub band: String,
    pub classes: Vec<Label>,
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sample_size: usize,
    pub kappa_per_human: Vec<HumanAgreement>,
}

/// One kappa per human annotator against the machine labels. Every human
/// set must cover exactly the machine-labelled ids.
pub fn validation_report(
    machine: &[(String, Label)],
    humans: &[(String, Vec<(String, Label)>)],
) -> Result<ValidationReport> {
    let mut kappa_per_human = Vec::with_capacity(humans.len());
    for (name, labels) in humans {
        if labels.len() != machine.len() {
            return Err(Error::IdMisalignment(format!(
                "{name}: {} labels for {} sampled ids",
                labels.len(),
                machine.len()
            )));
        }
        let by_id: HashMap<&str, Label> = labels.iter().map(|(id, l)| (id.as_str(), *l)).collect();
        if by_id.len() != labels.len() {
            return Err(Error::IdMisalignment(format!("{name}: duplicate ids")));
        }
        let mut human = Vec::with_capacity(machine.len());
        for (id, _) in machine {
            let l = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::IdMisalignment(format!("{name}: missing id {id}")))?;
            human.push(*l);
        }
        let machine_labels: Vec<Label> = machine.iter().map(|(_, l)| *l).collect();
        let r = cohens_kappa(&machine_labels, &human)?;
        kappa_per_human.push(HumanAgreement {
            annotator: name.clone(),
            kappa: r.kappa,
            p_o: r.p_o,
            p_e: r.p_e,
            band: interpretation_band(r.kappa).to_string(),
            classes: r.classes,
            confusion: r.confusion,
        });
    }
    Ok(ValidationReport {
        sample_size: machine.len(),
        kappa_per_human,
    })
}

/// Reads an `id,label` CSV with a header row.
pub fn read_label_csv(path: &Path) -> Result<Vec<(String, Label)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let label = rec.get(1).unwrap_or_default().parse()?;
        out.push((id, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn two_class_confusion() {
        // 45 agree-Request, 5 R/O, 5 O/R, 45 agree-Offer
        let mut a = vec![Request; 50];
        a.extend(vec![Offer; 50]);
        let mut b = vec![Request; 45];
        b.extend(vec![Offer; 5]);
        b.extend(vec![Request; 5]);
        b.extend(vec![Offer; 45]);
        let r = cohens_kappa(&a, &b).unwrap();
        assert!((r.p_o - 0.9).abs() < 1e-15);
        assert!((r.p_e - 0.5).abs() < 1e-15);
        assert!((r.kappa - 0.8).abs() < 1e-12);
        assert_eq!(r.confusion, vec![vec![45, 5], vec![5, 45]]);
    }

    #[test]
    fn degenerate_and_constant() {
        let same = vec![Offer; 5];
        assert_eq!(cohens_kappa(&same, &same).unwrap().kappa, 1.0);
        let a = vec![Offer, Request, Offer, Irrelevant];
        let r = cohens_kappa(&a, &[Offer; 4]).unwrap();
        assert!(r.kappa <= 0.0);
        assert!(cohens_kappa(&a, &a[..3]).is_err());
    }

    #[test]
    fn bands() {
        assert_eq!(interpretation_band(0.934), "almost perfect");
        assert_eq!(interpretation_band(0.924), "almost perfect");
        assert_eq!(interpretation_band(0.7), "substantial");
        assert_eq!(interpretation_band(-0.1), "no agreement");
    }

    #[test]
    fn report_aligns_by_id() {
        let machine: Vec<(String, Label)> = vec![("a".into(), Offer), ("b".into(), Request)];
        let h1 = ("h1".to_string(), vec![("b".to_string(), Request), ("a".to_string(), Offer)]);
        let r = validation_report(&machine, &[h1.clone(), h1]).unwrap();
        assert!(r.kappa_per_human.iter().all(|h| h.kappa == 1.0));
        let bad = ("h2".to_string(), vec![("a".to_string(), Offer), ("c".to_string(), Offer)]);
        assert!(matches!(validation_report(&machine, &[bad]), Err(Error::IdMisalignment(_))));
    }
}

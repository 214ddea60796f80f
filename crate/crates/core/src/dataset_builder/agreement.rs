use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Label;
use crate::corpus::RawRecord;
use crate::{Error, Result};

/// Per-record labels from `M ≥ 2` annotators. A cell that failed to parse
/// into a [`Label`] is `None` and counts as disagreement.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationMatrix {
    ids: Vec<String>,
    annotators: Vec<String>,
    rows: Vec<Vec<Option<Label>>>,
}

impl AnnotationMatrix {
    pub fn new(ids: Vec<String>, annotators: Vec<String>, rows: Vec<Vec<Option<Label>>>) -> Result<Self> {
        if annotators.len() < 2 {
            return Err(Error::InvalidConfig("need at least two annotators".into()));
        }
        if ids.len() != rows.len() {
            return Err(Error::LengthMismatch(ids.len(), rows.len()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != annotators.len()) {
            return Err(Error::LengthMismatch(bad.len(), annotators.len()));
        }
        Ok(Self { ids, annotators, rows })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn rows(&self) -> &[Vec<Option<Label>>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reorders annotator columns; `order[k]` is the old index of new column `k`.
    pub fn permute_columns(&self, order: &[usize]) -> Result<Self> {
        let mut check = order.to_vec();
        check.sort_unstable();
        if check != (0..self.annotators.len()).collect::<Vec<_>>() {
            return Err(Error::InvalidConfig("not a column permutation".into()));
        }
        Ok(Self {
            ids: self.ids.clone(),
            annotators: order.iter().map(|&i| self.annotators[i].clone()).collect(),
            rows: self.rows.iter().map(|r| order.iter().map(|&i| r[i]).collect()).collect(),
        })
    }

    /// CSV with header `id,annotator_1,…,annotator_M`.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || header.get(0).map(str::trim) != Some("id") {
            return Err(Error::Parse("annotation header must be id,annotator_1,…,annotator_M (M ≥ 2)".into()));
        }
        let annotators: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            ids.push(rec.get(0).unwrap_or_default().to_string());
            rows.push(rec.iter().skip(1).map(|c| c.parse::<Label>().ok()).collect());
        }
        Self::new(ids, annotators, rows)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreedRecord {
    pub id: String,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub records: Vec<AgreedRecord>,
    pub class_counts: BTreeMap<Label, usize>,
    pub dropped: usize,
}

/// Keeps exactly the rows on which every annotator gave the same label.
pub fn agreement_filter(matrix: &AnnotationMatrix) -> AgreementResult {
    let mut records = Vec::new();
    let mut class_counts: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
    let mut dropped = 0;
    for (id, row) in matrix.ids.iter().zip(&matrix.rows) {
        let first = row[0];
        match first {
            Some(label) if row.iter().all(|&c| c == first) => {
                *class_counts.entry(label).or_insert(0) += 1;
                records.push(AgreedRecord { id: id.clone(), label });
            }
            _ => dropped += 1,
        }
    }
    AgreementResult {
        records,
        class_counts,
        dropped,
    }
}

/// Joins agreed labels with corpus text by id; ids missing from the corpus
/// are an error.
pub fn attach_text(agreed: &[AgreedRecord], corpus: &[RawRecord]) -> Result<Vec<RawRecord>> {
    let by_id: HashMap<&str, &RawRecord> = corpus.iter().map(|r| (r.id.as_str(), r)).collect();
    agreed
        .iter()
        .map(|a| {
            let raw = by_id
                .get(a.id.as_str())
                .ok_or_else(|| Error::IdMisalignment(format!("id {} not in corpus", a.id)))?;
            let mut rec = (*raw).clone();
            rec.label = Some(a.label);
            Ok(rec)
        })
        .collect()
}

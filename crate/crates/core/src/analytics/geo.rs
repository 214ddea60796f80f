use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, RawRecord, Tokenizer};
use crate::dataset_builder::Label;
use crate::finetune::SequenceClassifier;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Money,
    Volunteers,
    Clothing,
    Shelter,
    MedicalAid,
    Food,
}

impl Resource {
    pub const ALL: [Resource; 6] = [
        Resource::Money,
        Resource::Volunteers,
        Resource::Clothing,
        Resource::Shelter,
        Resource::MedicalAid,
        Resource::Food,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Resource::Money => "money",
            Resource::Volunteers => "volunteers",
            Resource::Clothing => "clothing",
            Resource::Shelter => "shelter",
            Resource::MedicalAid => "medical_aid",
            Resource::Food => "food",
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Resource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        let key = key.trim_end_matches('s');
        Self::ALL
            .into_iter()
            .find(|r| r.as_str().replace('_', "").trim_end_matches('s') == key)
            .ok_or_else(|| Error::Parse(format!("unknown resource type {s:?}")))
    }
}

fn one() -> u64 {
    1
}

fn is_one(n: &u64) -> bool {
    *n == 1
}

/// A raw record with its predicted label. `count` lets one row stand for
/// several identical records (aggregated inputs); it defaults to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoRecord {
    #[serde(flatten)]
    pub record: RawRecord,
    pub predicted: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource: Option<Resource>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub count: u64,
}

impl GeoRecord {
    pub fn new(record: RawRecord, predicted: Label) -> Self {
        Self {
            record,
            predicted,
            resource: None,
            count: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resource.is_some() && !matches!(self.predicted, Label::Request | Label::Offer) {
            return Err(Error::InvalidRecord(format!(
                "record {} has a resource tag but is labelled {}",
                self.record.id, self.predicted
            )));
        }
        Ok(())
    }
}

/// Classifies every record in batches, preserving order. The optional
/// resource classifier tags Request and Offer records only.
pub fn label_corpus(
    classifier: &SequenceClassifier<f32>,
    resource_classifier: Option<&SequenceClassifier<f32>>,
    tokenizer: &Tokenizer,
    records: &[RawRecord],
    max_length: usize,
    batch_size: usize,
) -> Result<Vec<GeoRecord>> {
    let seqs: Vec<_> = records
        .iter()
        .map(|r| tokenizer.encode(&normalize_text(&r.text), max_length))
        .collect();
    let labels = classifier.predict(&seqs, batch_size)?;
    let mut out = Vec::with_capacity(records.len());
    for (r, l) in records.iter().zip(labels) {
        let label = Label::from_index(l).ok_or(Error::IndexOutOfRange { index: l, len: 4 })?;
        out.push(GeoRecord::new(r.clone(), label));
    }
    if let Some(rc) = resource_classifier {
        let idx: Vec<usize> = (0..out.len())
            .filter(|&i| matches!(out[i].predicted, Label::Request | Label::Offer))
            .collect();
        let tagged: Vec<_> = idx.iter().map(|&i| seqs[i].clone()).collect();
        for (&i, k) in idx.iter().zip(rc.predict(&tagged, batch_size)?) {
            out[i].resource = Some(Resource::from_index(k).ok_or(Error::IndexOutOfRange { index: k, len: 6 })?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resource_parsing() {
        assert_eq!("Medical Aid".parse::<Resource>().unwrap(), Resource::MedicalAid);
        assert_eq!("volunteer".parse::<Resource>().unwrap(), Resource::Volunteers);
        assert_eq!("FOOD".parse::<Resource>().unwrap(), Resource::Food);
        assert!("ppe".parse::<Resource>().is_err());
    }

    #[test]
    fn json_shape() {
        let mut r = RawRecord::new("1", "need food");
        r.country = Some("IND".into());
        let g = GeoRecord {
            resource: Some(Resource::Food),
            ..GeoRecord::new(r, Label::Request)
        };
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"id":"1","text":"need food","country":"IND","predicted":"Request","resource":"food"}"#);
        let back: GeoRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
    }
}

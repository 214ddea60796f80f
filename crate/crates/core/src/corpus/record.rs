use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset_builder::Label;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
}

impl RawRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: None,
            country: None,
            city: None,
            timestamp: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidRecord("empty id".into()));
        }
        if self.text.trim().is_empty() {
            return Err(Error::InvalidRecord(format!("record {} has empty text", self.id)));
        }
        Ok(())
    }

    /// Checks per-record invariants and id uniqueness across a corpus.
    pub fn validate_all(records: &[RawRecord]) -> Result<()> {
        let mut seen = HashSet::new();
        for r in records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidRecord(format!("duplicate id {}", r.id)));
            }
        }
        Ok(())
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_roundtrip_with_optional_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut a = RawRecord::new("1", "need water").with_label(Label::Request);
        a.country = Some("IND".into());
        a.timestamp = Some("2021-05-01T12:00:00Z".parse().unwrap());
        let b = RawRecord::new("2", "hello");
        write_jsonl(&path, &[a.clone(), b.clone()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap() == r#"{"id":"2","text":"hello"}"#);
        let back: Vec<RawRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn validation() {
        assert!(RawRecord::new("", "x").validate().is_err());
        assert!(RawRecord::new("a", "  ").validate().is_err());
        let dup = vec![RawRecord::new("a", "x"), RawRecord::new("a", "y")];
        assert!(RawRecord::validate_all(&dup).is_err());
    }
}

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geo::GeoRecord;
use crate::dataset_builder::Label;
use crate::{Error, Result};

pub const UNKNOWN_REGION: &str = "unknown";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKey {
    Country,
    City,
}

impl RegionKey {
    fn of<'a>(self, r: &'a GeoRecord) -> &'a str {
        let v = match self {
            RegionKey::Country => r.record.country.as_deref(),
            RegionKey::City => r.record.city.as_deref(),
        };
        v.filter(|s| !s.is_empty()).unwrap_or(UNKNOWN_REGION)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoRow {
    pub region: String,
    pub requests: u64,
    pub offers: u64,
    /// `requests / offers`; `None` when there are no offers.
    pub ratio: Option<f64>,
}

impl RoRow {
    /// Two decimals, or `undefined`.
    pub fn ratio_display(&self) -> String {
        self.ratio.map_or_else(|| "undefined".to_string(), |r| format!("{r:.2}"))
    }

    // exact comparison of requests/offers; undefined sorts after every ratio
    fn cmp_ratio_desc(&self, other: &Self) -> Ordering {
        match (self.offers, other.offers) {
            (0, 0) => Ordering::Equal,
            (0, _) => Ordering::Greater,
            (_, 0) => Ordering::Less,
            (a, b) => {
                let lhs = other.requests as u128 * a as u128;
                let rhs = self.requests as u128 * b as u128;
                lhs.cmp(&rhs)
            }
        }
    }
}

/// Request and Offer counts per region, sorted by exact ratio descending
/// (ties by region name). Records with no region fall under `unknown`.
/// RequestAndOffer and Irrelevant records are not counted.
pub fn ro_ratio(records: &[GeoRecord], by: RegionKey) -> Vec<RoRow> {
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in records {
        let entry = counts.entry(by.of(r)).or_default();
        match r.predicted {
            Label::Request => entry.0 += r.count,
            Label::Offer => entry.1 += r.count,
            _ => {}
        }
    }
    let mut rows: Vec<RoRow> = counts
        .into_iter()
        .filter(|(_, (req, off))| req + off > 0)
        .map(|(region, (requests, offers))| RoRow {
            region: region.to_string(),
            requests,
            offers,
            ratio: (offers > 0).then(|| requests as f64 / offers as f64),
        })
        .collect();
    rows.sort_by(|a, b| a.cmp_ratio_desc(b).then_with(|| a.region.cmp(&b.region)));
    rows
}

/// `region,requests,offers,ratio` with a header.
pub fn ro_table_csv(rows: &[RoRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["region", "requests", "offers", "ratio"])?;
    for r in rows {
        w.write_record([
            r.region.clone(),
            r.requests.to_string(),
            r.offers.to_string(),
            r.ratio_display(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublishedCheck {
    pub region: String,
    pub computed: Option<f64>,
    pub published: f64,
    pub within_tolerance: bool,
    /// Set when the published value cannot be reconciled with the counts.
    pub flagged: bool,
}

/// Compares computed ratios with externally reported ones. Rows further
/// than `tolerance` from the reported value, or missing, are flagged.
pub fn compare_published(rows: &[RoRow], published: &[(&str, f64)], tolerance: f64) -> Vec<PublishedCheck> {
    published
        .iter()
        .map(|&(region, value)| {
            let computed = rows.iter().find(|r| r.region == region).and_then(|r| r.ratio);
            let ok = computed.is_some_and(|c| (c - value).abs() <= tolerance + 1e-12);
            PublishedCheck {
                region: region.to_string(),
                computed,
                published: value,
                within_tolerance: ok,
                flagged: !ok,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionShare {
    pub region: String,
    pub count: u64,
    /// Share of all records with the label, in percent.
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopRegions {
    pub label: Label,
    pub total: u64,
    pub rows: Vec<RegionShare>,
    pub remainder_count: u64,
    pub remainder_percent: f64,
}

/// The `k` regions with most records of `label` (ties by name).
pub fn top_regions(records: &[GeoRecord], label: Label, by: RegionKey, k: usize) -> TopRegions {
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.predicted == label) {
        *counts.entry(by.of(r)).or_default() += r.count;
    }
    let total: u64 = counts.values().sum();
    let pct = |c: u64| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 };
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let rows: Vec<RegionShare> = ranked
        .iter()
        .take(k)
        .map(|&(region, count)| RegionShare {
            region: region.to_string(),
            count,
            percent: pct(count),
        })
        .collect();
    let remainder_count = total - rows.iter().map(|r| r.count).sum::<u64>();
    TopRegions {
        label,
        total,
        rows,
        remainder_count,
        remainder_percent: pct(remainder_count),
    }
}

use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::geo::GeoRecord;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendBy {
    Resource,
    Label,
}

/// Monthly counts per key over one shared, gap-free month axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    /// `YYYY-MM`, consecutive.
    pub months: Vec<String>,
    pub series: BTreeMap<String, Vec<u64>>,
    /// Records without a timestamp.
    pub untimed: u64,
}

impl TrendSeries {
    /// `month,<key>...` with one row per month.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["month".to_string()];
        header.extend(self.series.keys().cloned());
        w.write_record(&header)?;
        for (i, m) in self.months.iter().enumerate() {
            let mut row = vec![m.clone()];
            row.extend(self.series.values().map(|v| v[i].to_string()));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn month_index(year: i32, month: u32) -> i64 {
    year as i64 * 12 + month as i64 - 1
}

/// Buckets records by UTC calendar month. With `TrendBy::Resource`,
/// untagged records are skipped. `keys`, when given, restricts the output
/// to those keys (matched case-insensitively).
pub fn monthly_trend(records: &[GeoRecord], by: TrendBy, keys: Option<&[String]>) -> TrendSeries {
    let wanted = |k: &str| keys.is_none_or(|ks| ks.iter().any(|w| w.eq_ignore_ascii_case(k)));
    let mut buckets: BTreeMap<String, BTreeMap<i64, u64>> = BTreeMap::new();
    let mut untimed = 0;
    for r in records {
        let key = match by {
            TrendBy::Label => r.predicted.as_str().to_string(),
            TrendBy::Resource => match r.resource {
                Some(res) => res.as_str().to_string(),
                None => continue,
            },
        };
        if !wanted(&key) {
            continue;
        }
        match r.record.timestamp {
            Some(ts) => {
                *buckets.entry(key).or_default().entry(month_index(ts.year(), ts.month())).or_default() += r.count;
            }
            None => untimed += r.count,
        }
    }
    let all: Vec<i64> = buckets.values().flat_map(|m| m.keys().copied()).collect();
    let (Some(&lo), Some(&hi)) = (all.iter().min(), all.iter().max()) else {
        return TrendSeries {
            months: Vec::new(),
            series: BTreeMap::new(),
            untimed,
        };
    };
    let months = (lo..=hi)
        .map(|i| format!("{:04}-{:02}", i.div_euclid(12), i.rem_euclid(12) + 1))
        .collect();
    let series = buckets
        .into_iter()
        .map(|(k, m)| (k, (lo..=hi).map(|i| m.get(&i).copied().unwrap_or(0)).collect()))
        .collect();
    TrendSeries {
        months,
        series,
        untimed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::Resource;
    use crate::corpus::RawRecord;
    use crate::dataset_builder::Label;
    use chrono::{TimeZone, Utc};

    fn at(y: i32, m: u32, label: Label) -> GeoRecord {
        let mut r = RawRecord::new("x", "t");
        r.timestamp = Some(Utc.with_ymd_and_hms(y, m, 15, 12, 0, 0).unwrap());
        GeoRecord::new(r, label)
    }

    #[test]
    fn gap_filling_and_alignment() {
        let recs = vec![
            at(2020, 12, Label::Request),
            at(2021, 2, Label::Offer),
            GeoRecord::new(RawRecord::new("y", "t"), Label::Request),
        ];
        let t = monthly_trend(&recs, TrendBy::Label, None);
        assert_eq!(t.months, ["2020-12", "2021-01", "2021-02"]);
        assert_eq!(t.series["Request"], [1, 0, 0]);
        assert_eq!(t.series["Offer"], [0, 0, 1]);
        assert_eq!(t.untimed, 1);
        assert!(t.to_csv().unwrap().starts_with("month,Offer,Request\n2020-12,0,1\n"));
    }

    #[test]
    fn resource_filter() {
        let mut a = at(2021, 1, Label::Request);
        a.resource = Some(Resource::Food);
        let mut b = at(2021, 1, Label::Offer);
        b.resource = Some(Resource::Clothing);
        let keys = vec!["food".to_string(), "money".to_string()];
        let t = monthly_trend(&[a, b], TrendBy::Resource, Some(&keys));
        assert_eq!(t.series.len(), 1);
        assert_eq!(t.series["food"], [1]);
    }
}

mod common;

use chrono::{TimeZone, Utc};
use crisiskd::analytics::{
    label_corpus, monthly_trend, ro_ratio, ro_table_csv, top_regions, trend_svg, GeoRecord, RegionKey, Resource, TrendBy,
    UNKNOWN_REGION,
};
use crisiskd::corpus::RawRecord;
use crisiskd::dataset_builder::Label;
use crisiskd::encoder::EncoderConfig;
use crisiskd::finetune::SequenceClassifier;
use crisiskd::rng;
use proptest::prelude::*;

fn rec(country: Option<&str>, label: Label, count: u64) -> GeoRecord {
    let mut r = RawRecord::new("x", "t");
    r.country = country.map(str::to_string);
    GeoRecord { count, ..GeoRecord::new(r, label) }
}

fn label_of(i: usize) -> Label {
    Label::from_index(i).unwrap()
}

proptest! {
    #[test]
    fn ro_sums_match_totals_and_order_is_exact(recs in prop::collection::vec((0usize..5, 0usize..4, 1u64..50), 1..80)) {
        let regions = ["AAA", "BBB", "CCC", "DDD"];
        let records: Vec<GeoRecord> = recs
            .iter()
            .map(|&(r, l, c)| rec(regions.get(r).copied(), label_of(l), c))
            .collect();
        let rows = ro_ratio(&records, RegionKey::Country);
        let total = |l: Label| records.iter().filter(|r| r.predicted == l).map(|r| r.count).sum::<u64>();
        prop_assert_eq!(rows.iter().map(|r| r.requests).sum::<u64>(), total(Label::Request));
        prop_assert_eq!(rows.iter().map(|r| r.offers).sum::<u64>(), total(Label::Offer));
        for w in rows.windows(2) {
            match (w[0].offers, w[1].offers) {
                (0, o) => prop_assert_eq!(o, 0),
                (_, 0) => {}
                (a, b) => prop_assert!(w[0].requests as u128 * b as u128 >= w[1].requests as u128 * a as u128),
            }
        }
        for r in &rows {
            prop_assert_eq!(r.ratio.is_none(), r.offers == 0);
        }
    }

    #[test]
    fn top_k_plus_remainder_is_total(recs in prop::collection::vec((0usize..6, 1u64..100), 1..50), k in 1usize..8) {
        let regions = ["A", "B", "C", "D", "E"];
        let records: Vec<GeoRecord> = recs.iter().map(|&(r, c)| rec(regions.get(r).copied(), Label::Request, c)).collect();
        let top = top_regions(&records, Label::Request, RegionKey::Country, k);
        prop_assert_eq!(top.rows.iter().map(|r| r.count).sum::<u64>() + top.remainder_count, top.total);
        let pct: f64 = top.rows.iter().map(|r| r.percent).sum::<f64>() + top.remainder_percent;
        prop_assert!((pct - 100.0).abs() < 1e-9);
        prop_assert!(top.rows.windows(2).all(|w| w[0].count >= w[1].count));
    }
}

#[test]
fn undefined_and_unknown_regions() {
    let records = vec![
        rec(Some("AAA"), Label::Request, 4),
        rec(None, Label::Request, 2),
        rec(None, Label::Offer, 1),
        rec(Some("BBB"), Label::RequestAndOffer, 7),
    ];
    let rows = ro_ratio(&records, RegionKey::Country);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].region, UNKNOWN_REGION);
    assert_eq!(rows[0].ratio_display(), "2.00");
    assert_eq!(rows[1].ratio_display(), "undefined");
    let csv = ro_table_csv(&rows).unwrap();
    assert!(csv.contains("AAA,4,0,undefined"));
}

#[test]
fn trend_buckets_by_month_without_gaps() {
    let at = |y, m, d| {
        let mut r = RawRecord::new("x", "t");
        r.timestamp = Some(Utc.with_ymd_and_hms(y, m, d, 12, 0, 0).unwrap());
        r
    };
    let mut records = vec![
        GeoRecord::new(at(2020, 11, 3), Label::Request),
        GeoRecord::new(at(2021, 2, 28), Label::Request),
        GeoRecord::new(at(2021, 2, 1), Label::Offer),
        GeoRecord::new(RawRecord::new("y", "t"), Label::Offer),
    ];
    records[0].resource = Some(Resource::Food);
    records[1].resource = Some(Resource::Food);
    records[2].resource = Some(Resource::MedicalAid);
    let by_label = monthly_trend(&records, TrendBy::Label, None);
    assert_eq!(by_label.months, ["2020-11", "2020-12", "2021-01", "2021-02"]);
    assert_eq!(by_label.series["Request"], [1, 0, 0, 1]);
    assert_eq!(by_label.series["Offer"], [0, 0, 0, 1]);
    assert_eq!(by_label.untimed, 1);
    assert!(by_label.to_csv().unwrap().starts_with("month,Offer,Request\n2020-11,0,1\n"));

    let food = vec!["FOOD".to_string()];
    let by_res = monthly_trend(&records, TrendBy::Resource, Some(&food));
    assert_eq!(by_res.series.keys().collect::<Vec<_>>(), ["food"]);
    let svg = trend_svg(&by_res, "food <trend>");
    assert!(svg.starts_with("<svg") && svg.contains("food &lt;trend&gt;") && svg.contains("polyline"));
    assert_eq!("medical aid".parse::<Resource>().unwrap(), Resource::MedicalAid);
}

#[test]
fn labelling_preserves_order_and_tags_only_requests_and_offers() {
    let task = common::synthetic_task(60, 31, 300, 16);
    let cfg = EncoderConfig::new(16, 1, 2, 32).with_vocab(task.tokenizer.vocab_size()).with_max_positions(16);
    let classifier = SequenceClassifier::<f32>::new(cfg.clone(), &mut rng::stream(1, "c")).unwrap();
    let resources = SequenceClassifier::<f32>::new(cfg.with_classes(6), &mut rng::stream(1, "r")).unwrap();
    let raw: Vec<RawRecord> = (0..25).map(|i| RawRecord::new(format!("r{i}"), format!("need food {i} @bob"))).collect();
    let out = label_corpus(&classifier, Some(&resources), &task.tokenizer, &raw, 16, 8).unwrap();
    assert_eq!(out.iter().map(|g| g.record.id.as_str()).collect::<Vec<_>>(), raw.iter().map(|r| r.id.as_str()).collect::<Vec<_>>());
    for g in &out {
        let eligible = matches!(g.predicted, Label::Request | Label::Offer);
        assert_eq!(g.resource.is_some(), eligible);
    }
    let one_by_one = label_corpus(&classifier, None, &task.tokenizer, &raw, 16, 1).unwrap();
    assert!(out.iter().zip(&one_by_one).all(|(a, b)| a.predicted == b.predicted));
}

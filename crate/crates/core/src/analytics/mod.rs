//! Case-study analytics over a classified, geo-tagged corpus:
//! request/offer ratios by region, monthly trends and top regions.

mod chart;
mod geo;
mod ratio;
mod trend;

pub use chart::trend_svg;
pub use geo::{label_corpus, GeoRecord, Resource};
pub use ratio::{
    compare_published, ro_ratio, UNKNOWN_REGION, ro_table_csv, top_regions, PublishedCheck, RegionKey, RegionShare, RoRow,
    TopRegions,
};
pub use trend::{monthly_trend, TrendBy, TrendSeries};

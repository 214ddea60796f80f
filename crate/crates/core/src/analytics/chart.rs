use std::fmt::Write as _;

use super::trend::TrendSeries;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG line chart of every series against the month axis.
pub fn trend_svg(trend: &TrendSeries, title: &str) -> String {
    let (w, h, pad) = (800.0, 400.0, 50.0);
    let n = trend.months.len();
    let max = trend.series.values().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let x = |i: usize| {
        if n <= 1 {
            pad
        } else {
            pad + (w - 2.0 * pad) * i as f64 / (n - 1) as f64
        }
    };
    let y = |v: u64| h - pad - (h - 2.0 * pad) * v as f64 / max;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{max}</text>"#, pad - 4.0, pad + 4.0);
    if let (Some(first), Some(last)) = (trend.months.first(), trend.months.last()) {
        let _ = writeln!(svg, r#"<text x="{pad}" y="{}">{first}</text>"#, h - pad + 16.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{last}</text>"#,
            w - pad,
            h - pad + 16.0
        );
    }
    for (k, (key, values)) in trend.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - pad + 4.0,
            pad + 14.0 * k as f64,
            escape(key)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn one_polyline_per_series() {
        let t = TrendSeries {
            months: vec!["2021-01".into(), "2021-02".into()],
            series: BTreeMap::from([("a".to_string(), vec![1, 2]), ("b<".to_string(), vec![0, 0])]),
            untimed: 0,
        };
        let svg = trend_svg(&t, "R & O");
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("R &amp; O"));
        assert!(svg.contains("b&lt;"));
    }
}

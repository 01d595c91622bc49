//! Static SVG bar charts of effect sizes.

use std::fmt::Write as _;

use facehmax::experiments::ExperimentReport;

const COLORS: [&str; 6] = ["#3b6ea5", "#c8553d", "#6a994e", "#8e6c8a", "#d4a017", "#5c5c5c"];

/// One bar per (size, series) for the rows whose condition ends in
/// `effect` and whose size is a single class; error bars are ±SEM.
pub fn effect_chart(report: &ExperimentReport) -> String {
    let rows: Vec<_> = report
        .rows
        .iter()
        .filter(|r| r.condition.ends_with("effect") && !r.condition.ends_with("effect_diff") && !r.size.contains('-'))
        .collect();
    let mut sizes: Vec<&str> = Vec::new();
    let mut series: Vec<String> = Vec::new();
    for r in &rows {
        if !sizes.contains(&r.size.as_str()) {
            sizes.push(&r.size);
        }
        let s = format!("{} {}", r.orientation, r.condition);
        if !series.contains(&s) {
            series.push(s);
        }
    }

    let (width, height) = (640.0, 360.0);
    let (left, right, top, bottom) = (60.0, 180.0, 40.0, 40.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let hi = rows.iter().map(|r| r.mean + r.sem).fold(0.0f64, f64::max);
    let lo = rows.iter().map(|r| r.mean - r.sem).fold(0.0f64, f64::min);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let y = |v: f64| top + plot_h * (hi - v) / span;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{left}" y="20" font-size="14">{} effect by tuning size</text>"#, report.experiment);
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, y(0.0), left + plot_w);
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    for v in [lo, 0.0, hi] {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, left - 6.0, y(v) + 4.0);
    }
    let group_w = plot_w / sizes.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;
    for (gi, size) in sizes.iter().enumerate() {
        let gx = left + gi as f64 * group_w + group_w * 0.1;
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{size}</text>"#, gx + group_w * 0.4, height - 15.0);
        for r in rows.iter().filter(|r| r.size == *size) {
            let si = series.iter().position(|s| *s == format!("{} {}", r.orientation, r.condition)).unwrap_or(0);
            let x = gx + si as f64 * bar_w;
            let (y0, y1) = (y(r.mean.max(0.0)), y(r.mean.min(0.0)));
            let cx = x + bar_w / 2.0;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                bar_w * 0.9,
                (y1 - y0).max(0.5),
                COLORS[si % COLORS.len()]
            );
            let _ = writeln!(
                svg,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                y(r.mean + r.sem),
                y(r.mean - r.sem)
            );
        }
    }
    for (si, s) in series.iter().enumerate() {
        let ly = top + 18.0 * si as f64;
        let lx = left + plot_w + 12.0;
        let _ = writeln!(svg, r#"<rect x="{lx}" y="{ly}" width="10" height="10" fill="{}"/>"#, COLORS[si % COLORS.len()]);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{s}</text>"#, lx + 16.0, ly + 10.0);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use facehmax::experiments::ReportRow;

    fn row(size: &str, orientation: &str, condition: &str, mean: f64) -> ReportRow {
        ReportRow {
            experiment: "wpe".into(),
            size: size.into(),
            orientation: orientation.into(),
            condition: condition.into(),
            mean,
            sem: 0.01,
            p: Some(0.01),
            p_floored: false,
            n: 20,
        }
    }

    #[test]
    fn one_bar_per_effect_row() {
        let report = ExperimentReport {
            experiment: "wpe".into(),
            seed: 1,
            rng: String::new(),
            config_hash: String::new(),
            model_config_hash: String::new(),
            bank_hashes: vec![],
            rows: vec![
                row("large", "upright", "effect", 0.3),
                row("small", "upright", "effect", -0.1),
                row("large", "upright", "whole", 0.9),
                row("large-small", "upright", "effect_diff", 0.4),
            ],
            declared_trials: 0,
            trials: vec![],
            details: serde_json::Value::Null,
        };
        let svg = effect_chart(&report);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 1 + 2 + 1);
    }
}

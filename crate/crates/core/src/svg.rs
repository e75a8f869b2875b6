//! Bare-bones static SVG for the boxplot and trend exports.

use std::fmt::Write;

use crate::surveil::{BoxplotSummary, QuarterTrend, REFERENCE_RATIO};

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD: f64 = 40.0;

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<text x="{PAD}" y="20" font-size="12">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{y}" x2="{x}" y2="{y}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y}" stroke="black"/>"#,
        x = W - PAD,
        y = H - PAD
    );
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Log10 scale over `[1, max]`, so heavy outliers stay readable.
fn log_y(value: f64, max: f64) -> f64 {
    let top = max.max(10.0).log10();
    let v = value.max(1.0).log10();
    H - PAD - v / top * (H - 2.0 * PAD)
}

pub fn render_boxplots(rows: &[BoxplotSummary]) -> String {
    let mut s = open("Per-drug counts by quarter (log scale)");
    let max = rows.iter().map(|r| r.max).fold(1.0, f64::max);
    let step = (W - 2.0 * PAD) / rows.len().max(1) as f64;
    for (i, r) in rows.iter().enumerate() {
        let cx = PAD + step * (i as f64 + 0.5);
        let half = (step * 0.3).min(12.0);
        let y = |v: f64| log_y(v, max);
        let whisker_top = r.max.min(r.upper_fence);
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(r.min),
            y(whisker_top)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="lightsteelblue" stroke="black"/>"#,
            cx - half,
            y(r.p75),
            2.0 * half,
            (y(r.p25) - y(r.p75)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{m:.1}" x2="{:.1}" y2="{m:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            cx + half,
            m = y(r.median)
        );
        for (drug, count) in &r.outliers {
            let _ = writeln!(
                s,
                r#"<circle cx="{cx:.1}" cy="{:.1}" r="2" fill="none" stroke="firebrick"><title>{} {count}</title></circle>"#,
                y(*count as f64),
                escape(drug.label())
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="end" transform="rotate(-60 {cx:.1} {:.1})">{}</text>"#,
            H - PAD + 12.0,
            H - PAD + 12.0,
            r.quarter
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_trend(rows: &[QuarterTrend]) -> String {
    let mut s = open("Subject share (blue) and event share (red) by quarter");
    let max = rows.iter().flat_map(|r| [r.subject_share, r.event_share]).fold(0.0, f64::max).max(1e-9);
    let step = (W - 2.0 * PAD) / rows.len().saturating_sub(1).max(1) as f64;
    let point = |i: usize, v: f64| (PAD + step * i as f64, H - PAD - v / max * (H - 2.0 * PAD));
    for (colour, pick) in [("steelblue", 0usize), ("firebrick", 1)] {
        let pts: Vec<String> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (x, y) = point(i, if pick == 0 { r.subject_share } else { r.event_share });
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}"/>"#, pts.join(" "));
    }
    for (i, r) in rows.iter().enumerate() {
        let (x, _) = point(i, 0.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="end" transform="rotate(-60 {x:.1} {y:.1})">{}</text>"#,
            r.quarter,
            y = H - PAD + 12.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{PAD}" text-anchor="end">reference subjects:events = 1:{}</text>"#,
        1.0 / REFERENCE_RATIO,
        x = W - PAD
    );
    s.push_str("</svg>\n");
    s
}

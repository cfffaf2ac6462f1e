//! Minimal SVG 1.1 QQ scatter: both axes share one range so the reference line
//! `y = x` is the diagonal. Extreme levels are drawn in red.

use std::fmt::Write;

use normex_core::QQRow;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 56.0;
const TICKS: usize = 5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter of `(q_ref, q_cmp)` for the rows of one component.
pub fn qq_scatter(title: &str, x_label: &str, y_label: &str, rows: &[&QQRow]) -> String {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in rows {
        for v in [r.q_ref, r.q_cmp] {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let span = SIZE - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + (v - lo) / (hi - lo) * span;
    let py = |v: f64| SIZE - MARGIN - (v - lo) / (hi - lo) * span;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, SIZE / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{span}" height="{span}" fill="none" stroke="black"/>"#
    );
    for k in 0..=TICKS {
        let v = lo + (hi - lo) * k as f64 / TICKS as f64;
        let label = format_tick(v);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            px(v),
            SIZE - MARGIN + 16.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, MARGIN - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        SIZE - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        SIZE / 2.0,
        SIZE / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555" stroke-dasharray="4 3"/>"##,
        px(lo),
        py(lo),
        px(hi),
        py(hi)
    );
    for extreme in [false, true] {
        let colour = if extreme { "#c0392b" } else { "#1f5fa8" };
        let _ = writeln!(s, r#"<g fill="{colour}" fill-opacity="0.8">"#);
        for r in rows.iter().filter(|r| r.is_extreme == extreme && r.q_ref.is_finite() && r.q_cmp.is_finite()) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, px(r.q_ref), py(r.q_cmp));
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    s
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_every_point_and_the_diagonal() {
        let rows: Vec<QQRow> = (0..5)
            .map(|i| QQRow {
                level_index: i,
                level_norm: 0.2 * i as f64,
                is_extreme: i == 4,
                component: 0,
                q_ref: i as f64,
                q_cmp: i as f64 * 1.1,
            })
            .collect();
        let refs: Vec<&QQRow> = rows.iter().collect();
        let svg = qq_scatter("a < b", "ref", "cmp", &refs);
        assert_eq!(svg.matches("<circle").count(), 5);
        assert!(svg.contains("#c0392b") && svg.contains("stroke-dasharray"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn degenerate_range_is_padded() {
        let r = QQRow { level_index: 0, level_norm: 0.0, is_extreme: false, component: 0, q_ref: 2.0, q_cmp: 2.0 };
        let svg = qq_scatter("t", "x", "y", &[&r]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}

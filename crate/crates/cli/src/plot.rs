//! Minimal SVG line charts for response curves.

use std::fmt::Write;

use cpa_forecast::forecast::spend_ecpa_profile;
use cpa_forecast::ResponseCurves;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// The four standard charts, keyed by file name.
pub fn curve_charts(curves: &ResponseCurves) -> Vec<(&'static str, String)> {
    // u = 0 has no place on a log axis
    let pos = || curves.points.iter().filter(|p| p.u > 0.0);
    vec![
        (
            "impressions.svg",
            line_chart("Impressions", "u", "impressions", &pos().map(|p| (p.u, p.n_impressions)).collect::<Vec<_>>(), true),
        ),
        (
            "spend.svg",
            line_chart("Spend", "u", "spend", &pos().map(|p| (p.u, p.spend)).collect::<Vec<_>>(), true),
        ),
        (
            "plant_gain.svg",
            line_chart("Plant gain", "u", "dc/du", &pos().map(|p| (p.u, p.plant_gain)).collect::<Vec<_>>(), true),
        ),
        (
            "spend_ecpa.svg",
            line_chart("eCPA against spend", "spend", "eCPA", &spend_ecpa_profile(curves), false),
        ),
    ]
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)], log_x: bool) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| (tx(x), y))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (x0, x1) = bounds(pts.iter().map(|p| p.0));
    let (y0, y1) = bounds(pts.iter().map(|p| p.1).chain([0.0]));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="black"/>"#
    );
    for (v, anchor, x, y) in [
        (x0, "start", left, bottom + 18.0),
        (x1, "end", right, bottom + 18.0),
    ] {
        let label = if log_x { format!("{:.3e}", 10f64.powf(v)) } else { format!("{v:.4}") };
        let _ = writeln!(svg, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{label}</text>"#);
    }
    for (v, y) in [(y0, bottom), (y1, top)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.4}</text>"#,
            left - 4.0
        );
    }
    let x_title = if log_x { format!("{x_label} (log scale)") } else { x_label.to_string() };
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        escape(&x_title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 15 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    if !pts.is_empty() {
        let mut d = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if i == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#);
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed_and_deterministic() {
        let pts = [(0.01, 0.0), (0.1, 2.0), (1.0, 5.0)];
        let a = line_chart("t <1>", "u", "n", &pts, true);
        assert_eq!(a, line_chart("t <1>", "u", "n", &pts, true));
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("t &lt;1&gt;"));
        assert_eq!(a.matches("<path").count(), 2);
    }

    #[test]
    fn empty_and_flat_series() {
        assert!(line_chart("e", "x", "y", &[], false).contains("</svg>"));
        let flat = line_chart("f", "x", "y", &[(1.0, 3.0), (2.0, 3.0)], false);
        assert!(!flat.contains("NaN"));
    }
}

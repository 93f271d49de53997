//! Minimal SVG rendering for heatmaps, line and bar charts.
//!
//! Output is best-effort presentation; the CSV files written next to each
//! image are the machine-readable artifacts.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear blue→yellow→red ramp for values in [0, 1].
fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (u * 255.0, 80.0 + u * 175.0, 200.0 * (1.0 - u))
    } else {
        let u = (t - 0.5) / 0.5;
        (255.0, 255.0 * (1.0 - u), 0.0)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Square color plot of `values` (row-major, `labels.len()`²) in [0, 1].
pub fn heatmap(title: &str, labels: &[String], values: &[f64]) -> String {
    let n = labels.len().max(1);
    let cell = (HEIGHT - 2.0 * MARGIN + 120.0) / n as f64;
    let size = cell * n as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#,
        w = size + 2.0 * MARGIN + 60.0,
        h = size + 2.0 * MARGIN
    );
    let _ = writeln!(svg, r#"<text x="{}" y="20" font-size="14">{}</text>"#, MARGIN, escape(title));
    for (i, row_label) in labels.iter().enumerate() {
        let y = MARGIN + i as f64 * cell;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            y + cell * 0.65,
            escape(row_label)
        );
        for j in 0..labels.len() {
            let v = values[i * labels.len() + j];
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN + j as f64 * cell,
                y,
                cell,
                cell,
                ramp(v)
            );
        }
    }
    for (j, col_label) in labels.iter().enumerate() {
        let x = MARGIN + (j as f64 + 0.5) * cell;
        let y = MARGIN + size + 12.0;
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="end" transform="rotate(-60 {x:.2} {y:.2})">{}</text>"#,
            escape(col_label)
        );
    }
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="14" height="{:.2}" fill="{}"/>"#,
            MARGIN + size + 20.0,
            MARGIN + (1.0 - t) * (size - size / 11.0),
            size / 11.0,
            ramp(t)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0).max(f64::MIN_POSITIVE) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0).max(f64::MIN_POSITIVE) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn axes(svg: &mut String, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="24" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {t} V{b} H{r}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for k in 0..=4 {
        let y = frame.y0 + (frame.y1 - frame.y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            frame.py(y) + 4.0,
            format_tick(y)
        );
        let x = frame.x0 + (frame.x1 - frame.x0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            frame.px(x),
            HEIGHT - MARGIN + 16.0,
            format_tick(x)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn format_tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e5) {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

/// One polyline per named series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let points = series.iter().flat_map(|(_, s)| s.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (x0, x1) = if x0.is_finite() { (x0, x1.max(x0 + 1.0)) } else { (0.0, 1.0) };
    let (y0, y1) = padded(y0, y1);
    let frame = Frame { x0, x1, y0, y1 };
    let mut svg = String::new();
    axes(&mut svg, &frame, title, x_label, y_label);
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if i == 0 { "M" } else { " L" }, frame.px(x), frame.py(y));
        }
        let _ = writeln!(svg, r#"<path d="{d}" stroke="{color}" fill="none" stroke-width="1.2"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 140.0,
            MARGIN + 14.0 * k as f64,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Vertical bars, one per label.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let hi = bars.iter().map(|b| b.1).fold(0.0_f64, f64::max);
    let lo = bars.iter().map(|b| b.1).fold(0.0_f64, f64::min);
    let frame = Frame { x0: 0.0, x1: bars.len().max(1) as f64, y0: lo, y1: if hi > lo { hi * 1.1 } else { lo + 1.0 } };
    let mut svg = String::new();
    axes(&mut svg, &frame, title, "", y_label);
    let slot = (WIDTH - 2.0 * MARGIN) / bars.len().max(1) as f64;
    for (k, (name, value)) in bars.iter().enumerate() {
        let top = frame.py(*value);
        let base = frame.py(0.0_f64.max(lo));
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            MARGIN + slot * (k as f64 + 0.15),
            top.min(base),
            slot * 0.7,
            (base - top).abs(),
            PALETTE[k % PALETTE.len()]
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN + slot * (k as f64 + 0.5),
            top.min(base) - 4.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

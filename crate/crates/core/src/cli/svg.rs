//! Minimal line charts as standalone SVG text.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

/// A single-series line chart. Non-finite points break the line.
pub fn line_chart(title: &str, x_labels: (&str, &str), ys: &[f64]) -> String {
    let finite: Vec<f64> = ys.iter().copied().filter(|v| v.is_finite()).collect();
    let (mut lo, mut hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if finite.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let n = ys.len().max(2) - 1;
    let px = |k: usize| PAD + (W - 2.0 * PAD) * k as f64 / n as f64;
    let py = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);

    let mut path = String::new();
    let mut pen_down = false;
    for (k, v) in ys.iter().enumerate() {
        if v.is_finite() {
            let cmd = if pen_down { 'L' } else { 'M' };
            let _ = write!(path, "{cmd}{:.2},{:.2} ", px(k), py(*v));
            pen_down = true;
        } else {
            pen_down = false;
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    if lo < 0.0 && hi > 0.0 {
        let _ = writeln!(
            s,
            r#"<line x1="{PAD}" y1="{z:.2}" x2="{}" y2="{z:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
            W - PAD,
            z = py(0.0)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 4.0, PAD + 4.0, fmt_tick(hi));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, PAD - 4.0, H - PAD, fmt_tick(lo));
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">{}</text>"#, H - PAD + 16.0, escape(x_labels.0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - PAD, H - PAD + 16.0, escape(x_labels.1));
    let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, path.trim_end());
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    format!("{v:.4}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

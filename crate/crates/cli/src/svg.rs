//! Minimal static SVG charts.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    s
}

/// Grouped bar chart: one group per label, one bar per series.
pub fn bars(title: &str, labels: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let mut s = open(title);
    let max = series.iter().flat_map(|(_, v)| v.iter().copied()).fold(0.0_f64, f64::max);
    let max = if max > 0.0 { max } else { 1.0 };
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let group = pw / labels.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, TOP + ph, LEFT + pw, TOP + ph);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + ph);
    for k in 0..=4 {
        let v = max * k as f64 / 4.0;
        let y = TOP + ph - ph * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#, LEFT - 4.0, y + 3.0, short(v));
    }
    let every = (labels.len() / 24).max(1);
    for (g, label) in labels.iter().enumerate() {
        let x0 = LEFT + group * g as f64 + group * 0.1;
        for (k, (_, vals)) in series.iter().enumerate() {
            let v = vals.get(g).copied().unwrap_or(0.0).max(0.0);
            let h = ph * v / max;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                x0 + bar * k as f64,
                TOP + ph - h,
                bar,
                h,
                PALETTE[k % PALETTE.len()]
            );
        }
        if g % every == 0 {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="9" text-anchor="middle">{}</text>"#,
                x0 + group * 0.4,
                TOP + ph + 14.0,
                escape(label)
            );
        }
    }
    for (k, (name, _)) in series.iter().enumerate() {
        let x = LEFT + 10.0 + 120.0 * k as f64;
        let y = H - 16.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, PALETTE[k % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11">{}</text>"#, x + 14.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Heat map of `values[row][col]`, white at the minimum and dark at the maximum.
pub fn heatmap(title: &str, rows: &[String], values: &[Vec<f64>]) -> String {
    let mut s = open(title);
    let cols = values.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let (lo, hi) = values
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let (cw, rh) = (pw / cols as f64, ph / rows.len().max(1) as f64);
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let t = ((v - lo) / span).clamp(0.0, 1.0);
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({shade},{shade},255)"/>"#,
                LEFT + cw * c as f64,
                TOP + rh * r as f64,
                cw,
                rh
            );
        }
        let every = (rows.len() / 24).max(1);
        if r % every == 0 {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="9" text-anchor="end">{}</text>"#,
                LEFT - 4.0,
                TOP + rh * (r as f64 + 0.5) + 3.0,
                escape(&rows[r])
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="{}" font-family="sans-serif" font-size="11">attribute 1 to {cols}; scale {} to {}</text>"#,
        H - 16.0,
        short(lo),
        short(hi)
    );
    s.push_str("</svg>\n");
    s
}

fn short(v: f64) -> String {
    if v.is_finite() { format!("{v:.3}") } else { "n/a".into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_closed_documents() {
        let b = bars("t <1>", &["a".into(), "b".into()], &[("x", vec![1.0, 2.0])]);
        assert!(b.starts_with("<svg") && b.trim_end().ends_with("</svg>"));
        assert!(b.contains("t &lt;1&gt;"));
        assert_eq!(b.matches("<rect").count(), 1 + 2 + 1);
        let h = heatmap("h", &["r1".into()], &[vec![0.0, 1.0, 2.0]]);
        assert_eq!(h.matches("<rect").count(), 1 + 3);
    }
}

//! Report, field and plot writers.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

use crate::embedding::EmbeddingMap;
use crate::geometry::GridSpacetime;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// `t,x,<name>` rows in node order.
pub fn field_csv(grid: &GridSpacetime, name: &str, values: &[f64]) -> String {
    let mut out = format!("t,x,{name}\n");
    for (n, v) in values.iter().enumerate() {
        let [t, x] = grid.coords(n);
        let _ = writeln!(out, "{t},{x},{v}");
    }
    out
}

/// `t,x,y0,...` rows in node order.
pub fn embedding_csv(grid: &GridSpacetime, map: &EmbeddingMap) -> String {
    let mut out = String::from("t,x");
    for k in 0..map.dim {
        let _ = write!(out, ",y{k}");
    }
    out.push('\n');
    for n in 0..map.node_count() {
        let [t, x] = grid.coords(n);
        let _ = write!(out, "{t},{x}");
        for v in map.point(n) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn color(s: f64) -> String {
    // blue to white to red
    let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.5 };
    let (r, g, b) = if s < 0.5 {
        let u = s / 0.5;
        (40.0 + 215.0 * u, 70.0 + 185.0 * u, 200.0 + 55.0 * u)
    } else {
        let u = (s - 0.5) / 0.5;
        (255.0, 255.0 - 190.0 * u, 255.0 - 205.0 * u)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Nodal field as a grid of coloured cells, t upwards.
pub fn svg_heatmap(grid: &GridSpacetime, values: &[f64], title: &str) -> String {
    let [nt, nx] = grid.shape();
    let cell = (480.0 / nx.max(nt) as f64).max(1.0);
    let (w, h) = (nx as f64 * cell, nt as f64 * cell);
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        w + 20.0,
        h + 50.0,
        w + 20.0,
        h + 50.0
    );
    let _ = writeln!(out, r#"<text x="10" y="18" font-size="13" font-family="sans-serif">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r#"<text x="10" y="{}" font-size="11" font-family="sans-serif">min {lo:.4e}  max {hi:.4e}</text>"#,
        h + 44.0
    );
    for (n, v) in values.iter().enumerate() {
        let (i, j) = grid.ij(n);
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            10.0 + j as f64 * cell,
            26.0 + (nt - 1 - i) as f64 * cell,
            cell + 0.05,
            cell + 0.05,
            color((v - lo) / span)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log line plot of |y| against x, one polyline per series.
pub fn svg_loglog(title: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let (w, h, pad) = (480.0, 320.0, 50.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .filter(|(x, y)| *x > 0.0 && y.abs() > 0.0 && y.is_finite())
        .map(|(x, y)| (x.log10(), y.abs().log10()))
        .collect();
    let bounds = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if pts.is_empty() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = bounds(|p| p.0);
    let (y0, y1) = bounds(|p| p.1);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let palette = ["#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad", "#d35400"];
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<text x="{pad}" y="20" font-size="13" font-family="sans-serif">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r##"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(
        out,
        r#"<text x="{pad}" y="{}" font-size="10" font-family="sans-serif">log10 h in [{x0:.2}, {x1:.2}], log10 |value| in [{y0:.2}, {y1:.2}]</text>"#,
        h - 15.0
    );
    for (k, (label, s)) in series.iter().enumerate() {
        let c = palette[k % palette.len()];
        let line: Vec<String> = s
            .iter()
            .filter(|(x, y)| *x > 0.0 && y.abs() > 0.0 && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", sx(x.log10()), sy(y.abs().log10())))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, line.join(" "));
        for p in &line {
            let (px, py) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(out, r#"<circle cx="{px}" cy="{py}" r="3" fill="{c}"/>"#);
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif" fill="{c}">{}</text>"#,
            w - pad - 150.0,
            pad + 16.0 + 14.0 * k as f64,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Interval, SpacetimeSpec};

    #[test]
    fn csv_and_svg_shapes() {
        let spec = SpacetimeSpec::minkowski(Interval { lo: 0.0, hi: 1.0 }, Interval { lo: 0.0, hi: 1.0 });
        let g = build_grid(&spec, [0.1, 0.1]).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|n| n as f64).collect();
        let csv = field_csv(&g, "f", &v);
        assert_eq!(csv.lines().count(), g.len() + 1);
        assert!(csv.starts_with("t,x,f\n0,0,0\n"));
        let svg = svg_heatmap(&g, &v, "a < b");
        assert_eq!(svg.matches("<rect").count(), g.len());
        assert!(svg.contains("a &lt; b"));
        let plot = svg_loglog("d", &[("x", vec![(0.1, 1.0), (0.05, 0.5)]), ("zero", vec![(0.1, 0.0)])]);
        assert_eq!(plot.matches("<circle").count(), 2);
    }
}

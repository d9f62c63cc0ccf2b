//! Static SVG line charts rendered from sweep CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{precondition, Result};
use crate::harness::sweep::{read_rows, SweepRow};

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// One chart with linear axes over the given (already transformed) data.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(precondition("nothing to plot"));
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">{fx:.2}</text>"#, sx(fx), H - PAD + 16.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{fy:.2}</text>"#, PAD - 6.0, sy(fy) + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, W - PAD - 120.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `log2 mse` against `log2 n_ess`, one series per `(n, l)`.
pub fn rate_chart(rows: &[SweepRow]) -> Result<String> {
    let mut groups: BTreeMap<(u64, u32), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.mean_mse > 0.0) {
        groups.entry((r.n, r.l)).or_default().push((r.n_ess.log2(), r.mean_mse.log2()));
    }
    let series = to_series(groups, |(n, l)| format!("n={n}, l={l}"));
    line_chart("MSE vs effective sample size", "log2 N_ess", "log2 MSE", &series)
}

/// `mse` against `l`, one series per `(m, n)`.
pub fn bits_chart(rows: &[SweepRow]) -> Result<String> {
    let mut groups: BTreeMap<(u64, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.m, r.n)).or_default().push((r.l as f64, r.mean_mse));
    }
    let series = to_series(groups, |(m, n)| format!("m={m}, n={n}"));
    line_chart("MSE vs bits per terminal", "l", "MSE", &series)
}

fn to_series<K: Copy>(groups: BTreeMap<K, Vec<(f64, f64)>>, label: impl Fn(K) -> String) -> Vec<Series> {
    groups
        .into_iter()
        .map(|(key, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label: label(key), points }
        })
        .collect()
}

/// Writes `<stem>_rate.svg` and `<stem>_bits.svg` into `out_dir`.
pub fn plot_csv(csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_rows(csv)?;
    std::fs::create_dir_all(out_dir)?;
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let mut written = Vec::new();
    for (suffix, svg) in [("rate", rate_chart(&rows)?), ("bits", bits_chart(&rows)?)] {
        let path = out_dir.join(format!("{stem}_{suffix}.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed() {
        let svg = line_chart(
            "t <x>",
            "x",
            "y",
            &[Series { label: "a".into(), points: vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.1)] }],
        )
        .unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("t &lt;x&gt;"));
        assert!(line_chart("", "", "", &[]).is_err());
    }
}

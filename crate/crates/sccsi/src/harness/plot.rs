//! Self-contained SVG line charts (metric vs SNR, log-scaled y), one series
//! per (method, rho) pair. No external renderer needed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::harness::sweep::MetricsRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMetric {
    Nmse,
    Ber,
}

impl PlotMetric {
    fn label(self) -> &'static str {
        match self {
            PlotMetric::Nmse => "NMSE",
            PlotMetric::Ber => "BER",
        }
    }

    fn value(self, row: &MetricsRow) -> f64 {
        match self {
            PlotMetric::Nmse => row.nmse,
            PlotMetric::Ber => row.ber,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 8] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

/// Renders one chart. Zero metric values (possible for BER at high SNR)
/// cannot be drawn on a log axis and are skipped point-wise.
pub fn write_svg(path: &Path, rows: &[MetricsRow], metric: PlotMetric, title: &str) -> Result<()> {
    // Series keyed by (method, rho-bits) so float rho stays grouping-stable.
    let mut series: BTreeMap<(String, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        let v = metric.value(row);
        if v > 0.0 && v.is_finite() {
            series
                .entry((row.method.clone(), row.rho.to_bits()))
                .or_default()
                .push((row.snr_db, v));
        }
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let xs: Vec<f64> = series.values().flatten().map(|p| p.0).collect();
    let ys: Vec<f64> = series.values().flatten().map(|p| p.1).collect();
    let (x_min, x_max) = bounds(&xs, 0.0, 1.0);
    let (y_min_raw, y_max_raw) = bounds(&ys, 1e-6, 1.0);
    let ly_min = y_min_raw.log10().floor();
    let ly_max = y_max_raw.log10().ceil().max(ly_min + 1.0);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min).max(1e-12) * plot_w;
    let y_px = |y: f64| MARGIN_T + (ly_max - y.log10()) / (ly_max - ly_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        xml_escape(title)
    );

    // Decade gridlines and y labels.
    let mut dec = ly_min as i64;
    while dec <= ly_max as i64 {
        let y = y_px(10f64.powi(dec as i32));
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/>"##,
            MARGIN_L + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">1e{dec}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0
        );
        dec += 1;
    }
    // X ticks at every distinct SNR.
    let mut snrs: Vec<f64> = xs.clone();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    for &x in &snrs {
        let px = x_px(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            MARGIN_T,
            MARGIN_T + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{px:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{x}</text>"#,
            MARGIN_T + plot_h + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">SNR (dB)</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        metric.label()
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="black"/>"#
    );

    for (idx, ((method, rho_bits), pts)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut path_d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(path_d, "{cmd}{:.1},{:.1} ", x_px(*x), y_px(*y));
        }
        let _ = writeln!(
            svg,
            r#"<path d="{path_d}" fill="none" stroke="{color}" stroke-width="1.8"/>"#
        );
        for (x, y) in pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.6" fill="{color}"/>"#,
                x_px(*x),
                y_px(*y)
            );
        }
        let ly = MARGIN_T + 14.0 + idx as f64 * 18.0;
        let lx = MARGIN_L + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="1.8"/>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" font-family="sans-serif" font-size="11">{} rho={}</text>"#,
            lx + 24.0,
            xml_escape(method),
            f64::from_bits(*rho_bits)
        );
    }
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg)?;
    Ok(())
}

fn bounds(values: &[f64], fallback_min: f64, fallback_max: f64) -> (f64, f64) {
    if values.is_empty() {
        return (fallback_min, fallback_max);
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        (min - 0.5, max + 0.5)
    } else {
        (min, max)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

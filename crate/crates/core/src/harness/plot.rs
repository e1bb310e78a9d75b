use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

use super::stats::CurvePoint;
use super::sweep::SweepResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMetric {
    Uplink,
    Downlink,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Renders SER versus SNR on a logarithmic SER axis as a standalone SVG.
/// Points with zero SER are left out.
pub fn render_svg(result: &SweepResult, metric: PlotMetric) -> String {
    let curves: Vec<(String, Vec<CurvePoint>)> = result
        .methods()
        .into_iter()
        .map(|m| {
            let c = match metric {
                PlotMetric::Uplink => result.uplink_curve(&m),
                PlotMetric::Downlink => result.downlink_curve(&m),
            };
            (m, c)
        })
        .collect();
    let pts = || curves.iter().flat_map(|(_, c)| c.iter());
    let x_min = pts().map(|p| p.snr_db).fold(f64::INFINITY, f64::min);
    let x_max = pts().map(|p| p.snr_db).fold(f64::NEG_INFINITY, f64::max);
    let (x_min, x_max) = if x_max > x_min { (x_min, x_max) } else { (x_min - 1.0, x_min + 1.0) };
    let min_ser = pts().map(|p| p.ser).filter(|s| *s > 0.0).fold(1.0, f64::min);
    let y_lo = min_ser.log10().floor().min(-1.0);
    let y_hi = 0.0;
    let px = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * (W - LEFT - RIGHT);
    let py = |s: f64| TOP + (y_hi - s.log10()) / (y_hi - y_lo) * (H - TOP - BOTTOM);

    let title = match metric {
        PlotMetric::Uplink => "Uplink SER",
        PlotMetric::Downlink => "Downlink SER",
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle">{title}</text>"#, (LEFT + W - RIGHT) / 2.0);
    for d in (y_lo as i32)..=(y_hi as i32) {
        let y = py(10f64.powi(d));
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let step = ((x_max - x_min) / 10.0).ceil().max(1.0);
    let mut x = x_min.ceil();
    while x <= x_max + 1e-9 {
        let xp = px(x);
        let _ = writeln!(svg, r##"<line x1="{xp:.1}" y1="{TOP}" x2="{xp:.1}" y2="{:.1}" stroke="#eee"/>"##, H - BOTTOM);
        let _ = writeln!(svg, r#"<text x="{xp:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#, H - BOTTOM + 16.0);
        x += step;
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">SNR [dB]</text>"#, (LEFT + W - RIGHT) / 2.0, H - 12.0);
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> =
            curve.iter().filter(|p| p.ser > 0.0).map(|p| format!("{:.1},{:.1}", px(p.snr_db), py(p.ser))).collect();
        if coords.len() > 1 {
            let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        }
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("formatted above");
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
        }
        let ly = TOP + 16.0 + 18.0 * i as f64;
        let lx = W - RIGHT + 10.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{name}</text>"#, lx + 26.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(result: &SweepResult, path: &Path, metric: PlotMetric) -> Result<()> {
    std::fs::write(path, render_svg(result, metric))?;
    Ok(())
}

//! DET plots as SVG, both axes warped by the standard normal quantile.

use std::fmt::Write as _;
use std::path::Path;

use spkver_core::eval::{probit, DetCurve};

use crate::report::read_det;
use crate::{write_atomic, Error, Result};

const SIZE: f64 = 480.0;
const MARGIN: f64 = 60.0;
const P_MIN: f64 = 0.001;
const P_MAX: f64 = 0.8;
const TICKS: [f64; 11] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8];
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Pixel offset of probability `p` along an axis of length `SIZE`.
pub fn axis_position(p: f64) -> f64 {
    let (lo, hi) = (probit(P_MIN), probit(P_MAX));
    (probit(p.clamp(P_MIN, P_MAX)) - lo) / (hi - lo) * SIZE
}

fn to_xy(fa: f64, miss: f64) -> (f64, f64) {
    (MARGIN + axis_position(fa), MARGIN + SIZE - axis_position(miss))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders named curves into one plot with an EER marker on each.
pub fn render_det_svg(curves: &[(String, DetCurve)]) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::Usage("det-plot needs at least one curve".into()));
    }
    let full = SIZE + 2.0 * MARGIN;
    let legend_h = 18.0 * curves.len() as f64;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{}" font-family="sans-serif" font-size="11">"#,
        full + legend_h
    )
    .unwrap();
    writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#).unwrap();
    for t in TICKS {
        let pos = axis_position(t);
        let label = format!("{}", 100.0 * t);
        let (x, y) = (MARGIN + pos, MARGIN + SIZE - pos);
        writeln!(s, r##"<line x1="{x:.3}" y1="{MARGIN}" x2="{x:.3}" y2="{:.3}" stroke="#ddd"/>"##, MARGIN + SIZE).unwrap();
        writeln!(s, r##"<line x1="{MARGIN}" y1="{y:.3}" x2="{:.3}" y2="{y:.3}" stroke="#ddd"/>"##, MARGIN + SIZE).unwrap();
        writeln!(s, r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle">{label}</text>"#, MARGIN + SIZE + 14.0).unwrap();
        writeln!(s, r#"<text x="{:.3}" y="{y:.3}" text-anchor="end" dominant-baseline="middle">{label}</text>"#, MARGIN - 4.0).unwrap();
    }
    let (d0, d1) = (to_xy(P_MIN, P_MIN), to_xy(P_MAX, P_MAX));
    writeln!(s, r##"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#999" stroke-dasharray="4 3"/>"##, d0.0, d0.1, d1.0, d1.1).unwrap();
    writeln!(s, r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">False alarm probability (%)</text>"#, MARGIN + SIZE / 2.0, MARGIN + SIZE + 32.0).unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.3}" text-anchor="middle" transform="rotate(-90 16 {:.3})">Miss probability (%)</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    )
    .unwrap();
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| {
                let (x, y) = to_xy(p.fa, p.miss);
                format!("{x:.3},{y:.3}")
            })
            .collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" ")).unwrap();
        let (eer, _) = curve.eer();
        let (x, y) = to_xy(eer, eer);
        writeln!(s, r#"<circle class="eer" cx="{x:.3}" cy="{y:.3}" r="3.5" fill="{color}"/>"#).unwrap();
        let ly = full + 18.0 * i as f64;
        writeln!(s, r#"<line x1="{MARGIN}" y1="{ly:.3}" x2="{:.3}" y2="{ly:.3}" stroke="{color}" stroke-width="2"/>"#, MARGIN + 24.0).unwrap();
        writeln!(
            s,
            r#"<text x="{:.3}" y="{ly:.3}" dominant-baseline="middle">{} (EER {:.2}%)</text>"#,
            MARGIN + 30.0,
            escape(name),
            100.0 * eer
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Reads DET CSVs and writes the plot; legends are the file stems.
pub fn det_plot(det_csv_paths: &[&Path], out: &Path) -> Result<()> {
    let curves = det_csv_paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, read_det(p)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_atomic(out, render_det_svg(&curves)?.as_bytes())
}

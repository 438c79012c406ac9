//! Static SVG plots: reliability diagrams and risk-coverage curves.
//!
//! Coordinates are formatted with fixed precision so output is
//! byte-identical across runs.

use std::fmt::Write as _;

/// One reliability series: label plus (conf, freq, mass) bins.
pub type BinSeries<'a> = (&'a str, &'a [(f64, f64, f64)]);
/// One coverage series: label plus (coverage, risk) points.
pub type PointSeries<'a> = (&'a str, &'a [(f64, f64)]);

const W: f64 = 480.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn x_of(frac: f64) -> f64 {
    MARGIN + frac * (W - 2.0 * MARGIN)
}

fn y_of(frac: f64) -> f64 {
    H - MARGIN - frac * (H - 2.0 * MARGIN)
}

fn header(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = write!(
        s,
        "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        title
    );
    // Axes
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        px(x_of(0.0)),
        px(y_of(0.0)),
        px(x_of(1.0)),
        px(y_of(0.0))
    );
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        px(x_of(0.0)),
        px(y_of(0.0)),
        px(x_of(0.0)),
        px(y_of(1.0))
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        W / 2.0,
        H - 12.0,
        x_label
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        y_label
    );
    s
}

/// Reliability diagram: per-bin (confidence, frequency) points for one or
/// more methods, with the identity diagonal for reference.
pub fn reliability_diagram(title: &str, series: &[BinSeries<'_>]) -> String {
    let mut s = header(title, "mean predicted p_unsafe (conf)", "empirical unsafe rate (freq)");
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
        px(x_of(0.0)),
        px(y_of(0.0)),
        px(x_of(1.0)),
        px(y_of(1.0))
    );
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (si, (label, bins)) in series.iter().enumerate() {
        let color = palette[si % palette.len()];
        let mut path = String::new();
        for (i, &(conf, freq, _mass)) in bins.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(path, "{cmd}{} {} ", px(x_of(conf)), px(y_of(freq)));
        }
        let _ = writeln!(s, "<path d=\"{}\" fill=\"none\" stroke=\"{color}\"/>", path.trim_end());
        for &(conf, freq, mass) in bins.iter() {
            let r = 2.0 + 6.0 * mass.min(1.0);
            let _ = writeln!(
                s,
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{color}\" fill-opacity=\"0.7\"/>",
                px(x_of(conf)),
                px(y_of(freq)),
                px(r)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>",
            px(x_of(0.02)),
            px(y_of(0.97) + 14.0 * si as f64),
            label
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Risk-coverage curves: one polyline per retained metric or signal.
/// Points are (coverage, risk); risk is rescaled to the series maximum.
pub fn coverage_curves(title: &str, series: &[PointSeries<'_>]) -> String {
    let mut s = header(title, "coverage", "retained risk (scaled)");
    let max_risk = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|&(_, r)| r))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (si, (label, pts)) in series.iter().enumerate() {
        let color = palette[si % palette.len()];
        let mut sorted: Vec<(f64, f64)> = pts.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut path = String::new();
        for (i, &(c, r)) in sorted.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(path, "{cmd}{} {} ", px(x_of(c)), px(y_of(r / max_risk)));
        }
        let _ = writeln!(s, "<path d=\"{}\" fill=\"none\" stroke=\"{color}\"/>", path.trim_end());
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>",
            px(x_of(0.02)),
            px(y_of(0.97) + 14.0 * si as f64),
            label
        );
    }
    s.push_str("</svg>\n");
    s
}

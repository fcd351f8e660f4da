//! Forest-plot table and SVG rendering.

use std::fmt::Write as _;

use invalid_iv::EstimateReport;

/// One row of the forest table.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestRow {
    pub method: String,
    pub estimate: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

/// Rows for one report: a point estimate, and one row per interval component. Later
/// components of a disjoint set leave the estimate empty.
pub fn forest_rows(report: &EstimateReport) -> Vec<ForestRow> {
    let pieces: Vec<(f64, f64)> = report.ci.as_ref().map(|c| c.intervals().to_vec()).unwrap_or_default();
    if pieces.is_empty() {
        return vec![ForestRow { method: report.method.clone(), estimate: report.beta_hat, lo: None, hi: None }];
    }
    pieces
        .iter()
        .enumerate()
        .map(|(k, &(l, u))| ForestRow {
            method: report.method.clone(),
            estimate: if k == 0 { report.beta_hat } else { None },
            lo: Some(l),
            hi: Some(u),
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn forest_csv(rows: &[ForestRow]) -> String {
    let mut out = String::from("method,estimate,lo,hi\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.method, cell(r.estimate), cell(r.lo), cell(r.hi));
    }
    out
}

const ROW_HEIGHT: f64 = 22.0;
const LABEL_WIDTH: f64 = 170.0;
const PLOT_WIDTH: f64 = 480.0;
const MARGIN: f64 = 20.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static forest plot: one line per method label, point estimates as dots, intervals as
/// segments, unbounded ends drawn to the plot edge with an arrow head.
pub fn forest_svg(rows: &[ForestRow]) -> String {
    let finite: Vec<f64> = rows
        .iter()
        .flat_map(|r| [r.estimate, r.lo, r.hi])
        .flatten()
        .filter(|x| x.is_finite())
        .collect();
    let (mut lo, mut hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !(lo.is_finite() && hi.is_finite()) {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let x_of = |v: f64| LABEL_WIDTH + PLOT_WIDTH * ((v.clamp(lo, hi) - lo) / (hi - lo));

    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if labels.last() != Some(&r.method.as_str()) {
            labels.push(&r.method);
        }
    }
    let height = 2.0 * MARGIN + ROW_HEIGHT * (labels.len() as f64 + 1.0);
    let width = LABEL_WIDTH + PLOT_WIDTH + MARGIN;
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="12">"#);
    let axis_y = MARGIN + ROW_HEIGHT * labels.len() as f64;
    let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="black"/>"#, LABEL_WIDTH, LABEL_WIDTH + PLOT_WIDTH);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let x = x_of(v);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{axis_y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, axis_y + 4.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{v:.3}</text>"#, axis_y + 16.0);
    }
    for r in rows {
        let row = labels.iter().position(|l| *l == r.method).expect("label collected");
        let y = MARGIN + ROW_HEIGHT * (row as f64 + 0.5);
        if r.estimate.is_some() || r.lo.is_some() {
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LABEL_WIDTH - 8.0, y + 4.0, escape(&r.method));
        }
        if let (Some(l), Some(u)) = (r.lo, r.hi) {
            let (x1, x2) = (x_of(l), x_of(u));
            let _ = writeln!(svg, r#"<line x1="{x1:.2}" y1="{y:.2}" x2="{x2:.2}" y2="{y:.2}" stroke="black" stroke-width="1.5"/>"#);
            if l == f64::NEG_INFINITY {
                let _ = writeln!(svg, r#"<path d="M {x1:.2} {y:.2} l 6 -4 l 0 8 z"/>"#);
            }
            if u == f64::INFINITY {
                let _ = writeln!(svg, r#"<path d="M {x2:.2} {y:.2} l -6 -4 l 0 8 z"/>"#);
            }
        }
        if let Some(e) = r.estimate {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{y:.2}" r="3.5"/>"#, x_of(e));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

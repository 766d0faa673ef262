use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::hybrid::HybridArc;
use crate::metrics::{error_norms, Estimate, RunReport};
use crate::supervisor::MultiObserver;

use super::ScenarioError;

/// `t, j`, the state layout, then `|e₁|, |e_σ|, J₁, J_σ`.
pub fn trace_header(sys: &MultiObserver) -> Vec<String> {
    let mut h = vec!["t".to_string(), "j".into()];
    h.extend(sys.layout().column_names());
    h.extend(["e1_norm", "esigma_norm", "J1", "Jsigma"].map(String::from));
    h
}

pub fn write_trace(out: impl Write, arc: &HybridArc, sys: &MultiObserver, report: &RunReport) -> Result<(), ScenarioError> {
    let err = |e: csv::Error| ScenarioError::Output(e.to_string());
    let lay = sys.layout();
    let e1 = error_norms(arc, lay, Estimate::Nominal);
    let es = error_norms(arc, lay, Estimate::Sigma);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(sys)).map_err(err)?;
    let sigma_col = lay.sigma();
    for (i, s) in arc.samples.iter().enumerate() {
        let mut rec: Vec<String> = Vec::with_capacity(lay.dim() + 6);
        rec.push(s.time.t.to_string());
        rec.push(s.time.j.to_string());
        for (k, v) in s.state.iter().enumerate() {
            rec.push(if k == sigma_col { (v.round() as usize).to_string() } else { v.to_string() });
        }
        rec.push(e1[i].to_string());
        rec.push(es[i].to_string());
        rec.push(report.j_1_trace[i].to_string());
        rec.push(report.j_sigma_trace[i].to_string());
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| ScenarioError::Output(e.to_string()))
}

pub fn write_trace_file(path: &Path, arc: &HybridArc, sys: &MultiObserver, report: &RunReport) -> Result<(), ScenarioError> {
    let f = std::fs::File::create(path).map_err(|e| ScenarioError::Output(format!("{}: {e}", path.display())))?;
    write_trace(std::io::BufWriter::new(f), arc, sys, report)
}

const W: f64 = 900.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const GAP: f64 = 40.0;
const MAX_POINTS: usize = 2500;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

fn decimate(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points;
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let last = *points.last().expect("nonempty");
    let mut out: Vec<_> = points.into_iter().step_by(stride).collect();
    out.push(last);
    out
}

fn panel(svg: &mut String, top: f64, title: &str, series: &[Series], log_y: bool, t_end: f64) {
    let plot_w = W - MARGIN_L - MARGIN_R;
    let tf = |y: f64| if log_y { y.max(1e-12).log10() } else { y };
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| tf(p.1))).filter(|v| v.is_finite());
    let (mut lo, mut hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |t: f64| MARGIN_L + plot_w * t / t_end.max(1e-12);
    let y = |v: f64| top + PANEL_H * (1.0 - (tf(v) - lo) / (hi - lo));
    let _ = writeln!(svg, r##"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="#888"/>"##);
    let _ = writeln!(svg, r#"<text x="{MARGIN_L}" y="{}" font-size="13">{title}</text>"#, top - 6.0);
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let yy = top + PANEL_H * (1.0 - i as f64 / 4.0);
        let label = if log_y { format!("1e{v:.1}") } else { format!("{v:.3}") };
        let _ = writeln!(svg, r#"<text x="{}" y="{yy:.1}" font-size="10" text-anchor="end">{label}</text>"#, MARGIN_L - 4.0);
    }
    for i in 0..=5 {
        let t = t_end * i as f64 / 5.0;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" font-size="10" text-anchor="middle">{t:.1}</text>"#, x(t), top + PANEL_H + 12.0);
    }
    for (k, s) in series.iter().enumerate() {
        let mut path = String::new();
        for (i, &(t, v)) in s.points.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, x(t), y(v));
        }
        let _ = writeln!(svg, r#"<path d="{path}" fill="none" stroke="{}" stroke-width="1.2"/>"#, s.color);
        let lx = W - MARGIN_R - 150.0;
        let ly = top + 14.0 + 14.0 * k as f64;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/>"#, ly - 4.0, lx + 18.0, ly - 4.0, s.color);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" font-size="11">{}</text>"#, lx + 22.0, s.label);
    }
}

/// Error norms (log scale), cost traces and the selected mode.
pub fn render_svg(arc: &HybridArc, sys: &MultiObserver, report: &RunReport) -> String {
    let lay = sys.layout();
    let t_end = arc.final_time().map_or(1.0, |h| h.t);
    let times: Vec<f64> = arc.samples.iter().map(|s| s.time.t).collect();
    let zip = |v: &[f64]| decimate(times.iter().copied().zip(v.iter().copied()).collect());
    let e1 = error_norms(arc, lay, Estimate::Nominal);
    let es = error_norms(arc, lay, Estimate::Sigma);
    let sigma: Vec<f64> = arc.samples.iter().map(|s| (lay.sigma_of(&s.state) + 1) as f64).collect();
    let h = 3.0 * PANEL_H + 2.0 * GAP + 50.0;
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{h}" font-family="sans-serif">"#);
    svg.push('\n');
    panel(&mut svg, 25.0, "|e| (log scale)", &[
        Series { label: "nominal |e_1|", color: "#d9a400", points: zip(&e1) },
        Series { label: "hybrid |e_sigma|", color: "#c0392b", points: zip(&es) },
    ], true, t_end);
    panel(&mut svg, 25.0 + PANEL_H + GAP, "performance cost J", &[
        Series { label: "J_1", color: "#d9a400", points: zip(&report.j_1_trace) },
        Series { label: "J_sigma", color: "#c0392b", points: zip(&report.j_sigma_trace) },
    ], false, t_end);
    panel(&mut svg, 25.0 + 2.0 * (PANEL_H + GAP), "selected mode sigma", &[
        Series { label: "sigma", color: "#2c6fbb", points: zip(&sigma) },
    ], false, t_end);
    svg.push_str("</svg>\n");
    svg
}

//! Static SVG line charts with standard-error bands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use rscore::pipeline::rate_grid;

use crate::experiment::{summarize, ResultRow};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    ErrorVsIteration,
    ErrorVsBeta2,
    RateCurves,
}

impl PlotKind {
    pub const NAMES: &'static [&'static str] = &["error-vs-iteration", "error-vs-beta2", "rate-curves"];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "error-vs-iteration" => Some(PlotKind::ErrorVsIteration),
            "error-vs-beta2" => Some(PlotKind::ErrorVsBeta2),
            "rate-curves" => Some(PlotKind::RateCurves),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
    /// `(x, y, standard error)` sorted by `x`.
    pub points: Vec<(f64, f64, f64)>,
}

/// Externally computed errors to draw next to ours, e.g. from another
/// method. Columns: `label,x,error`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct OverlayRow {
    pub label: String,
    pub x: f64,
    pub error: f64,
}

pub fn read_overlay(path: &Path) -> Result<Vec<OverlayRow>, CliError> {
    let err = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().collect::<Result<_, _>>().map_err(err)
}

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn overlay_series(rows: &[OverlayRow], first_color: usize) -> Vec<Series> {
    let mut by: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        by.entry(&r.label).or_default().entry(r.x.to_bits()).or_default().push(r.error);
    }
    by.into_iter()
        .enumerate()
        .map(|(i, (label, pts))| {
            let mut points: Vec<(f64, f64, f64)> = pts
                .into_iter()
                .map(|(x, v)| {
                    let n = v.len() as f64;
                    let m = v.iter().sum::<f64>() / n;
                    let se = if v.len() > 1 {
                        (v.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
                    } else {
                        0.0
                    };
                    (f64::from_bits(x), m, se)
                })
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label: label.to_string(),
                color: PALETTE[(first_color + i) % PALETTE.len()],
                dashed: true,
                points,
            }
        })
        .collect()
}

fn available(rows: &[ResultRow]) -> String {
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort();
    methods.dedup();
    let mut grid: Vec<f64> = rows.iter().filter_map(|r| r.grid_value).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    format!("methods {methods:?}, grid values {grid:?}")
}

/// Renders `kind` from a results table (ignored for rate curves).
pub fn plot_results(rows: &[ResultRow], kind: PlotKind, overlay: &[OverlayRow]) -> Result<String, CliError> {
    let summary = summarize(rows);
    let (title, xlabel, ylabel, mut series) = match kind {
        PlotKind::RateCurves => {
            let grid = rate_grid(0.01, 0.49, 481)?;
            let curve = |label: &str, color, f: fn(&(f64, f64, f64)) -> f64| Series {
                label: label.into(),
                color,
                dashed: false,
                points: grid.iter().map(|g| (g.0, f(g), 0.0)).collect(),
            };
            (
                "Error-rate exponents",
                "beta",
                "exponent",
                vec![curve("a0 (SCORE)", "#1f77b4", |g| g.1), curve("a1 (R-SCORE)", "#d62728", |g| g.2)],
            )
        }
        PlotKind::ErrorVsIteration => {
            let grids: Vec<Option<u64>> = {
                let mut g: Vec<Option<u64>> = summary.iter().map(|s| s.grid_value.map(f64::to_bits)).collect();
                g.dedup();
                g
            };
            if grids.len() > 1 {
                return Err(CliError::Config(format!(
                    "error-vs-iteration needs a single grid point; available: {}",
                    available(rows)
                )));
            }
            let trace: Vec<(f64, f64, f64)> = summary
                .iter()
                .filter(|s| s.method == "score" || s.method == "rscore")
                .map(|s| (s.iteration as f64, s.mean, s.se))
                .collect();
            if trace.is_empty() {
                return Err(CliError::Config(format!(
                    "no score/rscore rows to plot; available: {}",
                    available(rows)
                )));
            }
            let mut series = vec![Series {
                label: "R-SCORE (m = 0 is SCORE)".into(),
                color: PALETTE[0],
                dashed: false,
                points: trace.clone(),
            }];
            if let Some(o) = summary.iter().find(|s| s.method == "oracle") {
                let (x0, x1) = (trace[0].0, trace[trace.len() - 1].0.max(1.0));
                series.push(Series {
                    label: "oracle N".into(),
                    color: PALETTE[2],
                    dashed: true,
                    points: vec![(x0, o.mean, o.se), (x1, o.mean, o.se)],
                });
            }
            ("Error rate by iteration", "iteration m", "error rate", series)
        }
        PlotKind::ErrorVsBeta2 => {
            let gridded: Vec<_> = summary.iter().filter(|s| s.grid_value.is_some()).collect();
            if gridded.is_empty() {
                return Err(CliError::Config(format!(
                    "error-vs-beta2 needs grid rows; available: {}",
                    available(rows)
                )));
            }
            let last_iter = gridded
                .iter()
                .filter(|s| s.method == "rscore")
                .map(|s| s.iteration)
                .max()
                .unwrap_or(0);
            let mut series = Vec::new();
            for (i, (method, iter, label)) in [
                ("score", 0, "SCORE".to_string()),
                ("rscore", last_iter, format!("R-SCORE (m = {last_iter})")),
                ("oracle", 1, "oracle N".to_string()),
            ]
            .into_iter()
            .enumerate()
            {
                let points: Vec<_> = gridded
                    .iter()
                    .filter(|s| s.method == method && s.iteration == iter)
                    .map(|s| (s.grid_value.unwrap(), s.mean, s.se))
                    .collect();
                if !points.is_empty() {
                    series.push(Series {
                        label,
                        color: PALETTE[i],
                        dashed: method == "oracle",
                        points,
                    });
                }
            }
            ("Error rate by beta2", "beta2", "error rate", series)
        }
    };
    let next = series.len();
    series.extend(overlay_series(overlay, next));
    Ok(render_svg(title, xlabel, ylabel, &series))
}

/// Up to about six round tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

pub fn render_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 40.0;
    const B: f64 = 55.0;
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y, se) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y - se);
        y1 = y1.max(y + se);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    y1 += 0.05 * (y1 - y0);
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<g stroke="black"><line x1="{L}" y1="{0}" x2="{1}" y2="{0}"/><line x1="{L}" y1="{T}" x2="{L}" y2="{0}"/></g>"#,
        H - B,
        W - R
    );
    for t in ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{0}" x2="{x:.2}" y2="{1}" stroke="black"/><text x="{x:.2}" y="{2}" text-anchor="middle">{3}</text>"#,
            H - B,
            H - B + 5.0,
            H - B + 19.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{y:.2}" x2="{L}" y2="{y:.2}" stroke="black"/><line x1="{L}" y1="{y:.2}" x2="{1}" y2="{y:.2}" stroke="#ddd"/><text x="{2}" y="{3:.2}" text-anchor="end">{4}</text>"##,
            L - 5.0,
            W - R,
            L - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        (L + W - R) / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{ylabel}</text>"#,
        (T + H - B) / 2.0
    );
    for ser in series {
        if ser.points.iter().any(|p| p.2 > 0.0) {
            let mut d = String::new();
            for (i, p) in ser.points.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, px(p.0), py(p.1 + p.2));
            }
            for p in ser.points.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", px(p.0), py(p.1 - p.2));
            }
            let _ = writeln!(
                s,
                r#"<path class="band" d="{}Z" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
                d,
                ser.color
            );
        }
        let line: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
            line.join(" "),
            ser.color
        );
    }
    for (i, ser) in series.iter().enumerate() {
        let y = T + 10.0 + 18.0 * i as f64;
        let x = W - R - 190.0;
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            x + 24.0,
            ser.color,
            x + 30.0,
            y + 4.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}

//! Minimal SVG line/point charts for sweep summaries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{read_summary_csv, ConditionSummary, Metric};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    /// Confidence interval, drawn as a vertical error bar.
    pub interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// "Nice" tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
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
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

impl Chart {
    fn bounds(&self) -> Option<(f64, f64, f64, f64)> {
        let pts: Vec<&Point> = self.series.iter().flat_map(|s| &s.points).collect();
        if pts.is_empty() {
            return None;
        }
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for p in pts {
            x = (x.0.min(p.x), x.1.max(p.x));
            let (lo, hi) = p.interval.unwrap_or((p.y, p.y));
            y = (y.0.min(lo.min(p.y)), y.1.max(hi.max(p.y)));
        }
        let pad = |(a, b): (f64, f64)| {
            let d = if b > a { 0.05 * (b - a) } else { 0.5 };
            (a - d, b + d)
        };
        let (x0, x1) = pad(x);
        let (y0, y1) = pad(y);
        Some((x0, x1, y0, y1))
    }

    pub fn to_svg(&self) -> Result<String> {
        let (x0, x1, y0, y1) = self
            .bounds()
            .ok_or_else(|| Error::NoData(format!("chart `{}` has no points", self.title)))?;
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                MARGIN_TOP + plot_h,
                MARGIN_TOP + plot_h + 5.0,
                MARGIN_TOP + plot_h + 18.0,
                fmt_tick(t)
            );
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                MARGIN_LEFT,
                MARGIN_LEFT + plot_w,
                MARGIN_LEFT - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut pts = s.points.clone();
            pts.sort_by(|a, b| a.x.total_cmp(&b.x));
            if pts.len() > 1 {
                let path: Vec<String> = pts
                    .iter()
                    .map(|p| format!("{:.1},{:.1}", sx(p.x), sy(p.y)))
                    .collect();
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    path.join(" ")
                );
            }
            for p in &pts {
                if let Some((lo, hi)) = p.interval {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}"/>"#,
                        sy(lo),
                        sy(hi),
                        x = sx(p.x)
                    );
                }
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                    sx(p.x),
                    sy(p.y)
                );
            }
            let ly = MARGIN_TOP + 10.0 + 18.0 * i as f64;
            let lx = MARGIN_LEFT + plot_w + 12.0;
            let _ = writeln!(
                out,
                r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                ly - 9.0,
                lx + 15.0,
                ly,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        Ok(out)
    }
}

fn point(x: f64, s: &ConditionSummary, metric: Metric) -> Point {
    let ci = s.metric(metric);
    Point {
        x,
        y: ci.mean,
        interval: ci.low().zip(ci.high()),
    }
}

/// Groups conditions into labelled series, preserving first-appearance order.
fn series_by<F, G>(rows: &[ConditionSummary], metric: Metric, label: F, x: G) -> Vec<Series>
where
    F: Fn(&ConditionSummary) -> String,
    G: Fn(&ConditionSummary) -> f64,
{
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let l = label(r);
        let p = point(x(r), r, metric);
        match out.iter_mut().find(|s| s.label == l) {
            Some(s) => s.points.push(p),
            None => out.push(Series {
                label: l,
                points: vec![p],
            }),
        }
    }
    out
}

fn topology_label(s: &ConditionSummary) -> String {
    match s.key.topology_param {
        Some(p) => format!("{} p={p}", s.key.topology_kind),
        None => s.key.topology_kind.clone(),
    }
}

fn supervision_label(s: &ConditionSummary) -> String {
    format!("s={}", s.key.supervision_rate)
}

/// Charts for one experiment's condition summaries:
/// experiment 1 plots every metric against supervision rate per topology,
/// experiment 2 plots consistency against realized average degree, and
/// experiment 3 plots the divergences against global-connection probability.
pub fn experiment_charts(experiment_id: &str, rows: &[ConditionSummary]) -> Vec<(String, Chart)> {
    let chart = |metric: Metric, x_label: &str, series: Vec<Series>| Chart {
        title: format!("Experiment {experiment_id}: {}", metric.name().replace('_', " ")),
        x_label: x_label.to_string(),
        y_label: metric.name().replace('_', " "),
        series,
    };
    let name = |m: Metric| format!("exp{experiment_id}_{}.svg", m.name());
    match experiment_id {
        "2" => [Metric::SpeakingConsistency, Metric::ListeningConsistency]
            .into_iter()
            .map(|m| {
                let s = series_by(rows, m, supervision_label, |r| r.mean_avg_degree);
                (name(m), chart(m, "realized average degree", s))
            })
            .collect(),
        "3" => [
            Metric::SignalingDivergence,
            Metric::BetweenAgentDivergence,
            Metric::WithinAgentDivergence,
        ]
        .into_iter()
        .map(|m| {
            let s = series_by(rows, m, supervision_label, |r| r.key.topology_param.unwrap_or(0.0));
            (name(m), chart(m, "global connection probability", s))
        })
        .collect(),
        _ => Metric::ALL
            .into_iter()
            .map(|m| {
                let s = series_by(rows, m, topology_label, |r| r.key.supervision_rate);
                (name(m), chart(m, "supervision rate", s))
            })
            .collect(),
    }
}

/// Renders the charts for `rows` into `out_dir`. Nothing is written when
/// `rows` is empty.
pub fn write_experiment_plots(
    experiment_id: &str,
    rows: &[ConditionSummary],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::NoData(format!(
            "no conditions to plot for experiment {experiment_id}"
        )));
    }
    let rendered = experiment_charts(experiment_id, rows)
        .into_iter()
        .map(|(file, chart)| Ok((out_dir.join(file), chart.to_svg()?)))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (path, svg) in rendered {
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Renders every `summary_exp<id>.csv` found in `in_dir`.
pub fn plot_summaries(in_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(in_dir).map_err(|e| Error::io(in_dir, e))?;
    let mut found: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(in_dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(id) = name
            .strip_prefix("summary_exp")
            .and_then(|rest| rest.strip_suffix(".csv"))
        {
            found.push((id.to_string(), path.clone()));
        }
    }
    if found.is_empty() {
        return Err(Error::NoData(format!(
            "no summary_exp*.csv files in {}",
            in_dir.display()
        )));
    }
    found.sort();
    let mut written = Vec::new();
    for (id, path) in found {
        let rows = read_summary_csv(&path)?;
        written.extend(write_experiment_plots(&id, &rows, out_dir)?);
    }
    Ok(written)
}

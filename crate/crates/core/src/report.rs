//! JSON, CSV and SVG output for the report types.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{ConvergenceReport, ExpansionTable, RateFit};
use crate::error::{Error, Result};
use crate::expansion::{LeadingConstant, PsiSample};
use crate::montecarlo::{EstimateSource, RichardsonPoint, WeakErrorReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            Some(e) if e.eq_ignore_ascii_case("svg") => Format::Svg,
            _ => Format::Json,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(Error::InvalidConfig(format!("unknown format '{other}'"))),
        }
    }
}

/// A named `(h, |error|)` series for log-log plots.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Anything that can be written as a table and, optionally, plotted.
pub trait Tabular {
    fn headers(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<String>>;

    fn series(&self) -> Vec<Series> {
        Vec::new()
    }

    fn fit(&self) -> Option<&RateFit> {
        None
    }

    fn title(&self) -> String {
        String::new()
    }
}

/// 17 significant digits, enough to recover every `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.16e}")
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn source_name(s: EstimateSource) -> &'static str {
    match s {
        EstimateSource::Mc => "mc",
        EstimateSource::Oracle => "oracle",
        EstimateSource::PsiPrediction => "psi_prediction",
    }
}

impl Tabular for WeakErrorReport {
    fn headers(&self) -> Vec<String> {
        strings(&["n_steps", "h", "estimate", "stderr", "source"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.levels
            .iter()
            .map(|l| {
                vec![
                    l.n_steps.to_string(),
                    fmt_f64(l.h),
                    fmt_f64(l.estimate),
                    fmt_f64(l.stderr),
                    source_name(l.source).to_string(),
                ]
            })
            .collect()
    }

    fn series(&self) -> Vec<Series> {
        vec![Series {
            label: format!("{} {} weak error", self.problem, self.scheme),
            points: self.levels.iter().map(|l| (l.h, l.estimate.abs())).collect(),
        }]
    }

    fn title(&self) -> String {
        format!("weak error: {} ({})", self.problem, self.scheme)
    }
}

impl Tabular for ConvergenceReport {
    fn headers(&self) -> Vec<String> {
        strings(&["n_steps", "h", "weak_err"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| vec![r.n_steps.to_string(), fmt_f64(r.h), fmt_f64(r.weak_err)])
            .collect()
    }

    fn series(&self) -> Vec<Series> {
        vec![Series {
            label: "|weak error|".into(),
            points: self.rows.iter().map(|r| (r.h, r.weak_err.abs())).collect(),
        }]
    }

    fn fit(&self) -> Option<&RateFit> {
        Some(&self.fit)
    }

    fn title(&self) -> String {
        format!("convergence: {} ({})", self.problem, self.scheme)
    }
}

impl Tabular for ExpansionTable {
    fn headers(&self) -> Vec<String> {
        strings(&["n_steps", "h", "weak_err", "h_times_c1", "second_order_residual"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.n_steps.to_string(),
                    fmt_f64(r.h),
                    fmt_f64(r.weak_err),
                    fmt_f64(r.h_times_c1),
                    fmt_f64(r.second_order_residual),
                ]
            })
            .collect()
    }

    fn series(&self) -> Vec<Series> {
        vec![
            Series {
                label: "|weak error|".into(),
                points: self.rows.iter().map(|r| (r.h, r.weak_err.abs())).collect(),
            },
            Series {
                label: "|weak error - h C1|".into(),
                points: self
                    .rows
                    .iter()
                    .map(|r| (r.h, r.second_order_residual.abs()))
                    .collect(),
            },
        ]
    }

    fn fit(&self) -> Option<&RateFit> {
        self.residual_fit.as_ref()
    }

    fn title(&self) -> String {
        format!("expansion: {}", self.problem)
    }
}

/// Richardson-extrapolated errors for one problem and scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichardsonTable {
    pub problem: String,
    pub points: Vec<RichardsonPoint>,
    pub fit: Option<RateFit>,
}

impl Tabular for RichardsonTable {
    fn headers(&self) -> Vec<String> {
        strings(&["n_steps", "h", "extrapolated_error", "stderr"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .map(|p| {
                vec![
                    p.n_steps.to_string(),
                    fmt_f64(p.h),
                    fmt_f64(p.extrapolated_error),
                    fmt_f64(p.stderr),
                ]
            })
            .collect()
    }

    fn series(&self) -> Vec<Series> {
        vec![Series {
            label: "|extrapolated error|".into(),
            points: self
                .points
                .iter()
                .map(|p| (p.h, p.extrapolated_error.abs()))
                .collect(),
        }]
    }

    fn fit(&self) -> Option<&RateFit> {
        self.fit.as_ref()
    }

    fn title(&self) -> String {
        format!("richardson: {}", self.problem)
    }
}

/// ψ values on a space-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiTable {
    pub problem: String,
    pub samples: Vec<PsiSample>,
}

impl Tabular for PsiTable {
    fn headers(&self) -> Vec<String> {
        strings(&["t", "x", "psi"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.samples
            .iter()
            .map(|s| vec![fmt_f64(s.t), fmt_f64(s.x), fmt_f64(s.psi)])
            .collect()
    }
}

impl Tabular for LeadingConstant {
    fn headers(&self) -> Vec<String> {
        strings(&["value", "quad_nodes", "abs_err_est"])
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            fmt_f64(self.value),
            self.quad_nodes.to_string(),
            fmt_f64(self.abs_err_est),
        ]]
    }
}

pub fn to_csv<R: Tabular + ?Sized>(report: &R) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidConfig(format!("csv encoding failed: {e}"));
    writer.write_record(report.headers()).map_err(io)?;
    for row in report.rows() {
        writer.write_record(row).map_err(io)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Log-log scatter of every series, one polyline each, plus the fitted line.
pub fn to_svg<R: Tabular + ?Sized>(report: &R) -> Result<String> {
    let series: Vec<Series> = report
        .series()
        .into_iter()
        .map(|s| Series {
            label: s.label,
            points: s.points.into_iter().filter(|&(h, e)| h > 0.0 && e > 0.0).collect(),
        })
        .collect();
    if report.series().is_empty() {
        return Err(Error::InvalidConfig("this report has no plottable series".into()));
    }
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(h, e)| (h.log10(), e.log10())))
        .collect();

    let (w, ht, margin) = (640.0, 480.0, 60.0);
    let bounds = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo.is_finite() && hi > lo {
            (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
        } else if lo.is_finite() {
            (lo - 1.0, lo + 1.0)
        } else {
            (0.0, 1.0)
        }
    };
    let (x_lo, x_hi) = bounds(&mut all.iter().map(|p| p.0));
    let (y_lo, y_hi) = bounds(&mut all.iter().map(|p| p.1));
    let px = |lx: f64| margin + (lx - x_lo) / (x_hi - x_lo) * (w - 2.0 * margin);
    let py = |ly: f64| ht - margin - (ly - y_lo) / (y_hi - y_lo) * (ht - 2.0 * margin);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{ht}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{margin}" y="{margin}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * margin,
        ht - 2.0 * margin
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        w / 2.0,
        xml_escape(&report.title())
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">log10 h</text>"#,
        w / 2.0,
        ht - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 18 {})">log10 |error|</text>"#,
        ht / 2.0,
        ht / 2.0
    );
    for (tick, label_y) in [(x_lo, ht - margin + 15.0), (x_hi, ht - margin + 15.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{label_y:.2}" text-anchor="middle" font-family="sans-serif" font-size="10">{tick:.2}</text>"#,
            px(tick)
        );
    }
    for tick in [y_lo, y_hi] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{tick:.2}</text>"#,
            margin - 4.0,
            py(tick)
        );
    }

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(h, e)| format!("{:.2},{:.2}", px(h.log10()), py(e.log10())))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        for &(h, e) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(h.log10()),
                py(e.log10())
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            margin + 10.0,
            margin + 18.0 + 16.0 * i as f64,
            xml_escape(&s.label)
        );
    }

    if let Some(fit) = report.fit() {
        let line = |lx: f64| (fit.intercept + fit.slope * lx * std::f64::consts::LN_10) / std::f64::consts::LN_10;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6,4"/>"#,
            px(x_lo),
            py(line(x_lo)),
            px(x_hi),
            py(line(x_hi))
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="12">slope = {:.4}, r² = {:.5}</text>"#,
            w - margin - 10.0,
            ht - margin - 10.0,
            fit.slope,
            fit.r_squared
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders `report` and writes it to `path`.
pub fn emit_report<R>(report: &R, format: Format, path: &Path) -> Result<()>
where
    R: Tabular + Serialize + ?Sized,
{
    let body = render(report, format)?;
    fs::write(path, body).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        source,
    })
}

pub fn render<R>(report: &R, format: Format) -> Result<String>
where
    R: Tabular + Serialize + ?Sized,
{
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        Format::Csv => to_csv(report),
        Format::Svg => to_svg(report),
    }
}

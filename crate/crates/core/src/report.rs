//! Chart-ready data and static renderings of run summaries and ensemble deltas.
//!
//! JSON and CSV are the contract: numbers use fixed 6-decimal formatting and
//! axes follow the registry order, so identical inputs give identical bytes.
//! SVG is a convenience rendering of the same data.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::ensemble::DeltaReport;
use crate::metrics::{Metric, Prf, RunSummary};
use crate::schema::attribute_registry;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to chart")]
    Empty,
    #[error("series \"{series}\" lacks attribute \"{key}\"")]
    MissingAttribute { series: String, key: String },
    #[error("series \"{series}\" has {got} values for {axes} axes")]
    RaggedSeries { series: String, got: usize, axes: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Radar,
    GroupedBar,
    DeltaBar,
}

/// Which cross-attribute mean a summary chart shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Macro,
    SupportWeighted,
}

impl Averaging {
    pub fn as_str(self) -> &'static str {
        match self {
            Averaging::Macro => "macro",
            Averaging::SupportWeighted => "support_weighted_macro",
        }
    }

    fn pick(self, s: &RunSummary) -> &Prf {
        match self {
            Averaging::Macro => &s.macro_avg,
            Averaging::SupportWeighted => &s.support_weighted_macro,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub title: String,
    /// Radar and delta charts: attribute keys. Summary bars: metric names.
    pub axes: Vec<String>,
    /// Series name → values aligned to `axes`.
    pub series: IndexMap<String, Vec<f64>>,
}

impl ChartSpec {
    pub fn new(kind: ChartKind, title: impl Into<String>, axes: Vec<String>, series: IndexMap<String, Vec<f64>>) -> Result<Self, ReportError> {
        if series.is_empty() {
            return Err(ReportError::Empty);
        }
        if let Some((name, values)) = series.iter().find(|(_, v)| v.len() != axes.len()) {
            return Err(ReportError::RaggedSeries {
                series: name.clone(),
                got: values.len(),
                axes: axes.len(),
            });
        }
        Ok(Self {
            kind,
            title: title.into(),
            axes,
            series,
        })
    }
}

fn registry_axes() -> Vec<String> {
    attribute_registry().keys().map(str::to_string).collect()
}

/// One series per provider over the 21 attributes, using each attribute's weighted metric.
pub fn radar_chart_data(summaries: &IndexMap<String, RunSummary>, metric: Metric) -> Result<ChartSpec, ReportError> {
    let axes = registry_axes();
    let mut series = IndexMap::with_capacity(summaries.len());
    for (name, summary) in summaries {
        let values = axes
            .iter()
            .map(|key| {
                summary.weighted(key).map(|p| p.get(metric)).ok_or_else(|| ReportError::MissingAttribute {
                    series: name.clone(),
                    key: key.clone(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        series.insert(name.clone(), values);
    }
    ChartSpec::new(ChartKind::Radar, format!("Per-attribute weighted {metric}"), axes, series)
}

/// One series per ensemble of per-attribute `ensemble − baseline` values.
pub fn delta_chart_data(deltas: &IndexMap<String, DeltaReport>, metric: Metric) -> Result<ChartSpec, ReportError> {
    let axes = registry_axes();
    let mut series = IndexMap::with_capacity(deltas.len());
    let mut baselines: Vec<&str> = Vec::new();
    for (name, delta) in deltas {
        if !baselines.contains(&delta.baseline_id.as_str()) {
            baselines.push(&delta.baseline_id);
        }
        let values = axes
            .iter()
            .map(|key| {
                delta.per_attribute.get(key).map(|p| p.get(metric)).ok_or_else(|| ReportError::MissingAttribute {
                    series: name.clone(),
                    key: key.clone(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        series.insert(name.clone(), values);
    }
    let title = format!("{metric} difference vs {}", baselines.join(", "));
    ChartSpec::new(ChartKind::DeltaBar, title, axes, series)
}

/// Cross-attribute precision, recall and F1 per provider.
pub fn summary_chart_data(summaries: &IndexMap<String, RunSummary>, averaging: Averaging) -> Result<ChartSpec, ReportError> {
    let axes = Metric::ALL.iter().map(|m| m.as_str().to_string()).collect();
    let series = summaries
        .iter()
        .map(|(name, s)| {
            let prf = averaging.pick(s);
            (name.clone(), Metric::ALL.iter().map(|&m| prf.get(m)).collect())
        })
        .collect();
    let title = match averaging {
        Averaging::Macro => "Mean over attributes",
        Averaging::SupportWeighted => "Support-weighted mean over attributes",
    };
    ChartSpec::new(ChartKind::GroupedBar, title, axes, series)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Csv, Format::Svg];

    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Svg => "svg",
        }
    }
}

/// `{:.6}` formatting; non-finite values become empty / null.
pub fn fixed6(v: f64) -> String {
    if v.is_finite() {
        let s = format!("{v:.6}");
        // avoid "-0.000000"
        if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    } else {
        String::new()
    }
}

struct Fixed6(f64);

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let text = fixed6(self.0);
        if text.is_empty() {
            return serializer.serialize_none();
        }
        RawValue::from_string(text).map_err(serde::ser::Error::custom)?.serialize(serializer)
    }
}

#[derive(Serialize)]
struct ChartJson<'a> {
    kind: ChartKind,
    title: &'a str,
    axes: &'a [String],
    series: IndexMap<&'a str, Vec<Fixed6>>,
}

pub fn render(spec: &ChartSpec, format: Format) -> String {
    match format {
        Format::Json => render_json(spec),
        Format::Csv => render_csv(spec),
        Format::Svg => match spec.kind {
            ChartKind::Radar => svg_radar(spec),
            ChartKind::GroupedBar | ChartKind::DeltaBar => svg_bars(spec),
        },
    }
}

fn render_json(spec: &ChartSpec) -> String {
    let doc = ChartJson {
        kind: spec.kind,
        title: &spec.title,
        axes: &spec.axes,
        series: spec
            .series
            .iter()
            .map(|(k, v)| (k.as_str(), v.iter().copied().map(Fixed6).collect()))
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("chart serializes");
    out.push('\n');
    out
}

fn csv_string(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// Long format: one row per (series, axis).
fn render_csv(spec: &ChartSpec) -> String {
    let header = vec!["series".to_string(), "axis".to_string(), "value".to_string()];
    let rows = spec.series.iter().flat_map(|(name, values)| {
        spec.axes
            .iter()
            .zip(values)
            .map(move |(axis, v)| vec![name.clone(), axis.clone(), fixed6(*v)])
    });
    csv_string(std::iter::once(header).chain(rows))
}

/// Writes `<dir>/<name>.<ext>` for each format and returns the paths written.
pub fn emit(spec: &ChartSpec, dir: &Path, name: &str, formats: &[Format]) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::with_capacity(formats.len());
    for &format in formats {
        let path = dir.join(format!("{name}.{}", format.extension()));
        fs::write(&path, render(spec, format)).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

/// One row per (provider, metric) with both cross-attribute means.
pub fn summary_table_csv(summaries: &IndexMap<String, RunSummary>) -> String {
    let header = ["provider", "metric", "macro", "support_weighted_macro", "frames_scored", "frames_excluded", "fatal_records"]
        .map(String::from)
        .to_vec();
    let rows = summaries.iter().flat_map(|(name, s)| {
        Metric::ALL.iter().map(move |&m| {
            vec![
                name.clone(),
                m.to_string(),
                fixed6(s.macro_avg.get(m)),
                fixed6(s.support_weighted_macro.get(m)),
                s.frames_scored.to_string(),
                s.frames_excluded.to_string(),
                s.fatal_records.to_string(),
            ]
        })
    });
    csv_string(std::iter::once(header).chain(rows))
}

/// One row per (provider, attribute) with the weighted metrics and support.
pub fn attribute_table_csv(summaries: &IndexMap<String, RunSummary>) -> String {
    let header = ["provider", "attribute", "precision", "recall", "f1", "support"].map(String::from).to_vec();
    let rows = summaries.iter().flat_map(|(name, s)| {
        s.per_attribute.values().map(move |a| {
            vec![
                name.clone(),
                a.attribute_key.clone(),
                fixed6(a.weighted.precision),
                fixed6(a.weighted.recall),
                fixed6(a.weighted.f1),
                a.support.to_string(),
            ]
        })
    });
    csv_string(std::iter::once(header).chain(rows))
}

/// One row per (ensemble, attribute), plus the two cross-attribute rows.
pub fn delta_table_csv(deltas: &IndexMap<String, DeltaReport>) -> String {
    let header = ["ensemble", "baseline", "attribute", "precision", "recall", "f1"].map(String::from).to_vec();
    let rows = deltas.iter().flat_map(|(name, d)| {
        let row = move |attr: &str, p: &Prf| {
            vec![
                name.clone(),
                d.baseline_id.clone(),
                attr.to_string(),
                fixed6(p.precision),
                fixed6(p.recall),
                fixed6(p.f1),
            ]
        };
        d.per_attribute
            .iter()
            .map(move |(k, p)| row(k, p))
            .chain([row("macro", &d.macro_avg), row("support_weighted_macro", &d.support_weighted_macro)])
    });
    csv_string(std::iter::once(header).chain(rows))
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn svg_open(out: &mut String, w: u32, h: u32, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text class=\"title\" x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        w / 2,
        xml_escape(title)
    );
}

fn svg_legend(out: &mut String, spec: &ChartSpec, x: f64, y: f64) {
    for (i, name) in spec.series.keys().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let yy = y + 18.0 * i as f64;
        let _ = writeln!(out, "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>", yy - 10.0);
        let _ = writeln!(out, "<text class=\"legend\" x=\"{:.1}\" y=\"{yy:.1}\">{}</text>", x + 18.0, xml_escape(name));
    }
}

fn svg_radar(spec: &ChartSpec) -> String {
    let (w, h) = (900u32, 760u32);
    let (cx, cy, r) = (380.0f64, 400.0f64, 260.0f64);
    let n = spec.axes.len().max(1) as f64;
    let point = |i: usize, v: f64| {
        let angle = std::f64::consts::TAU * i as f64 / n - std::f64::consts::FRAC_PI_2;
        let v = v.clamp(0.0, 1.0);
        (cx + r * v * angle.cos(), cy + r * v * angle.sin())
    };
    let mut out = String::new();
    svg_open(&mut out, w, h, &spec.title);
    for ring in 1..=5 {
        let v = f64::from(ring) / 5.0;
        let pts: Vec<String> = (0..spec.axes.len())
            .map(|i| {
                let (x, y) = point(i, v);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(out, "<polygon points=\"{}\" fill=\"none\" stroke=\"#ccc\"/>", pts.join(" "));
    }
    for (i, axis) in spec.axes.iter().enumerate() {
        let (x, y) = point(i, 1.0);
        let _ = writeln!(out, "<line x1=\"{cx:.2}\" y1=\"{cy:.2}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"#ccc\"/>");
        let (lx, ly) = (cx + (x - cx) * 1.08, cy + (y - cy) * 1.08);
        let anchor = if (lx - cx).abs() < 1.0 {
            "middle"
        } else if lx > cx {
            "start"
        } else {
            "end"
        };
        let _ = writeln!(
            out,
            "<text class=\"axis-label\" x=\"{lx:.2}\" y=\"{ly:.2}\" text-anchor=\"{anchor}\">{}</text>",
            xml_escape(axis)
        );
    }
    for (s, values) in spec.series.values().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (x, y) = point(i, v);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            "<polygon class=\"series\" points=\"{}\" fill=\"{color}\" fill-opacity=\"0.12\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
    }
    svg_legend(&mut out, spec, 720.0, 80.0);
    out.push_str("</svg>\n");
    out
}

fn svg_bars(spec: &ChartSpec) -> String {
    let groups = spec.axes.len().max(1);
    let per_group = spec.series.len().max(1);
    let bar_w = 10.0f64;
    let group_w = bar_w * per_group as f64 + 12.0;
    let (left, top, plot_h) = (60.0f64, 50.0f64, 320.0f64);
    let plot_w = group_w * groups as f64;
    let w = (left + plot_w + 220.0).ceil() as u32;
    let h = (top + plot_h + 200.0).ceil() as u32;

    let values = spec.series.values().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = values.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if spec.kind == ChartKind::DeltaBar {
        let m = lo.abs().max(hi.abs()).max(0.05);
        (-m, m)
    } else {
        (0.0, hi.max(1.0))
    };
    let y_of = |v: f64| top + plot_h * (hi - v) / (hi - lo);

    let mut out = String::new();
    svg_open(&mut out, w, h, &spec.title);
    for tick in 0..=4 {
        let v = lo + (hi - lo) * f64::from(tick) / 4.0;
        let y = y_of(v);
        let _ = writeln!(out, "<line x1=\"{left:.1}\" y1=\"{y:.2}\" x2=\"{:.1}\" y2=\"{y:.2}\" stroke=\"#eee\"/>", left + plot_w);
        let _ = writeln!(out, "<text x=\"{:.1}\" y=\"{:.2}\" text-anchor=\"end\">{v:.2}</text>", left - 6.0, y + 4.0);
    }
    let zero = y_of(0.0);
    let _ = writeln!(out, "<line class=\"zero\" x1=\"{left:.1}\" y1=\"{zero:.2}\" x2=\"{:.1}\" y2=\"{zero:.2}\" stroke=\"#333\"/>", left + plot_w);
    for (g, axis) in spec.axes.iter().enumerate() {
        let gx = left + group_w * g as f64 + 6.0;
        for (s, values) in spec.series.values().enumerate() {
            let v = values[g];
            if !v.is_finite() {
                continue;
            }
            let y = y_of(v);
            let (y0, bh) = if y < zero { (y, zero - y) } else { (zero, y - zero) };
            let _ = writeln!(
                out,
                "<rect class=\"bar\" x=\"{:.2}\" y=\"{y0:.2}\" width=\"{bar_w:.1}\" height=\"{bh:.2}\" fill=\"{}\"/>",
                gx + bar_w * s as f64,
                PALETTE[s % PALETTE.len()]
            );
        }
        let lx = gx + bar_w * per_group as f64 / 2.0;
        let ly = top + plot_h + 12.0;
        let _ = writeln!(
            out,
            "<text class=\"axis-label\" x=\"{lx:.2}\" y=\"{ly:.2}\" text-anchor=\"end\" transform=\"rotate(-45 {lx:.2} {ly:.2})\">{}</text>",
            xml_escape(axis)
        );
    }
    svg_legend(&mut out, spec, left + plot_w + 20.0, top + 10.0);
    out.push_str("</svg>\n");
    out
}

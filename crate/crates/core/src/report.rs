//! Figure rendering. Every figure is first reduced to a JSON sidecar holding
//! exactly the numbers that get drawn; the SVG is then a pure function of
//! that sidecar, so re-rendering from the sidecar reproduces the image.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    fixed_effects_regression, group_means, summarize, AnalysisError, AnalysisFilter, GroupMeanRow, GroupSummary,
    RegressionFit, Slice, Source,
};
use crate::bank::{load_bank, BankError, ValueBank};
use crate::jsonl::{read_json, read_jsonl, write_atomic, write_json, JsonlError};
use crate::projection::{Mode, ProjectionRecord};
use crate::rvr::{waterfall_stats, ScoreRecord, WaterfallError, WaterfallRow};
use crate::wvs::WvsRespondent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    /// Resonance / neutral / conflict shares per hypothesis.
    Waterfall,
    /// Box plots of projections by demographic slice.
    Boxpanel,
    /// Group means of survey against generated text, with per-nation fits.
    Scatter,
}

/// One figure to draw.
///
/// Inputs by kind:
/// - `waterfall`: `[scores.jsonl]`
/// - `boxpanel`: `[projections.jsonl]` or `[projections.jsonl, respondents.jsonl]`
/// - `scatter`: `[projections.jsonl, respondents.jsonl]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub inputs: Vec<PathBuf>,
    /// SVG path; the sidecar goes next to it with a `.json` extension.
    pub output: PathBuf,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub x_label: Option<String>,
    #[serde(default)]
    pub y_label: Option<String>,
    /// Boxpanel grouping; defaults to nation.
    #[serde(default)]
    pub slice: Option<Slice>,
    /// Boxpanel: one panel per mode. Defaults to `[combined]`.
    #[serde(default)]
    pub modes: Option<Vec<Mode>>,
    /// Bank for waterfall hypothesis text; the built-in bank when absent.
    #[serde(default)]
    pub bank: Option<PathBuf>,
}

impl FigureSpec {
    pub fn sidecar_path(&self) -> PathBuf {
        self.output.with_extension("json")
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let want: &[usize] = match self.kind {
            FigureKind::Waterfall => &[1],
            FigureKind::Boxpanel => &[1, 2],
            FigureKind::Scatter => &[2],
        };
        if !want.contains(&self.inputs.len()) {
            out.push(format!(
                "{:?} figure takes {:?} inputs, got {}",
                self.kind,
                want,
                self.inputs.len()
            ));
        }
        for p in &self.inputs {
            if !p.exists() {
                out.push(format!("input {} does not exist", p.display()));
            }
        }
        if self.slice.is_some() && self.kind != FigureKind::Boxpanel {
            out.push("`slice` only applies to boxpanel figures".into());
        }
        if matches!(&self.modes, Some(m) if m.is_empty()) {
            out.push("`modes` is empty".into());
        }
        out
    }

    fn resolve(&self, base: &Path) -> FigureSpec {
        let mut s = self.clone();
        s.inputs = s.inputs.iter().map(|p| base.join(p)).collect();
        s.output = base.join(&s.output);
        s.bank = s.bank.map(|p| base.join(p));
        s
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid figure spec for {output}: {problems}")]
    InvalidSpec { output: PathBuf, problems: String },
    #[error(transparent)]
    Data(#[from] JsonlError),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Waterfall(#[from] WaterfallError),
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPanel {
    pub mode: Mode,
    pub groups: Vec<GroupSummary>,
}

/// Everything a figure draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FigureData {
    Waterfall {
        title: String,
        rows: Vec<WaterfallRow>,
    },
    Boxpanel {
        title: String,
        x_label: String,
        y_label: String,
        slice: Slice,
        panels: Vec<BoxPanel>,
    },
    Scatter {
        title: String,
        x_label: String,
        y_label: String,
        points: Vec<GroupMeanRow>,
        fits: Vec<RegressionFit>,
    },
}

/// Reduce the spec's input datasets to figure data.
pub fn figure_data(spec: &FigureSpec, filter: &AnalysisFilter) -> Result<FigureData, ReportError> {
    let problems = spec.problems();
    if !problems.is_empty() {
        return Err(ReportError::InvalidSpec {
            output: spec.output.clone(),
            problems: problems.join("; "),
        });
    }
    let title = |d: &str| spec.title.clone().unwrap_or_else(|| d.to_string());
    Ok(match spec.kind {
        FigureKind::Waterfall => {
            let bank = match &spec.bank {
                Some(p) => load_bank(p)?,
                None => ValueBank::builtin(),
            };
            let scores: Vec<ScoreRecord> = read_jsonl(&spec.inputs[0])?;
            FigureData::Waterfall {
                title: title("Value resonance by hypothesis"),
                rows: waterfall_stats(&scores, &bank)?,
            }
        }
        FigureKind::Boxpanel => {
            let llm: Vec<ProjectionRecord> = read_jsonl(&spec.inputs[0])?;
            let wvs: Vec<WvsRespondent> = match spec.inputs.get(1) {
                Some(p) => read_jsonl(p)?,
                None => Vec::new(),
            };
            let slice = spec.slice.unwrap_or(Slice::Nation);
            let modes = spec.modes.clone().unwrap_or_else(|| vec![Mode::Combined]);
            let mut panels = Vec::new();
            for mode in modes {
                let f = AnalysisFilter { mode, ..filter.clone() };
                // Survey respondents only have a combined projection.
                let w: &[WvsRespondent] = if mode == Mode::Combined { &wvs } else { &[] };
                panels.push(BoxPanel {
                    mode,
                    groups: summarize(&llm, w, slice, &f)?,
                });
            }
            FigureData::Boxpanel {
                title: title(&format!("Traditional-secular projection by {slice}")),
                x_label: spec.x_label.clone().unwrap_or_else(|| slice.to_string()),
                y_label: spec.y_label.clone().unwrap_or_else(|| "projection".into()),
                slice,
                panels,
            }
        }
        FigureKind::Scatter => {
            let llm: Vec<ProjectionRecord> = read_jsonl(&spec.inputs[0])?;
            let wvs: Vec<WvsRespondent> = read_jsonl(&spec.inputs[1])?;
            let table = group_means(&llm, &wvs, filter)?;
            let fits = fixed_effects_regression(&table)?.per_nation;
            FigureData::Scatter {
                title: title("Group means: survey against generated text"),
                x_label: spec
                    .x_label
                    .clone()
                    .unwrap_or_else(|| "mean generated-text projection".into()),
                y_label: spec.y_label.clone().unwrap_or_else(|| "mean survey projection".into()),
                points: table.rows,
                fits,
            }
        }
    })
}

/// Writes the sidecar, then the SVG. Returns the SVG text.
pub fn render(spec: &FigureSpec, filter: &AnalysisFilter) -> Result<String, ReportError> {
    let data = figure_data(spec, filter)?;
    write_json(&spec.sidecar_path(), &data)?;
    let svg = to_svg(&data);
    write_atomic(&spec.output, svg.as_bytes())?;
    Ok(svg)
}

/// SVG for a previously written sidecar.
pub fn render_from_sidecar(sidecar: &Path) -> Result<String, ReportError> {
    let data: FigureData = read_json(sidecar)?;
    Ok(to_svg(&data))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    figure: Vec<FigureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub kind: FigureKind,
    pub title: String,
    pub svg: PathBuf,
    pub sidecar: PathBuf,
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<FigureSpec>, ReportError> {
    let m: Manifest = toml::from_str(text).map_err(|e| ReportError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(m.figure)
}

/// Renders every figure with paths relative to `base` and writes
/// `base/figures/index.json`.
pub fn render_all(specs: &[FigureSpec], base: &Path, filter: &AnalysisFilter) -> Result<Vec<IndexEntry>, ReportError> {
    let mut index = Vec::new();
    for spec in specs {
        let resolved = spec.resolve(base);
        let data = figure_data(&resolved, filter)?;
        write_json(&resolved.sidecar_path(), &data)?;
        write_atomic(&resolved.output, to_svg(&data).as_bytes())?;
        index.push(IndexEntry {
            kind: spec.kind,
            title: data.title().to_string(),
            svg: spec.output.clone(),
            sidecar: spec.sidecar_path(),
        });
    }
    write_json(&base.join("figures").join("index.json"), &index)?;
    Ok(index)
}

/// Figures drawn for a complete run.
pub fn default_figures() -> Vec<FigureSpec> {
    let spec = |kind, inputs: &[&str], output: &str, slice, modes: Option<Vec<Mode>>| FigureSpec {
        kind,
        inputs: inputs.iter().map(PathBuf::from).collect(),
        output: PathBuf::from(output),
        title: None,
        x_label: None,
        y_label: None,
        slice,
        modes,
        bank: None,
    };
    vec![
        spec(
            FigureKind::Waterfall,
            &["scores.jsonl"],
            "figures/waterfall.svg",
            None,
            None,
        ),
        spec(
            FigureKind::Boxpanel,
            &["projections.jsonl", "wvs_respondents.jsonl"],
            "figures/box_nation.svg",
            Some(Slice::Nation),
            None,
        ),
        spec(
            FigureKind::Boxpanel,
            &["projections.jsonl", "wvs_respondents.jsonl"],
            "figures/box_age.svg",
            Some(Slice::Age),
            None,
        ),
        spec(
            FigureKind::Boxpanel,
            &["projections.jsonl", "wvs_respondents.jsonl"],
            "figures/box_sex.svg",
            Some(Slice::Sex),
            None,
        ),
        spec(
            FigureKind::Scatter,
            &["projections.jsonl", "wvs_respondents.jsonl"],
            "figures/scatter.svg",
            None,
            None,
        ),
        spec(
            FigureKind::Boxpanel,
            &["projections.jsonl"],
            "figures/ablation.svg",
            Some(Slice::Nation),
            Some(Mode::ALL.to_vec()),
        ),
    ]
}

impl FigureData {
    pub fn title(&self) -> &str {
        match self {
            FigureData::Waterfall { title, .. }
            | FigureData::Boxpanel { title, .. }
            | FigureData::Scatter { title, .. } => title,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];
const RESONANCE: &str = "#4c9a2a";
const CONFLICT: &str = "#c0392b";
const NEUTRAL: &str = "#bdbdbd";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Two decimals, with negative zero folded into zero.
fn n(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

struct Svg {
    out: String,
}

impl Svg {
    fn new(w: f64, h: f64) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="11">"#,
            n(w),
            n(h),
            n(w),
            n(h)
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        Svg { out }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            n(x),
            n(y),
            esc(s)
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
            n(x),
            n(y),
            n(w.max(0.0)),
            n(h.max(0.0))
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}"/>"#,
            n(x1),
            n(y1),
            n(x2),
            n(y2)
        );
    }

    fn circle(&mut self, x: f64, y: f64, fill: &str) {
        let _ = writeln!(self.out, r#"<circle cx="{}" cy="{}" r="3" fill="{fill}"/>"#, n(x), n(y));
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Linear map from data range to pixel range.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if hi - lo < 1e-9 { (lo - 1.0, hi + 1.0) } else { (lo, hi) };
        let pad = (hi - lo) * 0.05;
        Scale {
            d0: lo - pad,
            d1: hi + pad,
            p0,
            p1,
        }
    }

    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }
}

pub fn to_svg(data: &FigureData) -> String {
    match data {
        FigureData::Waterfall { title, rows } => waterfall_svg(title, rows),
        FigureData::Boxpanel {
            title,
            x_label,
            y_label,
            panels,
            ..
        } => boxpanel_svg(title, x_label, y_label, panels),
        FigureData::Scatter {
            title,
            x_label,
            y_label,
            points,
            fits,
        } => scatter_svg(title, x_label, y_label, points, fits),
    }
}

fn waterfall_svg(title: &str, rows: &[WaterfallRow]) -> String {
    let (left, bar_w, row_h) = (360.0, 400.0, 22.0);
    let h = 60.0 + rows.len() as f64 * row_h + 30.0;
    let mut s = Svg::new(left + bar_w + 40.0, h);
    s.text((left + bar_w) / 2.0, 20.0, "middle", title);
    for (i, r) in rows.iter().enumerate() {
        let y = 40.0 + i as f64 * row_h;
        let label = format!("{} ({})", r.hypothesis, r.polarity.as_str());
        let short: String = if label.chars().count() > 58 {
            label.chars().take(55).chain("...".chars()).collect()
        } else {
            label
        };
        s.text(left - 6.0, y + 14.0, "end", &short);
        let mut x = left;
        for (frac, fill) in [
            (r.conflict_fraction, CONFLICT),
            (r.neutral_fraction, NEUTRAL),
            (r.resonance_fraction, RESONANCE),
        ] {
            let w = frac * bar_w;
            s.rect(x, y, w, row_h - 4.0, fill);
            x += w;
        }
    }
    let ly = h - 16.0;
    for (i, (name, fill)) in [("conflict", CONFLICT), ("neutral", NEUTRAL), ("resonance", RESONANCE)]
        .into_iter()
        .enumerate()
    {
        let x = left + i as f64 * 110.0;
        s.rect(x, ly - 9.0, 10.0, 10.0, fill);
        s.text(x + 14.0, ly, "start", name);
    }
    s.finish()
}

fn boxpanel_svg(title: &str, x_label: &str, y_label: &str, panels: &[BoxPanel]) -> String {
    let (left, panel_h, gap) = (60.0, 220.0, 50.0);
    let ngroups = panels
        .iter()
        .map(|p| {
            let mut keys: Vec<String> = p.groups.iter().map(|g| g.group_key.label()).collect();
            keys.dedup();
            keys.len()
        })
        .max()
        .unwrap_or(1)
        .max(1);
    let group_w = 70.0;
    let w = left + ngroups as f64 * group_w + 30.0;
    let h = 40.0 + panels.len() as f64 * (panel_h + gap) + 10.0;
    let mut s = Svg::new(w, h);
    s.text(w / 2.0, 20.0, "middle", title);

    let (lo, hi) = panels
        .iter()
        .flat_map(|p| &p.groups)
        .fold((0.0f64, 0.0f64), |(lo, hi), g| {
            (lo.min(g.stats.whisker_low), hi.max(g.stats.whisker_high))
        });

    for (pi, panel) in panels.iter().enumerate() {
        let top = 40.0 + pi as f64 * (panel_h + gap);
        let y = Scale::new(lo, hi, top + panel_h, top);
        s.text(left, top - 6.0, "start", &format!("{} ({})", y_label, panel.mode));
        s.line(left, y.at(0.0), w - 20.0, y.at(0.0), "#999999");
        s.line(left, top, left, top + panel_h, "black");
        for tick in [lo, 0.0, hi] {
            s.text(left - 4.0, y.at(tick) + 4.0, "end", &n(tick));
        }
        let mut labels: Vec<String> = Vec::new();
        for g in &panel.groups {
            let label = g.group_key.label();
            if labels.last() != Some(&label) {
                labels.push(label.clone());
            }
            let gi = (labels.len() - 1) as f64;
            let offset = match g.source {
                Source::Llm => 10.0,
                Source::Wvs => 38.0,
            };
            let x = left + gi * group_w + offset;
            let bw = 22.0;
            let st = &g.stats;
            let fill = match g.source {
                Source::Llm => PALETTE[0],
                Source::Wvs => PALETTE[1],
            };
            s.line(x + bw / 2.0, y.at(st.whisker_low), x + bw / 2.0, y.at(st.q1), "black");
            s.line(x + bw / 2.0, y.at(st.q3), x + bw / 2.0, y.at(st.whisker_high), "black");
            s.line(
                x + 4.0,
                y.at(st.whisker_low),
                x + bw - 4.0,
                y.at(st.whisker_low),
                "black",
            );
            s.line(
                x + 4.0,
                y.at(st.whisker_high),
                x + bw - 4.0,
                y.at(st.whisker_high),
                "black",
            );
            s.rect(x, y.at(st.q3), bw, y.at(st.q1) - y.at(st.q3), fill);
            s.line(x, y.at(st.median), x + bw, y.at(st.median), "black");
        }
        for (gi, label) in labels.iter().enumerate() {
            s.text(
                left + gi as f64 * group_w + group_w / 2.0,
                top + panel_h + 14.0,
                "middle",
                label,
            );
        }
    }
    s.text(
        w / 2.0,
        h - 6.0,
        "middle",
        &format!("{x_label}: generated text (left), survey (right)"),
    );
    s.finish()
}

fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[GroupMeanRow], fits: &[RegressionFit]) -> String {
    let (left, top, pw, ph) = (70.0, 40.0, 480.0, 360.0);
    let w = left + pw + 170.0;
    let h = top + ph + 50.0;
    let mut s = Svg::new(w, h);
    s.text(left + pw / 2.0, 20.0, "middle", title);
    let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&GroupMeanRow) -> f64| points.iter().map(get).fold(init, f);
    let x = Scale::new(
        fold(f64::min, f64::INFINITY, |r| r.mean_llm),
        fold(f64::max, f64::NEG_INFINITY, |r| r.mean_llm),
        left,
        left + pw,
    );
    let y = Scale::new(
        fold(f64::min, f64::INFINITY, |r| r.mean_wvs),
        fold(f64::max, f64::NEG_INFINITY, |r| r.mean_wvs),
        top + ph,
        top,
    );
    s.line(left, top + ph, left + pw, top + ph, "black");
    s.line(left, top, left, top + ph, "black");
    for (i, fit) in fits.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mine: Vec<&GroupMeanRow> = points.iter().filter(|p| p.nation == fit.nation).collect();
        for p in &mine {
            s.circle(x.at(p.mean_llm), y.at(p.mean_wvs), color);
        }
        let xs = mine.iter().map(|p| p.mean_llm);
        let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if x0.is_finite() {
            s.line(
                x.at(x0),
                y.at(fit.intercept + fit.slope * x0),
                x.at(x1),
                y.at(fit.intercept + fit.slope * x1),
                color,
            );
        }
        let ly = top + 10.0 + i as f64 * 16.0;
        s.circle(left + pw + 20.0, ly - 4.0, color);
        s.text(
            left + pw + 28.0,
            ly,
            "start",
            &format!("{} R²={}{}", fit.nation, n(fit.r_squared), fit.stars()),
        );
    }
    s.text(left + pw / 2.0, h - 10.0, "middle", x_label);
    s.text(14.0, top + ph / 2.0, "middle", y_label);
    s.finish()
}

/// Writes a manifest listing the default figures, for users to edit.
pub fn write_default_manifest(path: &Path) -> Result<(), ReportError> {
    #[derive(Serialize)]
    struct Out<'a> {
        figure: &'a [FigureSpec],
    }
    let text = toml::to_string(&Out {
        figure: &default_figures(),
    })
    .map_err(|e| ReportError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

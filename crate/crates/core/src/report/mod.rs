//! Tabular report payloads (CSV) and their optional SVG charts.

pub mod persist;
pub mod svg;

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::extrinsic::PassAtKTable;
use crate::filter::{CorpusStatsRow, STATS_HEADERS};
use crate::intrinsic::PerplexityReport;
use crate::language::LanguageId;
use crate::{Error, Result};

use persist::Meta;

pub const DEFAULT_PERPLEXITY_CAP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportKind {
    StatsTable,
    PassAtK,
    Perplexity,
    TemperatureSweep,
    ScalingCurve,
}

impl FromStr for ReportKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "stats" => Ok(ReportKind::StatsTable),
            "passk" => Ok(ReportKind::PassAtK),
            "perplexity" => Ok(ReportKind::Perplexity),
            "temperature-sweep" => Ok(ReportKind::TemperatureSweep),
            "scaling" => Ok(ReportKind::ScalingCurve),
            _ => Err(format!(
                "unknown report kind {s:?} (expected stats, passk, perplexity, temperature-sweep or scaling)"
            )),
        }
    }
}

/// A point of a model-size scaling curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub model: String,
    pub parameters: f64,
    pub k: usize,
    pub pass_at_k: f64,
}

pub const SCALING_HEADERS: [&str; 4] = ["model", "parameters", "k", "pass_at_k"];

/// Parsed inputs of `emit_report`.
#[derive(Debug, Clone)]
pub enum ReportInput {
    Stats(Vec<CorpusStatsRow>),
    PassAtK(PassAtKTable),
    Perplexity(Vec<PerplexityReport>),
    Scaling(Vec<ScalingPoint>),
}

/// The CSV table is authoritative; the plot is derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub kind: ReportKind,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Plot-only clamp for perplexity charts.
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    /// Category labels when x is categorical (x = label index).
    pub categories: Option<Vec<String>>,
    pub series: Vec<Series>,
    pub y_max: Option<f64>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn schema(column: &str, detail: impl std::fmt::Display) -> Error {
    Error::Schema(format!("column {column:?}: {detail}"))
}

pub fn stats_bundle(rows: &[CorpusStatsRow]) -> ReportBundle {
    ReportBundle {
        kind: ReportKind::StatsTable,
        headers: STATS_HEADERS.iter().map(|s| s.to_string()).collect(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.language.to_string(),
                    r.repositories.to_string(),
                    r.files.to_string(),
                    r.size_before.to_string(),
                    r.size_after.to_string(),
                ]
            })
            .collect(),
        cap: None,
    }
}

/// Rows are temperatures, columns are `pass@k`.
pub fn passk_bundle(table: &PassAtKTable) -> ReportBundle {
    let mut headers = vec!["temperature".to_string()];
    headers.extend(table.ks.iter().map(|k| format!("pass@{k}")));
    ReportBundle {
        kind: ReportKind::PassAtK,
        headers,
        rows: table
            .rows
            .iter()
            .map(|r| {
                std::iter::once(num(r.temperature))
                    .chain(r.estimates.iter().map(|&e| num(e)))
                    .collect()
            })
            .collect(),
        cap: None,
    }
}

/// Long form: one row per (k, temperature).
pub fn temperature_sweep_bundle(table: &PassAtKTable) -> ReportBundle {
    let mut rows = Vec::new();
    for (ki, k) in table.ks.iter().enumerate() {
        for r in &table.rows {
            rows.push(vec![k.to_string(), num(r.temperature), num(r.estimates[ki])]);
        }
    }
    ReportBundle {
        kind: ReportKind::TemperatureSweep,
        headers: vec!["k".into(), "temperature".into(), "pass_at_k".into()],
        rows,
        cap: None,
    }
}

/// Rows are languages; columns are the reference token count and one
/// perplexity per model. Absent rows leave the cell empty.
pub fn perplexity_bundle(reports: &[PerplexityReport], cap: f64) -> ReportBundle {
    let mut models: Vec<String> = Vec::new();
    let mut cells: BTreeMap<LanguageId, BTreeMap<usize, Option<f64>>> = BTreeMap::new();
    let mut tokens: BTreeMap<LanguageId, u64> = BTreeMap::new();
    for rep in reports {
        for row in &rep.rows {
            let mi = match models.iter().position(|m| *m == row.model) {
                Some(i) => i,
                None => {
                    models.push(row.model.clone());
                    models.len() - 1
                }
            };
            cells.entry(row.language).or_default().insert(mi, row.perplexity);
            let t = tokens.entry(row.language).or_insert(0);
            *t = (*t).max(row.lex_token_total);
        }
    }
    let mut headers = vec!["Language".to_string(), "#tokens".to_string()];
    headers.extend(models.iter().cloned());
    let rows = cells
        .iter()
        .map(|(lang, by_model)| {
            let mut row = vec![lang.to_string(), tokens[lang].to_string()];
            for mi in 0..models.len() {
                row.push(by_model.get(&mi).copied().flatten().map(num).unwrap_or_default());
            }
            row
        })
        .collect();
    ReportBundle {
        kind: ReportKind::Perplexity,
        headers,
        rows,
        cap: Some(cap),
    }
}

pub fn scaling_bundle(points: &[ScalingPoint]) -> Result<ReportBundle> {
    for p in points {
        if !(p.parameters > 0.0) {
            return Err(schema("parameters", format!("{} must be positive", p.parameters)));
        }
        if !(0.0..=1.0).contains(&p.pass_at_k) {
            return Err(schema("pass_at_k", format!("{} outside [0, 1]", p.pass_at_k)));
        }
    }
    let mut sorted: Vec<&ScalingPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.k.cmp(&b.k).then(a.parameters.total_cmp(&b.parameters)));
    let mut headers: Vec<String> = SCALING_HEADERS.iter().map(|s| s.to_string()).collect();
    headers.insert(2, "log10_parameters".into());
    Ok(ReportBundle {
        kind: ReportKind::ScalingCurve,
        headers,
        rows: sorted
            .iter()
            .map(|p| {
                vec![
                    p.model.clone(),
                    num(p.parameters),
                    num(p.parameters.log10()),
                    p.k.to_string(),
                    num(p.pass_at_k),
                ]
            })
            .collect(),
        cap: None,
    })
}

pub fn emit_report(kind: ReportKind, input: &ReportInput, cap: Option<f64>) -> Result<ReportBundle> {
    match (kind, input) {
        (ReportKind::StatsTable, ReportInput::Stats(r)) => Ok(stats_bundle(r)),
        (ReportKind::PassAtK, ReportInput::PassAtK(t)) => Ok(passk_bundle(t)),
        (ReportKind::TemperatureSweep, ReportInput::PassAtK(t)) => Ok(temperature_sweep_bundle(t)),
        (ReportKind::Perplexity, ReportInput::Perplexity(r)) => {
            let cap = cap.unwrap_or(DEFAULT_PERPLEXITY_CAP);
            if !(cap > 0.0) {
                return Err(Error::Config(format!("cap {cap} must be positive")));
            }
            Ok(perplexity_bundle(r, cap))
        }
        (ReportKind::ScalingCurve, ReportInput::Scaling(p)) => scaling_bundle(p),
        (k, _) => Err(Error::Schema(format!("input does not match report kind {k:?}"))),
    }
}

impl ReportBundle {
    /// CSV (or another single-byte delimiter), led by the provenance comment.
    pub fn to_csv(&self, meta: Option<&Meta>, delimiter: u8) -> Vec<u8> {
        let mut out = Vec::new();
        if let Some(m) = meta {
            out.extend_from_slice(m.comment_line().as_bytes());
        }
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    /// Rebuild a bundle from CSV text produced by [`ReportBundle::to_csv`].
    pub fn from_csv(kind: ReportKind, text: &str, cap: Option<f64>) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers: Vec<String> = r
            .headers()
            .map_err(|e| Error::Schema(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| {
                rec.map(|rec| rec.iter().map(str::to_string).collect())
                    .map_err(|e| Error::Schema(e.to_string()))
            })
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Self { kind, headers, rows, cap })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| schema(name, "missing"))
    }

    fn cell_f64(&self, row: &[String], col: usize) -> Result<Option<f64>> {
        let v = row.get(col).map(String::as_str).unwrap_or("");
        if v.is_empty() {
            return Ok(None);
        }
        v.parse::<f64>()
            .map(Some)
            .map_err(|_| schema(&self.headers[col], format!("{v:?} is not a number")))
    }

    /// Chart data computed from the table alone.
    pub fn plot(&self) -> Result<PlotData> {
        match self.kind {
            ReportKind::StatsTable => {
                let lang = self.column("Language")?;
                let size = self.column("Size After Filtering")?;
                let rows: Vec<&Vec<String>> = self.rows.iter().filter(|r| r[lang] != "Total").collect();
                let mut points = Vec::new();
                for (i, r) in rows.iter().enumerate() {
                    points.push((i as f64, self.cell_f64(r, size)?.unwrap_or(0.0)));
                }
                Ok(PlotData {
                    title: "Corpus size after filtering".into(),
                    x_label: "Language".into(),
                    y_label: "bytes".into(),
                    log_x: false,
                    categories: Some(rows.iter().map(|r| r[lang].clone()).collect()),
                    series: vec![Series {
                        name: "Size After Filtering".into(),
                        points,
                    }],
                    y_max: None,
                })
            }
            ReportKind::PassAtK => {
                let t = self.column("temperature")?;
                let mut series = Vec::new();
                for (c, h) in self.headers.iter().enumerate().filter(|(c, _)| *c != t) {
                    let mut points = Vec::new();
                    for r in &self.rows {
                        if let (Some(x), Some(y)) = (self.cell_f64(r, t)?, self.cell_f64(r, c)?) {
                            points.push((x, y));
                        }
                    }
                    series.push(Series { name: h.clone(), points });
                }
                Ok(PlotData {
                    title: "pass@k by temperature".into(),
                    x_label: "temperature".into(),
                    y_label: "pass@k".into(),
                    log_x: false,
                    categories: None,
                    series,
                    y_max: Some(1.0),
                })
            }
            ReportKind::TemperatureSweep => {
                let (k, t, v) = (self.column("k")?, self.column("temperature")?, self.column("pass_at_k")?);
                let series = self.group_series(k, t, v, "pass@")?;
                Ok(PlotData {
                    title: "pass@k temperature sweep".into(),
                    x_label: "temperature".into(),
                    y_label: "pass@k".into(),
                    log_x: false,
                    categories: None,
                    series,
                    y_max: Some(1.0),
                })
            }
            ReportKind::ScalingCurve => {
                let (k, p, v) = (self.column("k")?, self.column("parameters")?, self.column("pass_at_k")?);
                let series = self.group_series(k, p, v, "pass@")?;
                Ok(PlotData {
                    title: "pass@k by model size".into(),
                    x_label: "parameters (log scale)".into(),
                    y_label: "pass@k".into(),
                    log_x: true,
                    categories: None,
                    series,
                    y_max: Some(1.0),
                })
            }
            ReportKind::Perplexity => {
                let lang = self.column("Language")?;
                let tok = self.column("#tokens")?;
                let cap = self.cap.unwrap_or(DEFAULT_PERPLEXITY_CAP);
                let mut series = Vec::new();
                for (c, h) in self.headers.iter().enumerate().filter(|(c, _)| *c != lang && *c != tok) {
                    let mut points = Vec::new();
                    for (i, r) in self.rows.iter().enumerate() {
                        if let Some(y) = self.cell_f64(r, c)? {
                            points.push((i as f64, y.min(cap)));
                        }
                    }
                    series.push(Series { name: h.clone(), points });
                }
                Ok(PlotData {
                    title: "Perplexity by language".into(),
                    x_label: "Language".into(),
                    y_label: "perplexity".into(),
                    log_x: false,
                    categories: Some(self.rows.iter().map(|r| r[lang].clone()).collect()),
                    series,
                    y_max: Some(cap),
                })
            }
        }
    }

    fn group_series(&self, key: usize, x: usize, y: usize, prefix: &str) -> Result<Vec<Series>> {
        let mut groups: Vec<Series> = Vec::new();
        for r in &self.rows {
            let name = format!("{prefix}{}", r[key]);
            let (Some(px), Some(py)) = (self.cell_f64(r, x)?, self.cell_f64(r, y)?) else {
                continue;
            };
            match groups.iter_mut().find(|s| s.name == name) {
                Some(s) => s.points.push((px, py)),
                None => groups.push(Series {
                    name,
                    points: vec![(px, py)],
                }),
            }
        }
        Ok(groups)
    }

    pub fn to_svg(&self) -> Result<String> {
        Ok(svg::render(&self.plot()?))
    }
}

/// Scaling points from CSV with columns `model,parameters,k,pass_at_k`.
pub fn read_scaling_csv(path: &Path) -> Result<Vec<ScalingPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scaling_csv(&text).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn parse_scaling_csv(text: &str) -> Result<Vec<ScalingPoint>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(SCALING_HEADERS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| schema(name, "missing"))?;
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let get = |i: usize| rec.get(idx[i]).unwrap_or("");
        let parse_f = |i: usize| {
            get(i)
                .parse::<f64>()
                .map_err(|_| schema(SCALING_HEADERS[i], format!("{:?} is not a number", get(i))))
        };
        out.push(ScalingPoint {
            model: get(0).to_string(),
            parameters: parse_f(1)?,
            k: get(2)
                .parse()
                .map_err(|_| schema("k", format!("{:?} is not a count", get(2))))?,
            pass_at_k: parse_f(3)?,
        });
    }
    Ok(out)
}

//! File formats: the JSON configuration, cohort and truth CSVs, model JSON,
//! staging, MCMC sample, positional-variance and metrics CSVs, and the PVD
//! heatmap SVG.
//!
//! Cohort CSV columns: `subject_id` first, then per biomarker `name` for
//! z-scores, `name:pnotE` and `name:pE` for binaries, and `name:s0` plus one
//! `name:s<score>` per score for ordinals. Missing cells are empty fields.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{FitConfig, Staging};
use crate::model::{
    BiomarkerModelKind, BiomarkerSpec, Cell, CohortData, EventTable, McmcSample, MixedEventSequence, SubtypeModel,
};
use crate::simulation::{SimulationConfig, SubjectTruth};

/// The single JSON configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub biomarkers: Vec<BiomarkerSpec>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub simulate: SimulationConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Config = serde_json::from_str(text)?;
        config.fit.validate()?;
        config.simulate.validate()?;
        Ok(config)
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let config: Config = serde_json::from_reader(reader)?;
        config.fit.validate()?;
        config.simulate.validate()?;
        Ok(config)
    }

    pub fn table(&self) -> Result<EventTable> {
        EventTable::new(self.biomarkers.clone())
    }
}

/// Column names contributed by one biomarker.
pub fn biomarker_columns(spec: &BiomarkerSpec) -> Vec<String> {
    match spec.kind {
        BiomarkerModelKind::ZScore => vec![spec.name.clone()],
        BiomarkerModelKind::Binary => vec![format!("{}:pnotE", spec.name), format!("{}:pE", spec.name)],
        BiomarkerModelKind::Ordinal => std::iter::once(0)
            .chain(spec.scores().iter().copied())
            .map(|s| format!("{}:s{s}", spec.name))
            .collect(),
    }
}

pub fn cohort_header(table: &EventTable) -> Vec<String> {
    std::iter::once("subject_id".to_string())
        .chain(table.specs().iter().flat_map(biomarker_columns))
        .collect()
}

pub fn write_cohort<W: Write>(writer: W, cohort: &CohortData, table: &EventTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(cohort_header(table))?;
    let mut record: Vec<String> = Vec::new();
    for j in 0..cohort.n_subjects() {
        record.clear();
        record.push(cohort.subject_ids()[j].clone());
        for (i, spec) in table.specs().iter().enumerate() {
            let width = biomarker_columns(spec).len();
            match cohort.cell(j, i) {
                Cell::Missing => record.extend(std::iter::repeat_n(String::new(), width)),
                Cell::ZScore(x) => record.push(x.to_string()),
                Cell::Binary { p_not_event, p_event } => {
                    record.push(p_not_event.to_string());
                    record.push(p_event.to_string());
                }
                Cell::Ordinal(v) => record.extend(v.iter().map(f64::to_string)),
            }
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_float(field: &str, column: &str, row: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Column {
        column: column.to_string(),
        reason: format!("row {row}: cannot parse `{field}` as a number"),
    })
}

/// Reads a cohort CSV. Columns are located by name, so their order is free
/// and unrelated columns are ignored; the first required column that is
/// absent is reported.
pub fn read_cohort<R: Read>(reader: R, table: &EventTable) -> Result<CohortData> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = r.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Column {
            column: name.to_string(),
            reason: "missing from cohort CSV".into(),
        })
    };
    if headers.get(0) != Some("subject_id") {
        return Err(Error::Column {
            column: "subject_id".into(),
            reason: "must be the first column".into(),
        });
    }
    let layout: Vec<(Vec<String>, Vec<usize>)> = table
        .specs()
        .iter()
        .map(|spec| {
            let cols = biomarker_columns(spec);
            let idx = cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
            Ok((cols, idx))
        })
        .collect::<Result<_>>()?;

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (n, record) in r.records().enumerate() {
        let record = record?;
        let line = n + 1;
        ids.push(record[0].to_string());
        let mut row = Vec::with_capacity(table.n_biomarkers());
        for (spec, (cols, idx)) in table.specs().iter().zip(&layout) {
            let fields: Vec<&str> = idx.iter().map(|&i| record[i].trim()).collect();
            let empty = fields.iter().filter(|f| f.is_empty()).count();
            if empty == fields.len() {
                row.push(Cell::Missing);
                continue;
            }
            if empty > 0 {
                let col = cols[fields.iter().position(|f| f.is_empty()).expect("some empty")].clone();
                return Err(Error::Column {
                    column: col,
                    reason: format!("row {line}: partially missing `{}` values", spec.name),
                });
            }
            let values = fields
                .iter()
                .zip(cols)
                .map(|(f, c)| parse_float(f, c, line))
                .collect::<Result<Vec<f64>>>()?;
            row.push(match spec.kind {
                BiomarkerModelKind::ZScore => Cell::ZScore(values[0]),
                BiomarkerModelKind::Binary => Cell::Binary {
                    p_not_event: values[0],
                    p_event: values[1],
                },
                BiomarkerModelKind::Ordinal => Cell::Ordinal(values),
            });
        }
        rows.push(row);
    }
    CohortData::new(table, ids, rows)
}

/// A CSV held as strings, for column-level edits.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(RawTable { headers, rows })
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Column {
                column: name.to_string(),
                reason: "not found".into(),
            })
    }

    /// Parsed values of a numeric column; empty fields are `None`.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let i = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(n, row)| {
                let f = row[i].trim();
                if f.is_empty() {
                    Ok(None)
                } else {
                    parse_float(f, name, n + 1).map(Some)
                }
            })
            .collect()
    }

    /// A boolean column: `1`/`true`/`yes` and `0`/`false`/`no`, any case.
    pub fn boolean_column(&self, name: &str) -> Result<Vec<bool>> {
        let i = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(n, row)| match row[i].trim().to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" => Ok(true),
                "0" | "false" | "no" => Ok(false),
                other => Err(Error::Column {
                    column: name.to_string(),
                    reason: format!("row {}: `{other}` is not a boolean", n + 1),
                }),
            })
            .collect()
    }

    /// Appends a column, or overwrites one of the same name.
    pub fn set_column(&mut self, name: &str, values: Vec<String>) -> Result<()> {
        if values.len() != self.rows.len() {
            return Err(Error::InvalidArgument(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.rows.len()
            )));
        }
        match self.headers.iter().position(|h| h == name) {
            Some(i) => {
                for (row, v) in self.rows.iter_mut().zip(values) {
                    row[i] = v;
                }
            }
            None => {
                self.headers.push(name.to_string());
                for (row, v) in self.rows.iter_mut().zip(values) {
                    row.push(v);
                }
            }
        }
        Ok(())
    }
}

pub fn write_truth<W: Write>(writer: W, subject_ids: &[String], truth: &[SubjectTruth]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "true_subtype", "true_stage"])?;
    for (id, t) in subject_ids.iter().zip(truth) {
        w.write_record([id.clone(), t.subtype.to_string(), t.stage.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(reader: R) -> Result<(Vec<String>, Vec<SubjectTruth>)> {
    let raw = RawTable::read(reader)?;
    let (ci, si, ki) = (
        raw.column_index("subject_id")?,
        raw.column_index("true_subtype")?,
        raw.column_index("true_stage")?,
    );
    let parse = |v: &str, col: &str, n: usize| {
        v.trim().parse::<usize>().map_err(|_| Error::Column {
            column: col.to_string(),
            reason: format!("row {}: `{v}` is not a non-negative integer", n + 1),
        })
    };
    let mut ids = Vec::new();
    let mut truth = Vec::new();
    for (n, row) in raw.rows.iter().enumerate() {
        ids.push(row[ci].clone());
        truth.push(SubjectTruth {
            subtype: parse(&row[si], "true_subtype", n)?,
            stage: parse(&row[ki], "true_stage", n)?,
        });
    }
    Ok((ids, truth))
}

/// An event named by biomarker and 1-based level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDescriptor {
    pub biomarker: String,
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtypeEntry {
    pub fraction: f64,
    pub sequence: Vec<EventDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub biomarkers: Vec<BiomarkerSpec>,
    pub subtypes: Vec<SubtypeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
}

impl ModelFile {
    pub fn new(model: &SubtypeModel, table: &EventTable, log_likelihood: Option<f64>) -> Self {
        let subtypes = model
            .sequences()
            .iter()
            .zip(model.fractions())
            .map(|(seq, &fraction)| SubtypeEntry {
                fraction,
                sequence: seq
                    .order()
                    .iter()
                    .map(|&e| {
                        let ev = table.event(e);
                        EventDescriptor {
                            biomarker: table.spec(ev.biomarker).name.clone(),
                            level: ev.level + 1,
                        }
                    })
                    .collect(),
            })
            .collect();
        ModelFile {
            biomarkers: table.specs().to_vec(),
            subtypes,
            log_likelihood,
        }
    }

    /// The embedded event table.
    pub fn table(&self) -> Result<EventTable> {
        EventTable::new(self.biomarkers.clone())
    }

    /// Resolves the stored sequences against `table`, which must declare the
    /// same biomarkers (in any order).
    pub fn to_model(&self, table: &EventTable) -> Result<SubtypeModel> {
        if self.biomarkers.len() != table.n_biomarkers() {
            return Err(Error::InvalidModel(format!(
                "model declares {} biomarkers, configuration {}",
                self.biomarkers.len(),
                table.n_biomarkers()
            )));
        }
        for spec in &self.biomarkers {
            let i = table
                .biomarker_index(&spec.name)
                .ok_or_else(|| Error::biomarker(&spec.name, "not in the configuration"))?;
            if table.spec(i) != spec {
                return Err(Error::biomarker(
                    &spec.name,
                    "declared differently in model and configuration",
                ));
            }
        }
        let mut seqs = Vec::with_capacity(self.subtypes.len());
        for entry in &self.subtypes {
            let order = entry
                .sequence
                .iter()
                .map(|d| {
                    let i = table
                        .biomarker_index(&d.biomarker)
                        .ok_or_else(|| Error::biomarker(&d.biomarker, "unknown in model sequence"))?;
                    d.level
                        .checked_sub(1)
                        .and_then(|l| table.event_id(i, l))
                        .ok_or_else(|| Error::biomarker(&d.biomarker, format!("no level {}", d.level)))
                })
                .collect::<Result<Vec<usize>>>()?;
            seqs.push(MixedEventSequence::new(order, table)?);
        }
        let fractions = self.subtypes.iter().map(|s| s.fraction).collect();
        SubtypeModel::new(seqs, fractions, table)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per staged subject: ML subtype and stage, expected stage under the
/// ML subtype, then `p_c<c>_k<k>` for the flattened posterior.
pub fn write_staging<W: Write>(
    writer: W,
    subject_ids: &[String],
    staging: &Staging,
    n_subtypes: usize,
    n_stages: usize,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "subject_id".to_string(),
        "ml_subtype".into(),
        "ml_stage".into(),
        "expected_stage".into(),
    ];
    for c in 0..n_subtypes {
        header.push(format!("p_subtype{c}"));
    }
    for c in 0..n_subtypes {
        for k in 0..n_stages {
            header.push(format!("p_c{c}_k{k}"));
        }
    }
    w.write_record(&header)?;
    for (id, p) in subject_ids.iter().zip(&staging.subjects) {
        let Some(p) = p else { continue };
        let mut rec = vec![
            id.clone(),
            p.ml_subtype.to_string(),
            p.ml_stage.to_string(),
            fmt_opt(p.expected_stage[p.ml_subtype]),
        ];
        rec.extend(p.subtype_probabilities().iter().map(f64::to_string));
        rec.extend(p.probabilities().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns of a staging CSV needed downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct StagingRow {
    pub subject_id: String,
    pub ml_subtype: usize,
    pub ml_stage: usize,
    pub expected_stage: f64,
}

pub fn read_staging<R: Read>(reader: R) -> Result<Vec<StagingRow>> {
    let raw = RawTable::read(reader)?;
    let ids = raw.column_index("subject_id")?;
    let sub = raw.column_index("ml_subtype")?;
    let stage = raw.column_index("ml_stage")?;
    let expected = raw.numeric_column("expected_stage")?;
    let int = |v: &str, col: &str, n: usize| {
        v.trim().parse::<usize>().map_err(|_| Error::Column {
            column: col.to_string(),
            reason: format!("row {}: `{v}` is not a non-negative integer", n + 1),
        })
    };
    raw.rows
        .iter()
        .enumerate()
        .map(|(n, row)| {
            Ok(StagingRow {
                subject_id: row[ids].clone(),
                ml_subtype: int(&row[sub], "ml_subtype", n)?,
                ml_stage: int(&row[stage], "ml_stage", n)?,
                expected_stage: expected[n].ok_or_else(|| Error::Column {
                    column: "expected_stage".into(),
                    reason: format!("row {}: empty", n + 1),
                })?,
            })
        })
        .collect()
}

/// `iteration,log_likelihood,subtype0,...` with each sequence as a
/// comma-separated id list.
pub fn write_samples<W: Write>(writer: W, samples: &[McmcSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n_subtypes = samples.first().map_or(0, |s| s.sequences.len());
    let mut header = vec!["iteration".to_string(), "log_likelihood".into()];
    header.extend((0..n_subtypes).map(|c| format!("subtype{c}")));
    w.write_record(&header)?;
    for (i, s) in samples.iter().enumerate() {
        let mut rec = vec![i.to_string(), s.log_likelihood.to_string()];
        rec.extend(s.sequences.iter().map(|q| q.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a samples CSV written by [`write_samples`], checking every
/// sequence against `table`.
pub fn read_samples<R: Read>(reader: R, table: &EventTable) -> Result<Vec<McmcSample>> {
    let raw = RawTable::read(reader)?;
    let ll = raw.numeric_column("log_likelihood")?;
    let subtype_cols: Vec<usize> = (0..)
        .map_while(|c| raw.headers.iter().position(|h| *h == format!("subtype{c}")))
        .collect();
    if subtype_cols.is_empty() {
        return Err(Error::Column {
            column: "subtype0".into(),
            reason: "missing from samples CSV".into(),
        });
    }
    raw.rows
        .iter()
        .zip(ll)
        .enumerate()
        .map(|(n, (row, ll))| {
            let sequences = subtype_cols
                .iter()
                .map(|&i| {
                    let order = row[i]
                        .parse::<MixedEventSequence>()
                        .map_err(|e| Error::Column {
                            column: raw.headers[i].clone(),
                            reason: format!("row {}: {e}", n + 1),
                        })?
                        .into_order();
                    MixedEventSequence::new(order, table)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(McmcSample {
                sequences,
                log_likelihood: ll.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Dense positional-variance matrix: one row per event, one column per
/// position (1-based).
pub fn write_pvd<W: Write>(writer: W, matrix: &[Vec<f64>], table: &EventTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["event".to_string()];
    header.extend((1..=matrix.len()).map(|p| p.to_string()));
    w.write_record(&header)?;
    for (e, row) in matrix.iter().enumerate() {
        let mut rec = vec![table.event_label(e)];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub subtype: Option<usize>,
    pub value: f64,
}

impl MetricRow {
    pub fn new(metric: impl Into<String>, subtype: Option<usize>, value: f64) -> Self {
        MetricRow {
            metric: metric.into(),
            subtype,
            value,
        }
    }
}

pub fn write_metrics<W: Write>(writer: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "subtype", "value"])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            r.subtype.map(|c| c.to_string()).unwrap_or_default(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Greyscale heatmaps of one or more positional-variance matrices side by
/// side, events down the left, positions across.
pub fn pvd_svg(matrices: &[Vec<Vec<f64>>], table: &EventTable) -> String {
    const CELL: usize = 16;
    const LABEL: usize = 120;
    const GAP: usize = 24;
    let k = table.n_events();
    let panel = k * CELL;
    let width = LABEL + matrices.len() * (panel + GAP);
    let height = 24 + panel + 8;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for e in 0..k {
        let y = 24 + e * CELL + CELL * 3 / 4;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#,
            LABEL - 4,
            xml_escape(&table.event_label(e))
        );
    }
    for (c, m) in matrices.iter().enumerate() {
        let x0 = LABEL + c * (panel + GAP);
        let _ = writeln!(s, r#"<text x="{x0}" y="14">subtype {c}</text>"#);
        for (e, row) in m.iter().enumerate() {
            for (p, v) in row.iter().enumerate() {
                let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},{shade})"/>"#,
                    x0 + p * CELL,
                    24 + e * CELL
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="24" width="{panel}" height="{panel}" fill="none" stroke="black"/>"#
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

//! Output writers. JSONL is the canonical format; CSV flattens every array
//! into indexed columns.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aposteriori_core::hilbert::Operator;
use serde_json::{json, Map, Value};

use crate::config::Format;
use crate::error::RunError;
use crate::summary::{EnsembleSummary, SummaryPoint, TrajectoryRecord};

fn split(op: &Operator) -> (Vec<f64>, Vec<f64>) {
    op.as_slice().iter().map(|z| (z.re, z.im)).unzip()
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("rows are built from object literals"),
    }
}

/// Flattens nested arrays into `key_i` / `key_i_j` columns.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Array(xs) => {
            for (i, x) in xs.iter().enumerate() {
                flatten(&format!("{prefix}_{i}"), x, out);
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// A streaming table in either format.
pub struct TableWriter {
    format: Format,
    path: PathBuf,
    jsonl: Option<BufWriter<File>>,
    csv: Option<csv::Writer<File>>,
    header: Option<Vec<String>>,
}

impl TableWriter {
    /// Creates `<dir>/<stem>.jsonl` or `<dir>/<stem>.csv`.
    pub fn create(dir: &Path, stem: &str, format: Format) -> Result<Self, RunError> {
        let path = dir.join(match format {
            Format::Jsonl => format!("{stem}.jsonl"),
            Format::Csv => format!("{stem}.csv"),
        });
        let (jsonl, csv) = match format {
            Format::Jsonl => (Some(BufWriter::new(File::create(&path)?)), None),
            Format::Csv => (None, Some(csv::Writer::from_path(&path)?)),
        };
        Ok(Self { format, path, jsonl, csv, header: None })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, row: &Map<String, Value>) -> Result<(), RunError> {
        match self.format {
            Format::Jsonl => {
                let w = self.jsonl.as_mut().expect("jsonl writer");
                serde_json::to_writer(&mut *w, row)?;
                w.write_all(b"\n")?;
            }
            Format::Csv => {
                let mut cells = Vec::new();
                for (k, v) in row {
                    flatten(k, v, &mut cells);
                }
                let w = self.csv.as_mut().expect("csv writer");
                let keys: Vec<String> = cells.iter().map(|(k, _)| k.clone()).collect();
                match &self.header {
                    None => {
                        w.write_record(&keys)?;
                        self.header = Some(keys);
                    }
                    Some(h) if *h != keys => {
                        return Err(RunError::Output(format!("{}: row columns differ from the header", self.path.display())));
                    }
                    Some(_) => {}
                }
                w.write_record(cells.iter().map(|(_, v)| v))?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), RunError> {
        if let Some(w) = self.jsonl.as_mut() {
            w.flush()?;
        }
        if let Some(w) = self.csv.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

/// Writes a whole table at once.
pub fn write_table(dir: &Path, stem: &str, format: Format, rows: &[Map<String, Value>]) -> Result<PathBuf, RunError> {
    let mut w = TableWriter::create(dir, stem, format)?;
    for r in rows {
        w.write(r)?;
    }
    let path = w.path().to_path_buf();
    w.finish()?;
    Ok(path)
}

/// Trajectory output: `records.jsonl` holds one object per trajectory with
/// its events and snapshots; in CSV the snapshots go to `records.csv` and
/// the counting events to `events.csv`.
pub struct RecordWriter {
    format: Format,
    records: TableWriter,
    events: Option<TableWriter>,
    dir: PathBuf,
}

impl RecordWriter {
    pub fn create(dir: &Path, format: Format) -> Result<Self, RunError> {
        Ok(Self { format, records: TableWriter::create(dir, "records", format)?, events: None, dir: dir.to_path_buf() })
    }

    pub fn write(&mut self, rec: &TrajectoryRecord) -> Result<(), RunError> {
        match self.format {
            Format::Jsonl => self.records.write(&record_object(rec)),
            Format::Csv => {
                for row in snapshot_rows(rec) {
                    self.records.write(&row)?;
                }
                if let TrajectoryRecord::Counting { index, record } = rec {
                    if self.events.is_none() {
                        self.events = Some(TableWriter::create(&self.dir, "events", Format::Csv)?);
                    }
                    let w = self.events.as_mut().expect("events writer");
                    for e in &record.events {
                        w.write(&obj(json!({ "trajectory": index, "t": e.t, "channel": e.channel, "log_c": e.log_c })))?;
                    }
                }
                Ok(())
            }
        }
    }

    pub fn finish(self) -> Result<(), RunError> {
        self.records.finish()?;
        if let Some(e) = self.events {
            e.finish()?;
        }
        Ok(())
    }
}

fn snapshot_rows(rec: &TrajectoryRecord) -> Vec<Map<String, Value>> {
    match rec {
        TrajectoryRecord::Counting { index, record } => record
            .snapshots
            .iter()
            .map(|s| {
                let mut row = obj(json!({
                    "trajectory": index,
                    "index": s.index,
                    "t": s.t,
                    "counts": s.counts,
                    "compensator": s.compensator,
                    "martingale": s.martingale(),
                    "log_c": s.log_c,
                }));
                if let Some(st) = &s.state {
                    let (re, im) = split(st);
                    row.insert("rho_re".into(), json!(re));
                    row.insert("rho_im".into(), json!(im));
                }
                row
            })
            .collect(),
        TrajectoryRecord::Diffusive { index, record, .. } => record
            .snapshots
            .iter()
            .map(|s| {
                let mut row = obj(json!({
                    "trajectory": index,
                    "index": s.index,
                    "t": s.t,
                    "y": s.y,
                    "martingale": s.m,
                    "z_mean_re": s.z_mean.iter().map(|z| z.re).collect::<Vec<_>>(),
                    "z_mean_im": s.z_mean.iter().map(|z| z.im).collect::<Vec<_>>(),
                    "purity": s.purity,
                }));
                if let Some(st) = &s.state {
                    let (re, im) = split(st);
                    row.insert("rho_re".into(), json!(re));
                    row.insert("rho_im".into(), json!(im));
                }
                row
            })
            .collect(),
    }
}

/// The canonical JSON object of one trajectory.
pub fn record_object(rec: &TrajectoryRecord) -> Map<String, Value> {
    let snapshots: Vec<Value> = snapshot_rows(rec)
        .into_iter()
        .map(|mut r| {
            r.shift_remove("trajectory");
            Value::Object(r)
        })
        .collect();
    match rec {
        TrajectoryRecord::Counting { index, record } => obj(json!({
            "trajectory": index,
            "mode": "counting",
            "seed": record.seed,
            "stream": record.stream,
            "events": record.events.iter().map(|e| json!({ "t": e.t, "channel": e.channel, "log_c": e.log_c })).collect::<Vec<_>>(),
            "snapshots": snapshots,
        })),
        TrajectoryRecord::Diffusive { index, record, .. } => obj(json!({
            "trajectory": index,
            "mode": "diffusive",
            "seed": record.seed,
            "stream": record.stream,
            "clipped_steps": record.clipped_steps,
            "snapshots": snapshots,
        })),
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn finite_vec(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| finite_or_null(x)).collect())
}

/// One summary row.
pub fn summary_row(p: &SummaryPoint) -> Map<String, Value> {
    let mut row = obj(json!({ "index": p.index, "t": p.t }));
    if let Some(m) = &p.mean_state {
        let (re, im) = split(m);
        row.insert("mean_rho_re".into(), json!(re));
        row.insert("mean_rho_im".into(), json!(im));
        row.insert("se_rho_re".into(), finite_vec(&p.state_se_re));
        row.insert("se_rho_im".into(), finite_vec(&p.state_se_im));
    }
    if let Some(x) = p.purity_mean {
        row.insert("purity_mean".into(), json!(x));
        row.insert("purity_se".into(), finite_or_null(p.purity_se.unwrap_or(f64::NAN)));
    }
    if !p.output_mean.is_empty() {
        row.insert("output_mean".into(), json!(p.output_mean));
        row.insert("output_se".into(), finite_vec(&p.output_se));
        row.insert("output_var".into(), finite_vec(&p.output_var));
        row.insert("output_var_se".into(), finite_vec(&p.output_var_se));
        row.insert("output_cov".into(), Value::Array(p.output_cov.iter().map(|r| finite_vec(r)).collect()));
        row.insert("martingale_mean".into(), json!(p.martingale_mean));
        row.insert("martingale_se".into(), finite_vec(&p.martingale_se));
    }
    if let Some(d) = p.trace_distance_to_master {
        row.insert("trace_distance_to_master".into(), json!(d));
    }
    row
}

/// Writes `summary.*` and `run.json`.
pub fn write_summary(dir: &Path, format: Format, s: &EnsembleSummary, meta: Map<String, Value>) -> Result<(), RunError> {
    let rows: Vec<_> = s.points.iter().map(summary_row).collect();
    write_table(dir, "summary", format, &rows)?;
    let mut run = obj(json!({
        "mode": s.mode,
        "n_trajectories": s.n_trajectories,
        "dim": s.dim,
        "zero_count_fraction": s.zero_count_fraction,
    }));
    run.extend(meta);
    write_json(&dir.join("run.json"), &Value::Object(run))
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

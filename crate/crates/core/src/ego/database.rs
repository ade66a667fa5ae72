//! Append-only evaluation database, persisted as JSON lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Init,
    Infill,
}

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::Init => "init",
            Tag::Infill => "infill",
        }
    }
}

/// One evaluation of the real objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// 0 for the initial design, `t` for the `t`-th infill point.
    pub iter: usize,
    pub tag: Tag,
    /// Design vector in physical units.
    pub x: Vec<f64>,
    pub y: f64,
    /// Best objective value in the database including this record.
    pub best_so_far: f64,
    /// Expected improvement of this point under the model that proposed it.
    #[serde(default)]
    pub ei: Option<f64>,
    /// Sup-norm change of the diagnostic surface after refitting with this point.
    #[serde(default)]
    pub surface_delta: Option<f64>,
    /// Correlation parameters of the model that proposed this point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvaluationDatabase {
    records: Vec<EvaluationRecord>,
}

impl EvaluationDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: EvaluationRecord) {
        self.records.push(record);
    }

    pub(crate) fn replace_last(&mut self, record: EvaluationRecord) {
        if let Some(last) = self.records.last_mut() {
            *last = record;
        }
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, tag: Tag) -> usize {
        self.records.iter().filter(|r| r.tag == tag).count()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
        }
        Ok(Self { records })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// CSV `iter,tag,x_1..x_D,y,best_so_far,ei,surface_delta`; missing values
    /// are left empty.
    pub fn history_csv(&self, dim: usize) -> String {
        let mut out = String::from("iter,tag");
        for k in 1..=dim {
            let _ = write!(out, ",x_{k}");
        }
        out.push_str(",y,best_so_far,ei,surface_delta\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = write!(out, "{},{}", r.iter, r.tag.as_str());
            for v in &r.x {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{},{},{}", r.y, r.best_so_far, opt(r.ei), opt(r.surface_delta));
        }
        out
    }
}

/// Receives each record as soon as it is final.
pub trait RecordSink {
    fn append(&mut self, record: &EvaluationRecord) -> io::Result<()>;
}

/// Discards records.
#[derive(Debug, Default)]
pub struct NullSink;

impl RecordSink for NullSink {
    fn append(&mut self, _: &EvaluationRecord) -> io::Result<()> {
        Ok(())
    }
}

impl RecordSink for Vec<EvaluationRecord> {
    fn append(&mut self, record: &EvaluationRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Appends one JSON line per record and flushes it to disk immediately.
pub struct JsonlSink {
    file: File,
}

impl JsonlSink {
    /// Opens `path` for appending, creating it if needed.
    pub fn append_to(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }
}

impl RecordSink for JsonlSink {
    fn append(&mut self, record: &EvaluationRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }
}

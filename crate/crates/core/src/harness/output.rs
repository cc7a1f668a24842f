//! Experiment outputs.
//!
//! Every run produces
//! - `<id>.summary.csv`: long format, columns `experiment,parameter,value,stderr`
//!   (`stderr` empty when not applicable), rows in the order the experiment
//!   emits them;
//! - `<id>.summary.json`: the same rows plus run metadata;
//! - one `<id>.<table>.csv` per replicate-level table, header row first.
//!
//! Floats are written in shortest round-trip form, so equal values give
//! equal bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::McEstimate;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub parameter: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Config(e.to_string()))?)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub schema_version: u32,
    pub id: String,
    pub kind: String,
    pub seed: u64,
    pub reps: u64,
    pub summary: Vec<SummaryRow>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl ExperimentOutput {
    pub fn new(id: &str, kind: &str, seed: u64, reps: u64) -> Self {
        ExperimentOutput {
            schema_version: SCHEMA_VERSION,
            id: id.into(),
            kind: kind.into(),
            seed,
            reps,
            summary: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn scalar(&mut self, parameter: impl Into<String>, value: f64) {
        self.summary.push(SummaryRow {
            experiment: self.id.clone(),
            parameter: parameter.into(),
            value,
            stderr: None,
        });
    }

    pub fn estimate(&mut self, parameter: impl Into<String>, e: &McEstimate) {
        self.summary.push(SummaryRow {
            experiment: self.id.clone(),
            parameter: parameter.into(),
            value: e.mean,
            stderr: Some(e.stderr),
        });
    }

    pub fn get(&self, parameter: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.parameter == parameter)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut t = Table::new("summary", &["experiment", "parameter", "value", "stderr"]);
        for r in &self.summary {
            t.push(vec![
                r.experiment.clone(),
                r.parameter.clone(),
                r.value.to_string(),
                r.stderr.map(|s| s.to_string()).unwrap_or_default(),
            ]);
        }
        t.to_csv()
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes all outputs into `dir` and returns the paths written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let mut put = |name: String, body: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            out.push(p);
            Ok(())
        };
        put(format!("{}.summary.csv", self.id), self.summary_csv()?)?;
        put(format!("{}.summary.json", self.id), self.summary_json()?)?;
        for t in &self.tables {
            put(format!("{}.{}.csv", self.id, t.name), t.to_csv()?)?;
        }
        Ok(out)
    }
}

/// Parses a long-format summary CSV back into rows.
pub fn parse_summary_csv(src: &str) -> Result<Vec<SummaryRow>> {
    let mut rd = csv::Reader::from_reader(src.as_bytes());
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 4 {
            return Err(Error::Config(format!(
                "summary row has {} fields",
                rec.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad number `{s}`")))
        };
        rows.push(SummaryRow {
            experiment: rec[0].to_string(),
            parameter: rec[1].to_string(),
            value: num(&rec[2])?,
            stderr: if rec[3].is_empty() {
                None
            } else {
                Some(num(&rec[3])?)
            },
        });
    }
    Ok(rows)
}

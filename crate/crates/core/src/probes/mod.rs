//! Diagnostic analyses that emit plot-ready series: per-token probability
//! traces, distribution shape, the repetition feedback loop and the effect
//! of beam width.

mod beam_width;
mod feedback;
mod shape;
mod trace;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{Error, Result};

pub use beam_width::{beam_width_effect, beam_width_series, distinct_trigrams, BeamWidthRow};
pub use feedback::{repetition_feedback_probe, sample_phrase, CopyAggregate};
pub use shape::{distribution_shape_probe, Histogram, ShapeProbe, ShapeStep};
pub use trace::{compare_probability_traces, token_probability_trace, TraceComparison, TraceSummary};

/// One y column of a series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub label: String,
    pub values: Vec<f64>,
}

/// Plot data: a strictly increasing x axis and one or more y columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeSeries {
    pub name: String,
    pub x_label: String,
    pub x: Vec<f64>,
    pub columns: Vec<Column>,
    pub metadata: BTreeMap<String, String>,
}

impl ProbeSeries {
    pub fn new(name: &str, x_label: &str, x: Vec<f64>) -> Result<Self> {
        if x.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
            return Err(Error::param(format!("probe '{name}': x values must be strictly increasing")));
        }
        Ok(Self {
            name: name.to_string(),
            x_label: x_label.to_string(),
            x,
            columns: Vec::new(),
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_column(mut self, label: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.x.len() {
            return Err(Error::param(format!(
                "probe '{}': column '{label}' has {} values for {} x values",
                self.name,
                values.len(),
                self.x.len()
            )));
        }
        self.columns.push(Column {
            label: label.to_string(),
            values,
        });
        Ok(self)
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn column(&self, label: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.label == label).map(|c| c.values.as_slice())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// CSV with a leading `# key=value ...` metadata line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut meta = format!("# probe={}", self.name);
        for (k, v) in &self.metadata {
            meta.push_str(&format!(" {k}={v}"));
        }
        writeln!(out, "{meta}")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.x_label.clone()];
        header.extend(self.columns.iter().map(|c| c.label.clone()));
        w.write_record(&header)?;
        for i in 0..self.x.len() {
            let mut row = vec![self.x[i].to_string()];
            row.extend(self.columns.iter().map(|c| c.values[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `probe_<name>_<unix seconds>.csv` into `dir`, adding a numeric
    /// suffix instead of overwriting an existing file.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::at_path(dir, e))?;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        for n in 0u32.. {
            let file = if n == 0 {
                format!("probe_{}_{stamp}.csv", self.name)
            } else {
                format!("probe_{}_{stamp}_{n}.csv", self.name)
            };
            let path = dir.join(file);
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(f) => {
                    self.write_csv(std::io::BufWriter::new(f))?;
                    return Ok(path);
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::at_path(&path, e)),
            }
        }
        unreachable!()
    }
}

//! File formats: `n,value` CSV series and the JSON model sidecar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArModel, Trace};

#[derive(Debug, Serialize, Deserialize)]
struct Sample {
    n: usize,
    value: f64,
}

pub fn write_series(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (n, &value) in values.iter().enumerate() {
        w.serialize(Sample { n, value })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_to<W: std::io::Write>(out: W, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (n, &value) in values.iter().enumerate() {
        w.serialize(Sample { n, value })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `n,value` file; rows must be numbered 0, 1, 2, … in order.
pub fn read_series(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut values = Vec::new();
    for (i, row) in r.deserialize::<Sample>().enumerate() {
        let row = row?;
        if row.n != i {
            return Err(Error::Format(format!(
                "{}: row {i} is numbered {}",
                path.display(),
                row.n
            )));
        }
        values.push(row.value);
    }
    Ok(values)
}

/// Model parameters stored next to a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub alpha: f64,
    pub amplitude: f64,
    pub decimation: usize,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl TraceMeta {
    pub fn model(&self) -> Result<ArModel> {
        ArModel::new(self.alpha, self.amplitude, self.decimation)
    }
}

pub fn write_meta(path: impl AsRef<Path>, meta: &TraceMeta) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_meta(path: impl AsRef<Path>) -> Result<TraceMeta> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// `trace.csv` → `trace.json`.
pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

pub fn load_trace(csv_path: impl AsRef<Path>, model: ArModel, sigma: f64) -> Result<Trace> {
    Trace::with_noise(read_series(csv_path)?, model, sigma)
}

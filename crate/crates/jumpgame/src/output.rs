//! Report files. JSON objects are written with sorted keys and CSV follows
//! RFC 4180 quoting, so identical runs give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use jumpgame_core::kolmogorov::CoupledValue;
use jumpgame_core::numeric::Estimate;
use serde_json::{json, Value};

use crate::config::{Format, OutputConfig};
use crate::error::AppError;

pub struct OutputDir {
    root: PathBuf,
    json: bool,
    csv: bool,
}

impl OutputDir {
    pub fn create(root: &Path, formats: &OutputConfig) -> Result<Self, AppError> {
        fs::create_dir_all(root).map_err(AppError::io(root.display().to_string()))?;
        Ok(Self {
            root: root.to_path_buf(),
            json: formats.wants(Format::Json),
            csv: formats.wants(Format::Csv),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_json(&self, name: &str, value: &Value) -> Result<(), AppError> {
        if !self.json {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        let path = self.root.join(name);
        fs::write(&path, text).map_err(AppError::io(path.display().to_string()))
    }

    /// Writes a header row followed by `rows`; returns the file name when written.
    pub fn write_csv<R>(&self, name: &str, header: &[&str], rows: R) -> Result<Option<String>, AppError>
    where
        R: IntoIterator<Item = Vec<String>>,
    {
        if !self.csv {
            return Ok(None);
        }
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush().map_err(AppError::io(path.display().to_string()))?;
        Ok(Some(name.to_string()))
    }
}

/// Shortest round-trip decimal form of a float.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub fn estimate(e: &Estimate) -> Value {
    json!({ "mean": e.mean, "std_error": e.std_error, "samples": e.samples })
}

/// `(t, state_index, value)` rows of a function sampled on `times`.
pub fn state_rows(times: &[f64], dim: usize, f: impl Fn(f64, usize) -> f64) -> Vec<Vec<String>> {
    times
        .iter()
        .flat_map(|&t| (0..dim).map(move |i| (t, i)))
        .map(|(t, i)| vec![fmt(t), i.to_string(), fmt(f(t, i))])
        .collect()
}

pub fn coupled_rows(times: &[f64], v: &CoupledValue) -> Vec<Vec<String>> {
    state_rows(times, v.dim(), |t, i| v.value_at(t, i))
}

pub const TABLE_HEADER: [&str; 3] = ["t", "state_index", "value"];

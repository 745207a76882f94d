//! CSV and JSON artifacts plus the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use cascade_core::hilbert::HusimiMap;
use cascade_core::params::SystemParams;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::jobs::Job;

pub const TOOL: &str = "cascade";
pub const MANIFEST: &str = "manifest.json";

/// Full-precision scientific notation (17 significant digits).
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// One figure curve and the parameters it was computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Curve {
    pub file: String,
    pub label: String,
    pub params: SystemParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<Curve>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if m.tool != TOOL {
            return Err(CliError::Input(format!("{}: manifest written by `{}`, not {TOOL}", path.display(), m.tool)));
        }
        Ok(m)
    }
}

/// Collects the files written by one run.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    curves: Vec<Curve>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), curves: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |e| CliError::Io { path: path.to_path_buf(), source: e }
    }

    /// Writes rows of pre-formatted fields under `header`.
    pub fn csv_records(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.path(name);
        let csv_err = |e: csv::Error| CliError::Io { path: path.clone(), source: e.into() };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(Self::io(&path))
    }

    /// Writes equal-length numeric columns.
    pub fn csv_columns(&mut self, name: &str, header: &[&str], columns: &[&[f64]]) -> Result<()> {
        let len = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != len) || header.len() != columns.len() {
            return Err(CliError::Input(format!("{name}: ragged columns")));
        }
        let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        self.csv_records(name, &header, (0..len).map(|i| columns.iter().map(|c| fmt(c[i])).collect()))
    }

    pub fn csv_rows(&mut self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
        self.csv_records(name, header, rows.iter().map(|r| r.iter().map(|&x| fmt(x)).collect()))
    }

    /// Husimi map in long format: x, y, q.
    pub fn husimi(&mut self, name: &str, q: &HusimiMap) -> Result<()> {
        let header = ["x".to_string(), "y".to_string(), "q".to_string()];
        let (nx, ny) = (q.grid.x.len(), q.grid.y.len());
        let rows = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j)));
        self.csv_records(name, &header, rows.map(|(i, j)| vec![fmt(q.grid.x[i]), fmt(q.grid.y[j]), fmt(q.value(i, j))]))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(Self::io(&path))
    }

    pub fn curve(&mut self, file: &str, label: impl Into<String>, params: &SystemParams) {
        self.curves.push(Curve { file: file.to_string(), label: label.into(), params: *params });
    }

    /// Writes the manifest last and returns it.
    pub fn finish(self, job: Job, config: &RunConfig) -> Result<Manifest> {
        let manifest = Manifest {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            job,
            config: config.clone(),
            outputs: self.files,
            curves: self.curves,
        };
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Input(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(Self::io(&path))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_digits() {
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt(-2.5e-300).parse::<f64>().unwrap(), -2.5e-300);
    }
}

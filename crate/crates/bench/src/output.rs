//! CSV results and the JSON manifest written next to them.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::spec::ExperimentSpec;
use crate::BenchError;

/// Header plus one line per row.
pub fn write_csv<W: Write, R: Serialize>(out: W, rows: &[R]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, BenchError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(buf)
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub experiment: &'a str,
    pub spec: &'a ExperimentSpec,
    pub engine: &'static str,
    pub engine_version: &'static str,
    pub backend: String,
    pub rows: usize,
    pub results: Option<String>,
    /// RFC 3339 / ISO 8601, UTC.
    pub timestamp: String,
}

impl<'a> Manifest<'a> {
    pub fn new(experiment: &'a str, spec: &'a ExperimentSpec, rows: usize, results: Option<&Path>) -> Self {
        Self {
            experiment,
            spec,
            engine: "distquad",
            engine_version: distquad::VERSION,
            backend: spec.backend.to_string(),
            rows,
            results: results.map(|p| p.display().to_string()),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

/// `results.csv` -> `results.manifest.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

/// Writes `rows` to `csv` and the manifest beside it. Returns the manifest
/// path.
pub fn write_results<R: Serialize>(
    experiment: &str,
    spec: &ExperimentSpec,
    rows: &[R],
    csv: &Path,
) -> Result<PathBuf, BenchError> {
    if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_csv(std::fs::File::create(csv)?, rows)?;
    let manifest = Manifest::new(experiment, spec, rows.len(), Some(csv));
    let path = manifest_path(csv);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_sits_beside_results() {
        assert_eq!(manifest_path(Path::new("out/acc.csv")), PathBuf::from("out/acc.manifest.json"));
        assert_eq!(manifest_path(Path::new("acc")), PathBuf::from("acc.manifest.json"));
    }
}

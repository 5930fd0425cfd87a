use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::run::RunReport;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn entry(&self, file: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.file == file)
    }

    /// Hashes `bytes`, writes them to `dir/file` and records the entry.
    pub fn write(&mut self, dir: &Path, file: &str, bytes: &[u8]) -> Result<()> {
        let path = dir.join(file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.push(ManifestEntry {
            file: file.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    /// Writes `manifest.json` with entries sorted by file name.
    pub fn finish(mut self, dir: &Path) -> Result<Manifest> {
        self.files.sort_by(|a, b| a.file.cmp(&b.file));
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(self)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to a Vec cannot fail");
    buf
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv encoding failed: {e}"))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

/// Writes `report.json` for [`ExportFormat::Json`] and, for
/// [`ExportFormat::Csv`], `mf_cost.csv`, one `curve_<model>.csv` per model and
/// `metrics.csv`. A `manifest.json` listing every written file with its
/// SHA-256 is written last.
pub fn export_report(
    report: &RunReport,
    dir: &Path,
    formats: &BTreeSet<ExportFormat>,
) -> Result<Manifest> {
    let mut manifest = Manifest::default();
    write_report_files(report, dir, formats, &mut manifest)?;
    manifest.finish(dir)
}

/// The file-writing half of [`export_report`], for callers that add more
/// files before finishing the manifest.
pub fn write_report_files(
    report: &RunReport,
    dir: &Path,
    formats: &BTreeSet<ExportFormat>,
    manifest: &mut Manifest,
) -> Result<()> {
    if formats.is_empty() {
        return Err(Error::Config("no export format selected".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if formats.contains(&ExportFormat::Json) {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        manifest.write(dir, "report.json", text.as_bytes())?;
    }
    if formats.contains(&ExportFormat::Csv) {
        if let Some(mf) = &report.mf {
            manifest.write(dir, "mf_cost.csv", &csv_bytes(|w| mf.curve.write_csv(w)))?;
        }
        for m in &report.models {
            let name = format!("curve_{}.csv", m.key);
            manifest.write(dir, &name, &csv_bytes(|w| m.curve.write_csv(w)))?;
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut row = |fields: [&str; 8]| w.write_record(fields).map_err(csv_err);
        row([
            "model",
            "trait",
            "mode",
            "split",
            "n",
            "correlation",
            "mse",
            "success_pct",
        ])?;
        for m in &report.models {
            for r in &m.metrics {
                let (n, corr, mse, pct) = match &r.metrics {
                    Some(s) => (
                        s.n.to_string(),
                        opt(s.correlation),
                        format!("{:?}", s.mse),
                        format!("{:?}", s.success_pct),
                    ),
                    None => ("0".into(), String::new(), String::new(), String::new()),
                };
                row([
                    &m.key,
                    &r.trait_name,
                    r.mode.name(),
                    r.split.name(),
                    &n,
                    &corr,
                    &mse,
                    &pct,
                ])?;
            }
        }
        let metrics = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
        manifest.write(dir, "metrics.csv", &metrics)?;
    }
    Ok(())
}

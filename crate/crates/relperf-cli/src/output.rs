//! CSV and manifest emission. Floats are written in shortest round-trip
//! form, so byte-identical files mean bit-identical numbers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// One named pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Verdict {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Written once per run, atomically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub seed: u64,
    pub version: String,
    pub wall_clock_secs: f64,
    pub verdicts: Vec<Verdict>,
}

impl Manifest {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

/// Write-then-rename so a manifest is either absent or complete.
pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(manifest)?;
    let tmp = dir.join("manifest.json.tmp");
    fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    let target = manifest_path(dir);
    fs::rename(&tmp, &target)?;
    Ok(target)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = manifest_path(dir);
    let text = fs::read_to_string(&path)
        .with_context(|| format!("missing run artifact {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `t` plus named series as CSV with a header row.
pub fn write_series_csv(path: &Path, times: &[f64], columns: &[(&str, &[f64])]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = String::new();
    out.push('t');
    for (name, values) in columns {
        assert_eq!(values.len(), times.len(), "column {name} length");
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (k, t) in times.iter().enumerate() {
        out.push_str(&format!("{t}"));
        for (_, values) in columns {
            out.push_str(&format!(",{}", values[k]));
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes one row per path: `path` index plus named terminal values.
pub fn write_terminal_csv(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let n = columns.first().map(|(_, v)| v.len()).unwrap_or(0);
    let mut out = String::new();
    out.push_str("path");
    for (name, values) in columns {
        assert_eq!(values.len(), n, "column {name} length");
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for k in 0..n {
        out.push_str(&format!("{k}"));
        for (_, values) in columns {
            out.push_str(&format!(",{}", values[k]));
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

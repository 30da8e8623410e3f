//! CSV and manifest writing.

use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::scenarios::{Report, SCHEMA_VERSION};

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub schema_version: u32,
    pub scenario: &'a str,
    pub csv: String,
    pub rows: usize,
    pub config_hash: String,
    pub master_seed: u64,
    pub trials: u64,
    pub threads: usize,
    pub git_revision: Option<String>,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
    pub summary: &'a serde_json::Value,
    pub config: &'a ExperimentConfig,
}

/// `git rev-parse HEAD` of the working directory, if any.
pub fn git_revision() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

pub struct Written {
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

pub fn write(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    report: &Report,
    threads: usize,
    started_unix: u64,
    elapsed_seconds: f64,
) -> Result<Written> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let name = cfg.scenario.name();
    let csv = out_dir.join(format!("{name}.csv"));
    let manifest = out_dir.join(format!("{name}.json"));
    std::fs::write(&csv, &report.csv).with_context(|| format!("writing {}", csv.display()))?;
    let m = Manifest {
        schema_version: SCHEMA_VERSION,
        scenario: name,
        csv: format!("{name}.csv"),
        rows: report.rows,
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        trials: cfg.trials,
        threads,
        git_revision: git_revision(),
        started_unix,
        elapsed_seconds,
        summary: &report.summary,
        config: cfg,
    };
    std::fs::write(&manifest, serde_json::to_string_pretty(&m)? + "\n")
        .with_context(|| format!("writing {}", manifest.display()))?;
    Ok(Written { csv, manifest })
}

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use refugia::Grid;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const CSV_SCHEMA: u32 = 1;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the command line and the fully resolved config.
pub fn config_hash(command: &str, cfg: &RunConfig) -> String {
    let body = serde_json::to_string(cfg).expect("config serializes");
    sha256_hex(format!("{command}\n{body}").as_bytes())
}

pub fn grid_checksum(grid: &Grid) -> String {
    sha256_hex(&serde_json::to_vec(grid).expect("grid serializes"))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub config_hash: String,
    pub grid_checksum: String,
    pub wall_seconds: f64,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub config: RunConfig,
}

/// Output directory of one run. Every file goes through here so the
/// manifest lists all of them.
pub struct Run {
    dir: PathBuf,
    command: String,
    hash: String,
    grid_checksum: String,
    config: RunConfig,
    outputs: Vec<String>,
    start: Instant,
}

impl Run {
    pub fn new(command: &str, cfg: &RunConfig, grid: &Grid) -> Result<Self> {
        fs::create_dir_all(&cfg.output)
            .with_context(|| format!("creating output directory {}", cfg.output.display()))?;
        Ok(Run {
            dir: cfg.output.clone(),
            command: command.to_string(),
            hash: config_hash(command, cfg),
            grid_checksum: grid_checksum(grid),
            config: cfg.clone(),
            outputs: Vec::new(),
            start: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        atomic_write(&path, contents)?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        let mut s = format!(
            "# refugia csv schema {CSV_SCHEMA} config {}\n{}\n",
            self.hash,
            table.header.join(",")
        );
        for row in &table.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut body = serde_json::to_vec_pretty(value)?;
        body.push(b'\n');
        self.write(name, &body)
    }

    pub fn svg(&mut self, name: &str, svg: &str) -> Result<PathBuf> {
        self.write(name, svg.as_bytes())
    }

    pub fn finish(self, summary: serde_json::Value) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.hash,
            grid_checksum: self.grid_checksum,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            outputs: self.outputs,
            summary,
            config: self.config,
        };
        let path = self.dir.join("manifest.json");
        let mut body = serde_json::to_vec_pretty(&manifest)?;
        body.push(b'\n');
        atomic_write(&path, &body)?;
        Ok(path)
    }
}

fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Rows of preformatted cells.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip representation, so CSVs are exact and reproducible.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

//! `manifest.json`: written before a run starts and rewritten when it ends.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;

use crate::io::{write_json, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    /// `running`, `done` or `failed`.
    pub status: String,
    pub wall_seconds: Option<f64>,
    pub outputs: Vec<String>,
    pub error: Option<String>,
}

pub struct ManifestWriter {
    path: PathBuf,
    start: Instant,
    pub manifest: Manifest,
}

impl ManifestWriter {
    pub fn begin(dir: &Path, subcommand: &str, config: serde_json::Value, seed: Option<u64>, threads: usize) -> Result<Self> {
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            tool: "sixv",
            version: env!("CARGO_PKG_VERSION"),
            core_version: sixv_core::VERSION,
            subcommand: subcommand.into(),
            config,
            seed,
            threads,
            status: "running".into(),
            wall_seconds: None,
            outputs: Vec::new(),
            error: None,
        };
        let w = ManifestWriter { path: dir.join("manifest.json"), start: Instant::now(), manifest };
        write_json(&w.path, &w.manifest)?;
        Ok(w)
    }

    pub fn finish(mut self, outputs: Vec<String>, err: Option<String>) -> Result<()> {
        self.manifest.status = if err.is_some() { "failed" } else { "done" }.into();
        self.manifest.error = err;
        self.manifest.outputs = outputs;
        self.manifest.wall_seconds = Some(self.start.elapsed().as_secs_f64());
        write_json(&self.path, &self.manifest)
    }
}

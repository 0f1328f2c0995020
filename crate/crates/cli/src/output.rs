//! Output directory handling and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use pmpb::config::RunConfig;
use pmpb::pipeline::Timing;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct StageTimings {
    pub label: String,
    pub timings: Vec<Timing>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub config: Option<RunConfig>,
    pub config_text: Option<String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub timings: Vec<StageTimings>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn digest(path: &Path) -> std::io::Result<InputDigest> {
    let bytes = fs::read(path)?;
    let hash = Sha256::digest(&bytes);
    let sha256 = hash.iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputDigest { path: path.display().to_string(), sha256 })
}

/// An output directory whose manifest is written before anything else and
/// rewritten after every file.
pub struct RunDir {
    dir: PathBuf,
    pub manifest: Manifest,
}

impl RunDir {
    pub fn create(dir: &Path, command: &str, config: Option<&RunConfig>, inputs: Vec<InputDigest>) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            tool: "pmpb",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            started_unix: now(),
            finished_unix: None,
            config: config.cloned(),
            config_text: config.map(RunConfig::to_text),
            inputs,
            outputs: Vec::new(),
            timings: Vec::new(),
        };
        let run = RunDir { dir: dir.to_path_buf(), manifest };
        run.save_manifest()?;
        Ok(run)
    }

    fn save_manifest(&self) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest).map_err(std::io::Error::other)?;
        fs::write(self.dir.join("manifest.json"), text + "\n")
    }

    pub fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        fs::write(self.dir.join(name), contents)?;
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_string());
        }
        self.save_manifest()
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        self.write(name, &(text + "\n"))
    }

    pub fn add_timings(&mut self, label: String, timings: Vec<Timing>) {
        self.manifest.timings.push(StageTimings { label, timings });
    }

    pub fn finish(&mut self) -> std::io::Result<()> {
        self.manifest.finished_unix = Some(now());
        self.save_manifest()
    }
}

//! Run manifests and artifact files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::error::Result;

pub fn config_sha256(cfg: &ScenarioConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical_json().as_bytes()))
}

/// A default value that was filled in because the config left it open.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefaultUsed {
    pub key: String,
    pub value: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
    pub parallel: bool,
    pub defaults_used: Vec<DefaultUsed>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &ScenarioConfig, seed: u64, parallel: bool) -> Self {
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self {
            scenario: cfg.scenario.name().to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_sha256: config_sha256(cfg),
            config: serde_json::to_value(cfg).expect("config serializes"),
            started_unix_s: started,
            wall_clock_s: 0.0,
            parallel,
            defaults_used: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Records a default once per key.
    pub fn default_used(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        if !self.defaults_used.iter().any(|d| d.key == key) {
            self.defaults_used.push(DefaultUsed { key, value: value.to_string() });
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::error::HarnessError::Serialize(e.to_string()))?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// Writes artifacts under one output directory, each prefixed by a
/// `# seed=<seed> config_sha256=<hash>` comment line.
#[derive(Clone, Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    stamp: String,
    written: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, seed: u64, config_sha256: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), stamp: format!("# seed={seed} config_sha256={config_sha256}\n"), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Creates `rel` (a plain relative path inside the output directory),
    /// writes the stamp, then hands the writer to `body`.
    pub fn write<F>(&mut self, rel: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        let rel_path = Path::new(rel);
        if rel_path.is_absolute() || rel_path.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(crate::error::HarnessError::validation("output", format!("artifact path {rel:?} escapes the output directory")));
        }
        let path = self.dir.join(rel_path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        w.write_all(self.stamp.as_bytes())?;
        body(&mut w)?;
        w.flush()?;
        self.written.push(rel.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// Parses the stamp line of an artifact back into (seed, hash).
pub fn read_stamp(text: &str) -> Option<(u64, String)> {
    let line = text.lines().next()?.strip_prefix("# ")?;
    let mut seed = None;
    let mut hash = None;
    for kv in line.split_whitespace() {
        match kv.split_once('=')? {
            ("seed", v) => seed = v.parse().ok(),
            ("config_sha256", v) => hash = Some(v.to_string()),
            _ => {}
        }
    }
    Some((seed?, hash?))
}

//! Output directory bookkeeping: every file written is hashed into a manifest
//! that ends up in the run report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use sppa_core::raster::ascii::to_ascii_grid;
use sppa_core::PixelImage;

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects outputs, hashes and stage timings for one command run.
pub struct Outputs {
    dir: PathBuf,
    manifest: Vec<ManifestEntry>,
    timings: Map<String, Value>,
    record_timings: bool,
}

impl Outputs {
    pub fn create(dir: &Path, record_timings: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Vec::new(),
            timings: Map::new(),
            record_timings,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.manifest.push(ManifestEntry {
            path: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_raster(&mut self, name: &str, img: &PixelImage) -> Result<PathBuf> {
        self.write_bytes(name, to_ascii_grid(img).as_bytes())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Runs `f` as a named stage, recording its wall time when enabled.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        if self.record_timings {
            let ms = start.elapsed().as_secs_f64() * 1e3;
            self.timings.insert(name.to_string(), json!(ms));
        }
        Ok(out)
    }

    /// Writes `<command>.json` holding the config echo, results, manifest of
    /// all files written before it and, if enabled, stage timings.
    pub fn finish(mut self, command: &str, config: Value, results: Value) -> Result<PathBuf> {
        let mut report = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "results": results,
            "manifest": self.manifest,
        });
        if self.record_timings {
            report["timings_ms"] = Value::Object(std::mem::take(&mut self.timings));
        }
        let name = format!("{command}.json");
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        let path = self.dir.join(name);
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

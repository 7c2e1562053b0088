use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

/// Provenance record written next to every artifact a command produces.
/// Timestamps live here and nowhere else, so the artifacts themselves stay
/// byte-identical across reruns.
pub struct RunManifest {
    command: String,
    config_fingerprint: Option<String>,
    seeds: Vec<(String, u64)>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    extra: serde_json::Map<String, Value>,
    started: SystemTime,
    clock: Instant,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config_fingerprint: None,
            seeds: vec![],
            inputs: vec![],
            outputs: vec![],
            extra: Default::default(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn fingerprint(&mut self, fp: impl Into<String>) {
        self.config_fingerprint = Some(fp.into());
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.push((name.to_string(), seed));
    }

    pub fn input(&mut self, p: impl AsRef<Path>) {
        self.inputs.push(p.as_ref().to_path_buf());
    }

    pub fn output(&mut self, p: impl AsRef<Path>) {
        self.outputs.push(p.as_ref().to_path_buf());
    }

    pub fn note(&mut self, key: &str, value: Value) {
        self.extra.insert(key.to_string(), value);
    }

    pub fn write(self, path: &Path) -> anyhow::Result<()> {
        let started = self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let seeds: serde_json::Map<String, Value> = self.seeds.into_iter().map(|(k, v)| (k, json!(v))).collect();
        let doc = json!({
            "command": self.command,
            "config_fingerprint": self.config_fingerprint,
            "seeds": seeds,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "toolkit_version": hrtfxai::VERSION,
            "started_unix_s": started,
            "wall_clock_s": self.clock.elapsed().as_secs_f64(),
            "details": self.extra,
        });
        fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }
}

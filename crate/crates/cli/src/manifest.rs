//! Run manifests: what was run, with which settings, and digests of
//! every file written.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epochs: Vec<serde_json::Value>,
    pub outputs: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Collects artifacts for one command invocation. Outputs are written
/// through [`Run::write`] so each one is digested exactly as stored.
pub struct Run {
    dir: PathBuf,
    command: String,
    seed: u64,
    config: serde_json::Value,
    started: f64,
    clock: Instant,
    outputs: Vec<Artifact>,
    pub epochs: Vec<serde_json::Value>,
}

impl Run {
    pub fn start(dir: &Path, command: &str, seed: u64, config: serde_json::Value) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            seed,
            config,
            started: unix_now(),
            clock: Instant::now(),
            outputs: Vec::new(),
            epochs: Vec::new(),
        })
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.dir.join(file);
        std::fs::write(&path, bytes)?;
        self.outputs.push(Artifact { file: file.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(path)
    }

    pub fn finish(self) -> std::io::Result<RunManifest> {
        let manifest = RunManifest {
            tool: "dache".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            seed: self.seed,
            config: self.config,
            started_unix: self.started,
            finished_unix: unix_now(),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            epochs: self.epochs,
            outputs: self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(self.dir.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}

/// Files listed in the manifest at `dir` that are missing or whose
/// contents no longer match their digest.
pub fn verify(dir: &Path) -> std::io::Result<Vec<String>> {
    let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    Ok(manifest
        .outputs
        .iter()
        .filter(|a| std::fs::read(dir.join(&a.file)).map_or(true, |b| sha256_hex(&b) != a.sha256))
        .map(|a| a.file.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_verify_and_catch_edits() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::start(dir.path(), "test", 1, serde_json::json!({})).unwrap();
        run.write("a.txt", b"hello").unwrap();
        let m = run.finish().unwrap();
        assert_eq!(m.outputs[0].sha256, "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
        assert!(verify(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("a.txt"), b"hellO").unwrap();
        assert_eq!(verify(dir.path()).unwrap(), vec!["a.txt".to_string()]);
    }
}

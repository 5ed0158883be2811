//! Run manifests: every CLI command records its fully resolved
//! configuration, seed and corpus digest so the run can be reproduced
//! byte-identically from the manifest alone.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Fully resolved flag values (defaults materialized), keyed by flag
    /// name without the leading dashes.
    pub args: BTreeMap<String, String>,
    pub seed: u64,
    pub corpus_digest: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> RunManifest {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: BTreeMap::new(),
            seed,
            corpus_digest: None,
        }
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.args.insert(key.to_string(), value.to_string());
        self
    }

    /// Reconstruct the argv that reproduces this run.
    pub fn to_argv(&self) -> Vec<String> {
        let mut argv = vec![self.command.clone()];
        for (k, v) in &self.args {
            argv.push(format!("--{k}"));
            argv.push(v.clone());
        }
        argv
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self).unwrap())
    }

    pub fn load(path: &Path) -> std::io::Result<RunManifest> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::other(e.to_string()))
    }
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_argv() {
        let dir = std::env::temp_dir().join("gascom-manifest-test");
        std::fs::create_dir_all(&dir).unwrap();
        let mut m = RunManifest::new("walk", 7);
        m.arg("corpus", "corpus.jsonl").arg("strategy", "sim-rw").arg("L", "6");
        let path = dir.join("manifest.json");
        m.save(&path).unwrap();
        let loaded = RunManifest::load(&path).unwrap();
        assert_eq!(loaded.command, "walk");
        assert_eq!(loaded.seed, 7);
        let argv = loaded.to_argv();
        assert_eq!(argv[0], "walk");
        assert!(argv.contains(&"--strategy".to_string()));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn sha256_stable() {
        let dir = std::env::temp_dir().join("gascom-digest-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("x.txt");
        std::fs::write(&path, b"hello").unwrap();
        let a = sha256_file(&path).unwrap();
        assert_eq!(
            a,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        std::fs::remove_dir_all(&dir).ok();
    }
}

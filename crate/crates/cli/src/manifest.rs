//! Reproduction record written beside every run's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub bytes: u64,
    /// SHA-256 over `blob <len>\0<content>`, as git computes object ids.
    pub blob_sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<FileHash> {
    let content = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileHash {
        path: path.to_owned(),
        bytes: content.len() as u64,
        blob_sha256: blob_hash(&content),
    })
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(hash_file(path)?);
        Ok(())
    }

    /// Writes `name` under `dir` and records it as an output.
    pub fn write(&mut self, dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, content).with_context(|| format!("writing {}", p.display()))?;
        self.outputs.push(hash_file(&p)?);
        Ok(p)
    }

    /// Records a file some other writer produced.
    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(hash_file(path)?);
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join("manifest.json");
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(&p, s).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_sha256_objects() {
        // `git hash-object --object-format=sha256` of an empty file
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn outputs_are_recorded_with_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("test", 3, &serde_json::json!({"k": 1})).unwrap();
        m.write(dir.path(), "a.txt", "hello\n").unwrap();
        assert_eq!(m.outputs[0].bytes, 6);
        assert_eq!(m.outputs[0].blob_sha256, blob_hash(b"hello\n"));
        let p = m.save(dir.path()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["seed"], 3);
    }
}

//! Run manifests written next to every output file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decode::PhaseTimings;

pub const MANIFEST_VERSION: &str = "specmer-manifest/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> io::Result<Self> {
        Ok(Self { path: path.to_path_buf(), sha256: sha256_hex(&fs::read(path)?) })
    }
}

/// Output entry addressed by a git-style blob hash (`sha256("blob <len>\0" ++ bytes)`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: PathBuf,
    pub content_hash: String,
}

impl OutputDigest {
    pub fn of(path: &Path) -> io::Result<Self> {
        Ok(Self { path: path.to_path_buf(), content_hash: content_hash(&fs::read(path)?) })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub timings: PhaseTimings,
    pub wall_ms: u64,
    pub outputs: Vec<OutputDigest>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        Self {
            version: MANIFEST_VERSION.into(),
            tool_version: crate::TOOL_VERSION.into(),
            command: command.into(),
            config,
            seed,
            inputs: Vec::new(),
            timings: PhaseTimings::default(),
            wall_ms: 0,
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> io::Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> io::Result<()> {
        self.outputs.push(OutputDigest::of(path)?);
        Ok(())
    }

    /// `<output>.manifest.json`.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(path, json + "\n")
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        serde_json::from_slice(&fs::read(path)?).map_err(io::Error::other)
    }

    /// Inputs and configuration match, so outputs must match too.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        self.command == other.command
            && self.config == other.config
            && self.seed == other.seed
            && self.inputs.iter().map(|d| &d.sha256).eq(other.inputs.iter().map(|d| &d.sha256))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_hash_matches_git_framing() {
        let mut h = Sha256::new();
        h.update(b"blob 5\0hello");
        assert_eq!(content_hash(b"hello"), hex::encode(h.finalize()));
        assert_ne!(content_hash(b"hello"), sha256_hex(b"hello"));
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "abc").unwrap();
        let mut m = RunManifest::new("generate", serde_json::json!({"gamma": 5}), 7);
        m.add_input(&input).unwrap();
        m.add_output(&input).unwrap();
        let path = RunManifest::path_for(&input);
        assert!(path.to_string_lossy().ends_with("in.txt.manifest.json"));
        m.write(&path).unwrap();
        let back = RunManifest::read(&path).unwrap();
        assert_eq!(back, m);
        assert!(back.same_run(&m));
        let other = RunManifest::new("generate", serde_json::json!({"gamma": 6}), 7);
        assert!(!other.same_run(&m));
    }
}

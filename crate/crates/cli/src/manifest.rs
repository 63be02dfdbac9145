//! Run manifest: everything needed to rerun a command bit for bit.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

/// No timestamps or host details, so identical runs give identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: Vec<String>,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design_sha256: Option<String>,
    pub seeds: Vec<u64>,
    /// The configuration after command-line overrides.
    pub effective_config: serde_json::Value,
    pub exit_code: i32,
    pub artifacts: Vec<Artifact>,
}

/// Writes artifacts into one directory and remembers their digests.
pub struct ArtifactWriter {
    dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, file: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let path = self.dir.join(file);
        fs::write(&path, bytes)?;
        self.artifacts.push(Artifact {
            file: file.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(self, mut manifest: Manifest) -> io::Result<()> {
        manifest.artifacts = self.artifacts;
        let mut text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), text)
    }
}

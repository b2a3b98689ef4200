//! Run manifests: a JSON record written next to every command's outputs.
//! No timestamps or host details, so identical runs give identical files.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::media_io::{feature_path, read_manifest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    /// Hex SHA-256; for a media manifest it also covers every referenced
    /// feature file, in manifest order.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub arguments: Vec<String>,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, arguments: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            arguments,
            config: None,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input_file(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(InputDigest {
            path: display(path),
            sha256: hex(&Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn input_manifest(&mut self, path: &Path) -> Result<()> {
        let mut hasher = Sha256::new();
        hasher.update(std::fs::read(path).map_err(|e| Error::io(path, e))?);
        for record in read_manifest(path)? {
            let f = feature_path(path, &record);
            hasher.update(std::fs::read(&f).map_err(|e| Error::io(&f, e))?);
        }
        self.inputs.push(InputDigest {
            path: display(path),
            sha256: hex(&hasher.finalize()),
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(display(path));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap_or_default();
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Manifest location for a single-file output: `<file>.run.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    output.with_file_name(name)
}

fn display(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_path_appends_suffix() {
        assert_eq!(
            manifest_path_for(Path::new("out/head.bidh")),
            PathBuf::from("out/head.bidh.run.json")
        );
    }

    #[test]
    fn json_has_no_timestamp_fields() {
        let mut m = RunManifest::new("score", vec!["--threads".into(), "2".into()]);
        m.seed = Some(3);
        m.output(Path::new("a.csv"));
        let json = m.to_json();
        assert!(json.contains("\"command\": \"score\""));
        assert!(!json.contains("time"));
        assert_eq!(json, m.clone().to_json());
    }
}

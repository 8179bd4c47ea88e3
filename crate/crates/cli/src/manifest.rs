use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command: the resolved configuration, the
/// seeds, and digests of every file read or written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_seconds: f64,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn digests(paths: &[&Path]) -> anyhow::Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.to_path_buf(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// `<file>.manifest.json` beside a single output file.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    /// Recomputes every recorded digest and returns the files that no
    /// longer match.
    #[cfg(test)]
    fn stale_files(&self) -> Vec<PathBuf> {
        self.inputs
            .iter()
            .chain(&self.outputs)
            .filter(|d| sha256_file(&d.path).map_or(true, |h| h != d.sha256))
            .map(|d| d.path.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_and_staleness() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        std::fs::write(&f, b"abc").unwrap();
        assert_eq!(
            sha256_file(&f).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let m = RunManifest {
            tool: "d2dra".into(),
            version: "0".into(),
            command: "test".into(),
            argv: vec![],
            config: serde_json::Value::Null,
            seeds: serde_json::Value::Null,
            inputs: digests(&[&f]).unwrap(),
            outputs: vec![],
            wall_seconds: 0.0,
        };
        assert!(m.stale_files().is_empty());
        std::fs::write(&f, b"abd").unwrap();
        assert_eq!(m.stale_files(), vec![f.clone()]);
        assert_eq!(manifest_path_for(&f).file_name().unwrap(), "a.txt.manifest.json");
    }
}

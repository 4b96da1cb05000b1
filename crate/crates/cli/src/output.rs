//! CSV formatting, artifact hashing and the run manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub content: Vec<u8>,
}

impl Artifact {
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.content))
    }
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: header.join(",") + "\n",
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_artifact(self, name: &str) -> Artifact {
        Artifact {
            name: name.to_string(),
            content: self.text.into_bytes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub library_version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub artifacts: Vec<ArtifactRecord>,
    pub duration_seconds: f64,
    pub threads: usize,
    pub fresh_paths: bool,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes every file or none: on error, whatever was already written is
/// removed again, together with the directory if this call created it.
pub fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> io::Result<()> {
    let created = !dir.exists();
    fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = files.iter().try_for_each(|(name, content)| {
        let path = dir.join(name);
        fs::write(&path, content)?;
        written.push(path);
        Ok(())
    });
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        if created {
            let _ = fs::remove_dir(dir);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE, -0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_has_header() {
        let mut c = Csv::new(&["k", "u"]);
        c.row(vec![num(0.5), num(-2.0)]);
        let a = c.into_artifact("x.csv");
        assert_eq!(String::from_utf8(a.content.clone()).unwrap(), "k,u\n5.0000000000000000e-1,-2.0000000000000000e0\n");
        assert_eq!(a.sha256().len(), 64);
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        let files = vec![("a.csv".to_string(), b"a\n".to_vec()), ("no/such/b.csv".to_string(), b"b\n".to_vec())];
        assert!(write_all(&dir, &files).is_err());
        assert!(!dir.exists());
    }
}

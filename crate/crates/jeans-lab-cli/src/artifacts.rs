//! Output directory bookkeeping: data files, digests, manifest and summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

/// Pass/fail outcome of one named invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub values: BTreeMap<String, Value>,
}

impl Summary {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), passed: true, ..Default::default() }
    }

    pub fn verdict(&mut self, name: &str, holds: bool, detail: String) {
        self.passed &= holds;
        self.verdicts.push(Verdict { name: name.into(), holds, detail });
    }

    pub fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn find(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Folds another summary in, prefixing its names.
    pub fn absorb(&mut self, prefix: &str, other: Summary) {
        for v in other.verdicts {
            self.verdict(&format!("{prefix}{}", v.name), v.holds, v.detail);
        }
        for (k, v) in other.values {
            self.values.insert(format!("{prefix}{k}"), v);
        }
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
    pub seed: u64,
    /// SHA-256 of every data file, keyed by file name.
    pub digests: BTreeMap<String, String>,
}

/// Writer for one output directory.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), digests: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_data(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.digests.insert(name.into(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes a numeric CSV with a header row.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|x| format!("{x:e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write_data(name, &bytes)
    }

    /// Writes a CSV whose cells are already formatted.
    pub fn text_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write_data(name, &bytes)
    }

    /// Writes a JSON data file that is covered by the digests.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let bytes = serde_json::to_vec_pretty(value)?;
        self.write_data(name, &bytes)
    }

    /// Writes `manifest.json` and `summary.json`.
    pub fn finish(self, config: &RunConfig, summary: &Summary) -> Result<Manifest, CliError> {
        let mut versions = BTreeMap::new();
        versions.insert("jeans-lab-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("jeans-lab".to_string(), jeans_lab::VERSION.to_string());
        let manifest = Manifest { config: config.clone(), versions, seed: config.seed, digests: self.digests };
        fs::write(self.dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        fs::write(self.dir.join("summary.json"), serde_json::to_vec_pretty(summary)?)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn failing_verdict_clears_passed() {
        let mut s = Summary::new("x");
        s.verdict("a", true, String::new());
        assert!(s.passed);
        s.verdict("b", false, String::new());
        assert!(!s.passed);
        let mut outer = Summary::new("y");
        outer.absorb("run/", s);
        assert!(!outer.passed);
        assert!(outer.find("run/b").is_some());
    }
}

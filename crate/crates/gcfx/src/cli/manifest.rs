//! Per-run manifest: each stage records a hash of its configuration,
//! the hashes of its input files, and the files it produced. A stage
//! whose entry still matches on disk is skipped on rerun.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("missing upstream artifact '{0}'; run the earlier stage first")]
    MissingArtifact(PathBuf),
    #[error("stale input '{path}': hash changed since '{stage}' consumed it")]
    StaleInput { stage: String, path: PathBuf },
    #[error("manifest format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn sha256_file(path: &Path) -> Result<String, ManifestError> {
    let bytes = std::fs::read(path)?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEntry {
    pub config_hash: String,
    /// Path (relative to the run dir) -> content hash.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageEntry>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Self, ManifestError> {
        let path = run_dir.join("manifest.json");
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ManifestError::Format(e.to_string()))
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), ManifestError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(run_dir.join("manifest.json"), text)?;
        Ok(())
    }

    /// True when `stage` already ran with this configuration, its
    /// inputs are unchanged, and all outputs still match their
    /// recorded hashes.
    pub fn is_current(
        &self,
        run_dir: &Path,
        stage: &str,
        config_hash: &str,
        inputs: &[&str],
    ) -> bool {
        let Some(entry) = self.stages.get(stage) else {
            return false;
        };
        if entry.config_hash != config_hash {
            return false;
        }
        let recorded: Vec<&String> = entry.inputs.keys().collect();
        if recorded.len() != inputs.len() || inputs.iter().any(|i| !entry.inputs.contains_key(*i))
        {
            return false;
        }
        for (rel, hash) in entry.inputs.iter().chain(entry.outputs.iter()) {
            match sha256_file(&run_dir.join(rel)) {
                Ok(h) if &h == hash => {}
                _ => return false,
            }
        }
        true
    }

    /// Verify that each input exists and record the stage entry.
    pub fn record(
        &mut self,
        run_dir: &Path,
        stage: &str,
        config_hash: String,
        inputs: &[&str],
        outputs: &[&str],
    ) -> Result<(), ManifestError> {
        let mut entry = StageEntry {
            config_hash,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        for rel in inputs {
            let path = run_dir.join(rel);
            if !path.exists() {
                return Err(ManifestError::MissingArtifact(path));
            }
            entry.inputs.insert(rel.to_string(), sha256_file(&path)?);
        }
        for rel in outputs {
            let path = run_dir.join(rel);
            if !path.exists() {
                return Err(ManifestError::MissingArtifact(path));
            }
            entry.outputs.insert(rel.to_string(), sha256_file(&path)?);
        }
        self.stages.insert(stage.to_string(), entry);
        Ok(())
    }

    /// Check that a stage's declared inputs exist and still carry the
    /// hashes recorded by the stage that produced them.
    pub fn check_inputs(&self, run_dir: &Path, inputs: &[&str]) -> Result<(), ManifestError> {
        for rel in inputs {
            let path = run_dir.join(rel);
            if !path.exists() {
                return Err(ManifestError::MissingArtifact(path));
            }
            // find the producer entry, if any, and compare
            for (stage, entry) in &self.stages {
                if let Some(hash) = entry.outputs.get(*rel) {
                    let now = sha256_file(&path)?;
                    if &now != hash {
                        return Err(ManifestError::StaleInput {
                            stage: stage.clone(),
                            path,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

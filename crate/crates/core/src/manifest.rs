//! Run-directory manifest: every artifact a pipeline stage writes is
//! registered here by relative path and content hash, so a verify pass can
//! detect any modified or missing file and re-runs can be compared by hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Episode,
    Sidecar,
    Stats,
    Checkpoint,
    Metrics,
    Report,
    Export,
    Config,
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: ArtifactKind,
    pub sha256: String,
    /// Whether identical seeds reproduce identical bytes. Diagnostics that
    /// embed wall-clock timings are registered but excluded from
    /// determinism comparisons.
    pub reproducible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            format: "spikectl-run".into(),
            version: 1,
            entries: BTreeMap::new(),
        }
    }
}

impl RunManifest {
    pub fn load_or_default(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        if path.exists() {
            Ok(serde_json::from_slice(&std::fs::read(path)?)?)
        } else {
            Ok(RunManifest::default())
        }
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        std::fs::create_dir_all(root)?;
        std::fs::write(root.join(MANIFEST_FILE), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// Hash a file under `root` and register it.
    pub fn record(
        &mut self,
        root: &Path,
        rel: impl AsRef<Path>,
        kind: ArtifactKind,
        reproducible: bool,
    ) -> Result<String> {
        let rel = rel.as_ref();
        let hash = hashing::sha256_file(&root.join(rel))?;
        self.entries.insert(
            rel.to_string_lossy().replace('\\', "/"),
            ManifestEntry {
                kind,
                sha256: hash.clone(),
                reproducible,
            },
        );
        Ok(hash)
    }

    /// Recompute every entry's hash; errors with the list of missing or
    /// modified files if anything changed.
    pub fn verify(&self, root: &Path) -> Result<()> {
        let mut bad = Vec::new();
        for (rel, entry) in &self.entries {
            let path = root.join(rel);
            match hashing::sha256_file(&path) {
                Ok(h) if h == entry.sha256 => {}
                Ok(_) => bad.push(format!("{rel}: content changed")),
                Err(_) => bad.push(format!("{rel}: missing")),
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Verify(bad.join("; ")))
        }
    }

    /// Hashes of the deterministic artifacts, for cross-run comparison.
    pub fn reproducible_hashes(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .filter(|(_, e)| e.reproducible)
            .map(|(k, e)| (k.clone(), e.sha256.clone()))
            .collect()
    }

    /// Look up an artifact path by hash.
    pub fn find_by_hash(&self, hash: &str) -> Option<PathBuf> {
        self.entries
            .iter()
            .find(|(_, e)| e.sha256 == hash)
            .map(|(k, _)| PathBuf::from(k))
    }
}

/// Conventional run-directory layout.
pub mod layout {
    pub const EPISODES: &str = "episodes";
    pub const STATS: &str = "stats";
    pub const CHECKPOINTS: &str = "checkpoints";
    pub const REPORTS: &str = "reports";
    pub const EXPORT: &str = "export";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_detects_modification_and_absence() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir_all(root.join("reports")).unwrap();
        std::fs::write(root.join("reports/a.json"), b"{}").unwrap();
        let mut m = RunManifest::default();
        m.record(root, "reports/a.json", ArtifactKind::Report, true).unwrap();
        m.save(root).unwrap();

        let loaded = RunManifest::load_or_default(root).unwrap();
        loaded.verify(root).unwrap();

        std::fs::write(root.join("reports/a.json"), b"{\"x\":1}").unwrap();
        let err = loaded.verify(root).unwrap_err();
        assert!(matches!(err, Error::Verify(_)));

        std::fs::remove_file(root.join("reports/a.json")).unwrap();
        assert!(loaded.verify(root).is_err());
    }

    #[test]
    fn reproducible_filter() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::write(root.join("m.csv"), b"epoch,wall\n0,1.23\n").unwrap();
        std::fs::write(root.join("c.json"), b"{}").unwrap();
        let mut m = RunManifest::default();
        m.record(root, "m.csv", ArtifactKind::Metrics, false).unwrap();
        m.record(root, "c.json", ArtifactKind::Checkpoint, true).unwrap();
        let rep = m.reproducible_hashes();
        assert!(rep.contains_key("c.json"));
        assert!(!rep.contains_key("m.csv"));
    }
}

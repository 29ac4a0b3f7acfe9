//! Versioned JSON checkpoint format.
//!
//! A checkpoint is the canonical serialized form of a [`SpikingNetwork`]:
//! explicit shapes, row-major weight arrays, channel labels, the input
//! normalization, and a provenance block (config hash, dataset hash, parent
//! checkpoints). Checkpoint identity is the SHA-256 of the canonical JSON
//! bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing;
use crate::snn::SpikingNetwork;
use crate::training::LossBreakdown;

pub const CHECKPOINT_FORMAT: &str = "spikectl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub network: SpikingNetwork<f32>,
    pub held_out_loss: Option<LossBreakdown>,
}

impl Checkpoint {
    pub fn new(network: SpikingNetwork<f32>, held_out_loss: Option<LossBreakdown>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network,
            held_out_loss,
        }
    }

    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(hashing::sha256_hex(&self.to_canonical_json()?))
    }
}

/// Write a checkpoint and return its content hash.
pub fn save(checkpoint: &Checkpoint, path: &Path) -> Result<String> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let bytes = checkpoint.to_canonical_json()?;
    std::fs::write(path, &bytes)?;
    Ok(hashing::sha256_hex(&bytes))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let ck: Checkpoint = serde_json::from_slice(&bytes)?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!("unexpected format marker `{}`", ck.format),
        });
    }
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!("unsupported checkpoint version {}", ck.version),
        });
    }
    ck.network.validate()?;
    Ok(ck)
}

/// Load and return the network plus the file's content hash.
pub fn load_network(path: &Path) -> Result<(SpikingNetwork<f32>, String)> {
    let ck = load(path)?;
    let hash = hashing::sha256_file(path)?;
    Ok((ck.network, hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::{init_network, TrainConfig};

    #[test]
    fn save_load_round_trip_is_exact() {
        let mut cfg = TrainConfig::controller();
        cfg.hidden = vec![9];
        cfg.frozen_integrators = 2;
        let labels: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let out: Vec<String> = (0..3).map(|i| format!("o{i}")).collect();
        let mut net = init_network(&labels, &out, &cfg, "ck-test");
        net.meta
            .provenance
            .insert("config_hash".into(), "abc".into());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt.json");
        let ck = Checkpoint::new(net.clone(), None);
        let h1 = save(&ck, &path).unwrap();
        let (loaded, h2) = load_network(&path).unwrap();
        assert_eq!(loaded, net);
        assert_eq!(h1, h2);
        // Re-save reproduces identical bytes.
        let h3 = save(&Checkpoint::new(loaded, None), &path).unwrap();
        assert_eq!(h1, h3);
    }

    #[test]
    fn version_and_format_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, b"{\"format\":\"other\",\"version\":1,\"network\":null,\"held_out_loss\":null}").unwrap();
        assert!(load(&path).is_err());
    }
}

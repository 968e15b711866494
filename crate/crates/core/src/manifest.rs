//! Run manifests: the resolved configuration, data provenance and content
//! hashes that make a training run reproducible from its output directory.

use crate::bands::{format_band_config, BandGroupSpec};
use crate::data::Provenance;
use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Everything needed to re-run a training job and get identical results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub train: TrainConfig,
    pub supervision: String,
    pub contrastive: bool,
    pub encoder: EncoderConfig,
    pub classifier_hidden: Option<usize>,
    pub split_dir: String,
    pub provenance: Provenance,
    pub band_table_hash: String,
    pub prompt_catalog_hash: String,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<RunManifest> {
        serde_json::from_str(text).map_err(|e| Error::data(format!("bad manifest: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        RunManifest::from_json(&std::fs::read_to_string(path)?)
    }
}

/// sha256 hex of the band table in its plain-text config form.
pub fn band_table_hash(specs: &[BandGroupSpec]) -> String {
    let digest = Sha256::digest(format_band_config(specs).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bands::default_band_groups;
    use crate::data::NormStats;
    use crate::prompts::default_catalog;

    #[test]
    fn manifest_round_trips_through_json() {
        let groups = default_band_groups();
        let manifest = RunManifest {
            artifact_version: "0.1.0".to_string(),
            train: TrainConfig::default(),
            supervision: "msm".to_string(),
            contrastive: true,
            encoder: EncoderConfig::default(),
            classifier_hidden: None,
            split_dir: "split".to_string(),
            provenance: Provenance {
                source: "synth".to_string(),
                seed: 47,
                per_class: 10,
                test_size: 20,
                norm: NormStats::identity(),
            },
            band_table_hash: band_table_hash(&groups),
            prompt_catalog_hash: default_catalog(&groups).catalog.hash_hex(),
        };
        let back = RunManifest::from_json(&manifest.to_json()).unwrap();
        assert_eq!(back, manifest);
    }

    #[test]
    fn hashes_pin_content() {
        let groups = default_band_groups();
        let h1 = band_table_hash(&groups);
        let mut other = groups.clone();
        other[0].prompt_name = "vertical-horizontal".to_string();
        let h2 = band_table_hash(&other);
        assert_ne!(h1, h2);
        assert_eq!(h1.len(), 64);
    }
}

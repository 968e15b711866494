//! Versioned binary checkpoints: a manifest describing the architecture
//! (arch names, embedding width, group order, vocabulary) plus every
//! parameter tensor.

use crate::bands::{format_band_config, parse_band_config};
use crate::encoders::{EncoderConfig, EncoderRegistry, NamedTensor, Vocab};
use crate::error::{Error, Result};
use crate::model::{BpLczModel, ModelConfig};
use ndarray::ArrayD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 8] = b"BPLCZCKP";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorRecord {
    fn from_tensor(t: &NamedTensor) -> TensorRecord {
        TensorRecord {
            name: t.name.clone(),
            shape: t.value.shape().to_vec(),
            data: t.value.iter().copied().collect(),
        }
    }

    fn into_tensor(self) -> Result<NamedTensor> {
        let value = ArrayD::from_shape_vec(ndarray::IxDyn(&self.shape), self.data)
            .map_err(|e| Error::Checkpoint(format!("tensor {}: {e}", self.name)))?;
        Ok(NamedTensor { name: self.name, value })
    }
}

/// Architecture description stored alongside the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub artifact_version: String,
    pub encoder: EncoderConfig,
    pub classifier_hidden: Option<usize>,
    pub class_count: usize,
    /// Band table in the plain-text config format (defines group order).
    pub band_table: String,
    /// Vocabulary words (without the reserved unknown entry).
    pub vocab: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    manifest: CheckpointManifest,
    image: Vec<Vec<TensorRecord>>,
    text: Vec<Vec<TensorRecord>>,
    classifier: Vec<TensorRecord>,
}

pub fn manifest_for(model: &BpLczModel) -> CheckpointManifest {
    CheckpointManifest {
        format_version: FORMAT_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        encoder: model.cfg.encoder.clone(),
        classifier_hidden: model.cfg.classifier_hidden,
        class_count: model.cfg.class_count,
        band_table: format_band_config(&model.cfg.groups),
        vocab: model.vocab.words().to_vec(),
    }
}

pub fn save_checkpoint(model: &BpLczModel, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        manifest: manifest_for(model),
        image: model
            .image_params
            .iter()
            .map(|set| set.iter().map(TensorRecord::from_tensor).collect())
            .collect(),
        text: model
            .text_params
            .iter()
            .map(|set| set.iter().map(TensorRecord::from_tensor).collect())
            .collect(),
        classifier: model.classifier_params.iter().map(TensorRecord::from_tensor).collect(),
    };
    let blob = bincode::serialize(&file)
        .map_err(|e| Error::Checkpoint(format!("serialization failed: {e}")))?;
    let mut bytes = Vec::with_capacity(blob.len() + 12);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&blob);
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Loads and validates a checkpoint: magic, format version, known arch names,
/// and tensor names/shapes against a reference initialization of the same
/// configuration.
pub fn load_checkpoint(path: &Path, registry: &EncoderRegistry) -> Result<BpLczModel> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let file: CheckpointFile = bincode::deserialize(&bytes[12..])
        .map_err(|e| Error::Checkpoint(format!("corrupt checkpoint: {e}")))?;

    let manifest = file.manifest;
    let groups = parse_band_config(&manifest.band_table)
        .map_err(|e| Error::Checkpoint(format!("bad band table in manifest: {e}")))?;
    let cfg = ModelConfig {
        encoder: manifest.encoder.clone(),
        classifier_hidden: manifest.classifier_hidden,
        class_count: manifest.class_count,
        groups,
    };
    cfg.validate().map_err(|e| Error::Checkpoint(format!("invalid manifest config: {e}")))?;
    let vocab = Vocab::from_words(manifest.vocab.clone());

    // Reference layout for shape checking.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let reference = BpLczModel::init(cfg.clone(), vocab.clone(), registry, &mut rng)
        .map_err(|e| Error::Checkpoint(format!("cannot rebuild architecture: {e}")))?;

    let into_sets = |records: Vec<Vec<TensorRecord>>| -> Result<Vec<Vec<NamedTensor>>> {
        records
            .into_iter()
            .map(|set| set.into_iter().map(TensorRecord::into_tensor).collect())
            .collect()
    };
    let image_params = into_sets(file.image)?;
    let text_params = into_sets(file.text)?;
    let classifier_params: Vec<NamedTensor> = file
        .classifier
        .into_iter()
        .map(TensorRecord::into_tensor)
        .collect::<Result<_>>()?;

    let check = |loaded: &[Vec<NamedTensor>], expected: &[Vec<NamedTensor>], what: &str| -> Result<()> {
        if loaded.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "{what}: {} parameter sets, expected {}",
                loaded.len(),
                expected.len()
            )));
        }
        for (set, exp_set) in loaded.iter().zip(expected) {
            if set.len() != exp_set.len() {
                return Err(Error::Checkpoint(format!(
                    "{what}: {} tensors, expected {}",
                    set.len(),
                    exp_set.len()
                )));
            }
            for (t, e) in set.iter().zip(exp_set) {
                if t.name != e.name || t.value.shape() != e.value.shape() {
                    return Err(Error::Checkpoint(format!(
                        "{what}: tensor {} has shape {:?}, expected {} {:?}",
                        t.name,
                        t.value.shape(),
                        e.name,
                        e.value.shape()
                    )));
                }
            }
        }
        Ok(())
    };
    check(&image_params, &reference.image_params, "image encoders")?;
    check(&text_params, &reference.text_params, "text encoder")?;
    check(
        std::slice::from_ref(&classifier_params),
        std::slice::from_ref(&reference.classifier_params),
        "classifier",
    )?;

    Ok(BpLczModel { cfg, vocab, image_params, text_params, classifier_params })
}

//! Dual-encoder machinery: per-group image encoders, a text encoder over the
//! prompt vocabulary, and the similarity fusion that aligns them.
//!
//! Encoder architectures are interchangeable strategies: each variant
//! implements [`ImageEncoderArch`] or [`TextEncoderArch`] and is registered by
//! name in an [`EncoderRegistry`], so configs and the CLI can select them at
//! runtime.

mod image;
mod similarity;
mod text;

pub use image::{Conv3Encoder, GapLinearEncoder};
pub use similarity::{fuse_similarities, normalize_rows, similarity_matrices, SimilarityBundle};
pub use text::{tokenize, EmbedMeanEncoder, EmbedMlpEncoder, Vocab};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Encoder hyperparameters. `embed_dim` is the shared embedding width d.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub image_arch: String,
    /// Channel widths of the three conv blocks (conv3 architecture).
    pub image_widths: Vec<usize>,
    pub text_arch: String,
    /// Width of the word embedding table.
    pub text_embed_dim: usize,
    /// Hidden width for the embed-mlp text architecture.
    pub text_hidden: usize,
    pub share_text_encoder: bool,
    pub share_image_encoders: bool,
}

impl Default for EncoderConfig {
    fn default() -> EncoderConfig {
        EncoderConfig {
            embed_dim: 128,
            image_arch: "conv3".to_string(),
            image_widths: vec![8, 16, 16],
            text_arch: "embed-mean".to_string(),
            text_embed_dim: 64,
            text_hidden: 64,
            share_text_encoder: true,
            share_image_encoders: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::argument(format!("embed_dim {} must be >= 2", self.embed_dim)));
        }
        if self.image_widths.is_empty() || self.image_widths.iter().any(|&w| w == 0) {
            return Err(Error::argument("image_widths must be non-empty and positive"));
        }
        if self.text_embed_dim == 0 || self.text_hidden == 0 {
            return Err(Error::argument("text encoder widths must be positive"));
        }
        Ok(())
    }
}

/// A parameter tensor with a stable name (used in checkpoints).
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: ArrayD<f64>,
}

impl NamedTensor {
    pub fn new(name: &str, value: ArrayD<f64>) -> NamedTensor {
        NamedTensor { name: name.to_string(), value }
    }
}

/// Uniform init in [-limit, limit] with a deterministic draw order.
pub(crate) fn uniform_tensor(
    name: &str,
    shape: &[usize],
    limit: f64,
    rng: &mut ChaCha8Rng,
) -> NamedTensor {
    let value = ArrayD::from_shape_simple_fn(ndarray::IxDyn(shape), || rng.gen_range(-limit..limit));
    NamedTensor::new(name, value)
}

pub(crate) fn zeros_tensor(name: &str, shape: &[usize]) -> NamedTensor {
    NamedTensor::new(name, ArrayD::zeros(ndarray::IxDyn(shape)))
}

/// An image encoder variant: maps a `[B,C,32,32]` group batch to `[B,d]`.
pub trait ImageEncoderArch: Send + Sync {
    fn name(&self) -> &'static str;
    /// Fresh parameters for a group with `in_channels` input channels.
    fn init(&self, cfg: &EncoderConfig, in_channels: usize, rng: &mut ChaCha8Rng) -> Vec<NamedTensor>;
    /// Records the forward pass on the tape. `params` bind the tensors
    /// returned by [`Self::init`], in order.
    fn forward(&self, tape: &mut Tape, params: &[Var], input: Var) -> Var;
}

/// A text encoder variant: maps tokenized prompts to `[B,d]`.
pub trait TextEncoderArch: Send + Sync {
    fn name(&self) -> &'static str;
    fn init(&self, cfg: &EncoderConfig, vocab_size: usize, rng: &mut ChaCha8Rng) -> Vec<NamedTensor>;
    fn forward(&self, tape: &mut Tape, params: &[Var], tokens: &[Vec<usize>]) -> Var;
}

/// Name-keyed registry of encoder variants.
pub struct EncoderRegistry {
    image: BTreeMap<&'static str, Box<dyn ImageEncoderArch>>,
    text: BTreeMap<&'static str, Box<dyn TextEncoderArch>>,
}

impl EncoderRegistry {
    /// Registry with the built-in architectures.
    pub fn builtin() -> EncoderRegistry {
        let mut reg = EncoderRegistry { image: BTreeMap::new(), text: BTreeMap::new() };
        reg.register_image(Box::new(Conv3Encoder));
        reg.register_image(Box::new(GapLinearEncoder));
        reg.register_text(Box::new(EmbedMeanEncoder));
        reg.register_text(Box::new(EmbedMlpEncoder));
        reg
    }

    pub fn register_image(&mut self, arch: Box<dyn ImageEncoderArch>) {
        self.image.insert(arch.name(), arch);
    }

    pub fn register_text(&mut self, arch: Box<dyn TextEncoderArch>) {
        self.text.insert(arch.name(), arch);
    }

    pub fn image(&self, name: &str) -> Result<&dyn ImageEncoderArch> {
        self.image.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            Error::argument(format!(
                "unknown image encoder {name:?}; available: {}",
                self.image_names().join(", ")
            ))
        })
    }

    pub fn text(&self, name: &str) -> Result<&dyn TextEncoderArch> {
        self.text.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            Error::argument(format!(
                "unknown text encoder {name:?}; available: {}",
                self.text_names().join(", ")
            ))
        })
    }

    pub fn image_names(&self) -> Vec<&'static str> {
        self.image.keys().copied().collect()
    }

    pub fn text_names(&self) -> Vec<&'static str> {
        self.text.keys().copied().collect()
    }
}

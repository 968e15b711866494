//! Text encoders over the closed prompt vocabulary.

use super::{uniform_tensor, zeros_tensor, EncoderConfig, NamedTensor, TextEncoderArch};
use crate::error::{Error, Result};
use crate::prompts::PromptCatalog;
use crate::tape::{Tape, Var};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Splits a prompt into word tokens: whitespace-separated, with leading and
/// trailing punctuation stripped (inner hyphens survive, so "high-rise" is
/// one token).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Word-level vocabulary. Index 0 is reserved for unknown words; the prompt
/// catalog is closed, so training never produces index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

pub const UNK: usize = 0;

impl Vocab {
    /// Builds the vocabulary from every prompt in the catalog.
    pub fn from_catalog(catalog: &PromptCatalog) -> Vocab {
        let mut set = std::collections::BTreeSet::new();
        for (_, prompt) in catalog.iter() {
            for tok in tokenize(prompt) {
                set.insert(tok);
            }
        }
        Vocab::from_words(set.into_iter().collect())
    }

    /// Builds from an explicit word list (checkpoint restore path).
    pub fn from_words(words: Vec<String>) -> Vocab {
        let mut all = Vec::with_capacity(words.len() + 1);
        all.push("<unk>".to_string());
        all.extend(words.into_iter().filter(|w| w != "<unk>"));
        let index = all.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words: all, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Word list without the reserved `<unk>` entry.
    pub fn words(&self) -> &[String] {
        &self.words[1..]
    }

    /// Token ids for a prompt. Empty prompts (or prompts with no word
    /// characters) are an argument error; unknown words map to `<unk>`.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        if text.is_empty() {
            return Err(Error::argument("empty prompt".to_string()));
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::argument(format!("prompt {text:?} has no word tokens")));
        }
        Ok(tokens.into_iter().map(|t| self.index.get(&t).copied().unwrap_or(UNK)).collect())
    }
}

/// Default text encoder: mean of word embeddings followed by a linear map.
pub struct EmbedMeanEncoder;

impl TextEncoderArch for EmbedMeanEncoder {
    fn name(&self) -> &'static str {
        "embed-mean"
    }

    fn init(&self, cfg: &EncoderConfig, vocab_size: usize, rng: &mut ChaCha8Rng) -> Vec<NamedTensor> {
        let e = cfg.text_embed_dim;
        let table_limit = (3.0 / e as f64).sqrt();
        let proj_limit = (6.0 / (e + cfg.embed_dim) as f64).sqrt();
        vec![
            uniform_tensor("embed", &[vocab_size, e], table_limit, rng),
            uniform_tensor("proj_w", &[e, cfg.embed_dim], proj_limit, rng),
            zeros_tensor("proj_b", &[cfg.embed_dim]),
        ]
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], tokens: &[Vec<usize>]) -> Var {
        let pooled = tape.embedding_mean(params[0], tokens);
        let proj = tape.matmul(pooled, params[1]);
        tape.add_row_bias(proj, params[2])
    }
}

/// Mean of word embeddings through a one-hidden-layer MLP.
pub struct EmbedMlpEncoder;

impl TextEncoderArch for EmbedMlpEncoder {
    fn name(&self) -> &'static str {
        "embed-mlp"
    }

    fn init(&self, cfg: &EncoderConfig, vocab_size: usize, rng: &mut ChaCha8Rng) -> Vec<NamedTensor> {
        let e = cfg.text_embed_dim;
        let h = cfg.text_hidden;
        let table_limit = (3.0 / e as f64).sqrt();
        vec![
            uniform_tensor("embed", &[vocab_size, e], table_limit, rng),
            uniform_tensor("fc1_w", &[e, h], (6.0 / e as f64).sqrt(), rng),
            zeros_tensor("fc1_b", &[h]),
            uniform_tensor("fc2_w", &[h, cfg.embed_dim], (6.0 / (h + cfg.embed_dim) as f64).sqrt(), rng),
            zeros_tensor("fc2_b", &[cfg.embed_dim]),
        ]
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], tokens: &[Vec<usize>]) -> Var {
        let pooled = tape.embedding_mean(params[0], tokens);
        let fc1 = tape.matmul(pooled, params[1]);
        let fc1 = tape.add_row_bias(fc1, params[2]);
        let act = tape.relu(fc1);
        let fc2 = tape.matmul(act, params[3]);
        tape.add_row_bias(fc2, params[4])
    }
}

//! The assembled model: per-group image encoders, a (usually shared) text
//! encoder, and the classifier head over concatenated group features.

use crate::bands::BandGroupSpec;
use crate::encoders::{EncoderConfig, EncoderRegistry, NamedTensor, Vocab};
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use ndarray::{Array2, Array4, ArrayD, Ix2};
use rand_chacha::ChaCha8Rng;

/// Everything needed to lay out parameters and run forward passes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Optional hidden width of the classifier head (None = linear).
    pub classifier_hidden: Option<usize>,
    pub class_count: usize,
    pub groups: Vec<BandGroupSpec>,
}

impl ModelConfig {
    pub fn new(groups: Vec<BandGroupSpec>) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig::default(),
            classifier_hidden: None,
            class_count: crate::data::CLASS_COUNT,
            groups,
        }
    }

    /// Width of the fused feature vector: n groups times d.
    pub fn fused_dim(&self) -> usize {
        self.groups.len() * self.encoder.embed_dim
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        crate::bands::validate_partition(&self.groups)?;
        if self.class_count < 2 {
            return Err(Error::argument("class_count must be at least 2"));
        }
        if self.encoder.share_image_encoders {
            let first = self.groups[0].width();
            if self.groups.iter().any(|g| g.width() != first) {
                return Err(Error::argument(
                    "share_image_encoders requires every group to have the same channel count",
                ));
            }
        }
        Ok(())
    }
}

/// Tape variables for every parameter tensor, in the model's canonical order.
pub struct ParamBinding {
    pub image: Vec<Vec<Var>>,
    pub text: Vec<Vec<Var>>,
    pub classifier: Vec<Var>,
    pub flat: Vec<Var>,
}

/// Model parameters plus the vocabulary they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct BpLczModel {
    pub cfg: ModelConfig,
    pub vocab: Vocab,
    /// One parameter set per group, or a single shared set.
    pub image_params: Vec<Vec<NamedTensor>>,
    /// A single shared set, or one per group when unshared.
    pub text_params: Vec<Vec<NamedTensor>>,
    pub classifier_params: Vec<NamedTensor>,
}

impl BpLczModel {
    /// Initializes all parameters with a deterministic draw order:
    /// image encoders in group order, then text encoder(s), then classifier.
    /// The classifier head is zero-initialized (uniform logits at step zero).
    pub fn init(
        cfg: ModelConfig,
        vocab: Vocab,
        registry: &EncoderRegistry,
        rng: &mut ChaCha8Rng,
    ) -> Result<BpLczModel> {
        cfg.validate()?;
        let image_arch = registry.image(&cfg.encoder.image_arch)?;
        let text_arch = registry.text(&cfg.encoder.text_arch)?;

        let image_sets = if cfg.encoder.share_image_encoders { 1 } else { cfg.groups.len() };
        let mut image_params = Vec::with_capacity(image_sets);
        for g in 0..image_sets {
            image_params.push(image_arch.init(&cfg.encoder, cfg.groups[g].width(), rng));
        }

        let text_sets = if cfg.encoder.share_text_encoder { 1 } else { cfg.groups.len() };
        let mut text_params = Vec::with_capacity(text_sets);
        for _ in 0..text_sets {
            text_params.push(text_arch.init(&cfg.encoder, vocab.len(), rng));
        }

        let classifier_params = init_classifier(&cfg, rng);
        Ok(BpLczModel { cfg, vocab, image_params, text_params, classifier_params })
    }

    fn image_set(&self, group: usize) -> &[NamedTensor] {
        let idx = if self.cfg.encoder.share_image_encoders { 0 } else { group };
        &self.image_params[idx]
    }

    fn text_set(&self, group: usize) -> &[NamedTensor] {
        let idx = if self.cfg.encoder.share_text_encoder { 0 } else { group };
        &self.text_params[idx]
    }

    /// All parameter tensors in canonical (checkpoint/optimizer) order.
    pub fn flat_params(&self) -> Vec<&ArrayD<f64>> {
        let mut out = Vec::new();
        for set in &self.image_params {
            out.extend(set.iter().map(|t| &t.value));
        }
        for set in &self.text_params {
            out.extend(set.iter().map(|t| &t.value));
        }
        out.extend(self.classifier_params.iter().map(|t| &t.value));
        out
    }

    pub fn flat_params_mut(&mut self) -> Vec<&mut ArrayD<f64>> {
        let mut out = Vec::new();
        for set in &mut self.image_params {
            out.extend(set.iter_mut().map(|t| &mut t.value));
        }
        for set in &mut self.text_params {
            out.extend(set.iter_mut().map(|t| &mut t.value));
        }
        out.extend(self.classifier_params.iter_mut().map(|t| &mut t.value));
        out
    }

    /// Qualified tensor names matching [`Self::flat_params`] order.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (g, set) in self.image_params.iter().enumerate() {
            out.extend(set.iter().map(|t| format!("image{g}/{}", t.name)));
        }
        for (g, set) in self.text_params.iter().enumerate() {
            out.extend(set.iter().map(|t| format!("text{g}/{}", t.name)));
        }
        out.extend(self.classifier_params.iter().map(|t| format!("classifier/{}", t.name)));
        out
    }

    /// Total number of scalar parameters.
    pub fn scalar_param_count(&self) -> usize {
        self.flat_params().iter().map(|t| t.len()).sum()
    }

    /// Registers every parameter tensor as a tape leaf.
    pub fn bind_params(&self, tape: &mut Tape) -> ParamBinding {
        let mut flat = Vec::new();
        let image: Vec<Vec<Var>> = self
            .image_params
            .iter()
            .map(|set| {
                set.iter()
                    .map(|t| {
                        let v = tape.leaf(t.value.clone());
                        flat.push(v);
                        v
                    })
                    .collect()
            })
            .collect();
        let text: Vec<Vec<Var>> = self
            .text_params
            .iter()
            .map(|set| {
                set.iter()
                    .map(|t| {
                        let v = tape.leaf(t.value.clone());
                        flat.push(v);
                        v
                    })
                    .collect()
            })
            .collect();
        let classifier: Vec<Var> = self
            .classifier_params
            .iter()
            .map(|t| {
                let v = tape.leaf(t.value.clone());
                flat.push(v);
                v
            })
            .collect();
        ParamBinding { image, text, classifier, flat }
    }

    /// Forward pass of one group's image encoder on an existing tape.
    /// `input` must be a `[B, C_g, 32, 32]` leaf.
    pub fn image_forward(
        &self,
        registry: &EncoderRegistry,
        tape: &mut Tape,
        binding: &ParamBinding,
        group: usize,
        input: Var,
    ) -> Result<Var> {
        let arch = registry.image(&self.cfg.encoder.image_arch)?;
        let idx = if self.cfg.encoder.share_image_encoders { 0 } else { group };
        Ok(arch.forward(tape, &binding.image[idx], input))
    }

    /// Forward pass of the text encoder used for `group` on an existing tape.
    pub fn text_forward(
        &self,
        registry: &EncoderRegistry,
        tape: &mut Tape,
        binding: &ParamBinding,
        group: usize,
        tokens: &[Vec<usize>],
    ) -> Result<Var> {
        let arch = registry.text(&self.cfg.encoder.text_arch)?;
        let idx = if self.cfg.encoder.share_text_encoder { 0 } else { group };
        Ok(arch.forward(tape, &binding.text[idx], tokens))
    }

    /// Classifier head on an existing tape.
    pub fn classifier_forward(&self, tape: &mut Tape, binding: &ParamBinding, fused: Var) -> Var {
        match self.cfg.classifier_hidden {
            None => {
                let z = tape.matmul(fused, binding.classifier[0]);
                tape.add_row_bias(z, binding.classifier[1])
            }
            Some(_) => {
                let z1 = tape.matmul(fused, binding.classifier[0]);
                let z1 = tape.add_row_bias(z1, binding.classifier[1]);
                let a1 = tape.relu(z1);
                let z2 = tape.matmul(a1, binding.classifier[2]);
                tape.add_row_bias(z2, binding.classifier[3])
            }
        }
    }

    /// Encodes a `[B, 32, 32, C_g]` group batch into raw `[B, d]` features.
    pub fn encode_images(
        &self,
        registry: &EncoderRegistry,
        batch_hwc: &Array4<f64>,
        group: usize,
    ) -> Result<Array2<f64>> {
        if group >= self.cfg.groups.len() {
            return Err(Error::argument(format!(
                "group index {group} outside 0..{}",
                self.cfg.groups.len()
            )));
        }
        let spec = &self.cfg.groups[group];
        let (_, h, w, c) = batch_hwc.dim();
        if c != spec.width() || h != crate::data::PATCH || w != crate::data::PATCH {
            return Err(Error::argument(format!(
                "group {} expects [B, 32, 32, {}], got {:?}",
                spec.name,
                spec.width(),
                batch_hwc.dim()
            )));
        }
        let arch = registry.image(&self.cfg.encoder.image_arch)?;
        let mut tape = Tape::new();
        let params: Vec<Var> =
            self.image_set(group).iter().map(|t| tape.leaf(t.value.clone())).collect();
        let input = tape.leaf(hwc_to_nchw(batch_hwc).into_dyn());
        let out = arch.forward(&mut tape, &params, input);
        Ok(tape.value(out).view().into_dimensionality::<Ix2>().unwrap().to_owned())
    }

    /// Encodes prompts with the shared text encoder (group 0's when unshared).
    pub fn encode_texts(
        &self,
        registry: &EncoderRegistry,
        prompts: &[String],
    ) -> Result<Array2<f64>> {
        self.encode_texts_for_group(registry, prompts, 0)
    }

    pub fn encode_texts_for_group(
        &self,
        registry: &EncoderRegistry,
        prompts: &[String],
        group: usize,
    ) -> Result<Array2<f64>> {
        if prompts.is_empty() {
            return Err(Error::argument("prompt batch is empty"));
        }
        let tokens: Vec<Vec<usize>> =
            prompts.iter().map(|p| self.vocab.encode(p)).collect::<Result<_>>()?;
        let arch = registry.text(&self.cfg.encoder.text_arch)?;
        let mut tape = Tape::new();
        let params: Vec<Var> =
            self.text_set(group).iter().map(|t| tape.leaf(t.value.clone())).collect();
        let out = arch.forward(&mut tape, &params, &tokens);
        Ok(tape.value(out).view().into_dimensionality::<Ix2>().unwrap().to_owned())
    }

    /// Classifier logits for already-fused `[B, n*d]` features.
    pub fn classify(&self, fused: &Array2<f64>) -> Result<Array2<f64>> {
        if fused.ncols() != self.cfg.fused_dim() {
            return Err(Error::argument(format!(
                "fused width {} does not match n*d = {}",
                fused.ncols(),
                self.cfg.fused_dim()
            )));
        }
        let as2 = |t: &NamedTensor| {
            t.value.view().into_dimensionality::<Ix2>().unwrap().to_owned()
        };
        let as1 = |t: &NamedTensor| {
            t.value.view().into_dimensionality::<ndarray::Ix1>().unwrap().to_owned()
        };
        match self.cfg.classifier_hidden {
            None => {
                let w = as2(&self.classifier_params[0]);
                let b = as1(&self.classifier_params[1]);
                Ok(fused.dot(&w) + &b)
            }
            Some(_) => {
                let w1 = as2(&self.classifier_params[0]);
                let b1 = as1(&self.classifier_params[1]);
                let w2 = as2(&self.classifier_params[2]);
                let b2 = as1(&self.classifier_params[3]);
                let h = (fused.dot(&w1) + &b1).mapv(|v| v.max(0.0));
                Ok(h.dot(&w2) + &b2)
            }
        }
    }
}

fn init_classifier(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Vec<NamedTensor> {
    use crate::encoders::NamedTensor as T;
    let input = cfg.fused_dim();
    match cfg.classifier_hidden {
        None => vec![
            T::new("head_w", ArrayD::zeros(ndarray::IxDyn(&[input, cfg.class_count]))),
            T::new("head_b", ArrayD::zeros(ndarray::IxDyn(&[cfg.class_count]))),
        ],
        Some(h) => {
            // The hidden layer needs symmetry breaking; the output layer can
            // still start at zero.
            let limit = (6.0 / (input + h) as f64).sqrt();
            vec![
                crate::encoders::uniform_tensor("fc1_w", &[input, h], limit, rng),
                T::new("fc1_b", ArrayD::zeros(ndarray::IxDyn(&[h]))),
                T::new("head_w", ArrayD::zeros(ndarray::IxDyn(&[h, cfg.class_count]))),
                T::new("head_b", ArrayD::zeros(ndarray::IxDyn(&[cfg.class_count]))),
            ]
        }
    }
}

/// `[B, H, W, C]` (sample layout) to `[B, C, H, W]` (conv layout).
pub fn hwc_to_nchw(batch: &Array4<f64>) -> Array4<f64> {
    let (b, h, w, c) = batch.dim();
    let mut out = Array4::zeros((b, c, h, w));
    for bi in 0..b {
        for y in 0..h {
            for x in 0..w {
                for ci in 0..c {
                    out[[bi, ci, y, x]] = batch[[bi, y, x, ci]];
                }
            }
        }
    }
    out
}

/// Stacks per-sample `[32, 32, C]` group tensors into a `[B, 32, 32, C]` batch.
pub fn stack_group_hwc(tensors: &[&ndarray::Array3<f64>]) -> Array4<f64> {
    let (h, w, c) = tensors[0].dim();
    let mut out = Array4::zeros((tensors.len(), h, w, c));
    for (i, t) in tensors.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), i).assign(t);
    }
    out
}

//! Deterministic training loop: band grouping, per-group prompting, similarity
//! fusion, supervised contrastive loss and joint classification, optimized
//! with SGD (momentum + weight decay).

use crate::bands::split_bands;
use crate::classifier::predict_labels;
use crate::contrastive::supervision_by_name;
use crate::data::{DatasetSplit, NormStats, Sample};
use crate::encoders::{EncoderRegistry, Vocab};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::{BpLczModel, ModelConfig};
use crate::prompts::PromptCatalog;
use crate::tape::Tape;
use ndarray::{Array2, Array3, Array4, ArrayD, Ix2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Training hyperparameters. Defaults follow the published recipe:
/// 200 epochs, learning rate 1e-4, batch 32, momentum 0.9, weight decay
/// 0.002, alpha 0.25, beta 2, seed 47.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            epochs: 200,
            learning_rate: 1e-4,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 0.002,
            alpha: 0.25,
            beta: 2.0,
            seed: 47,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::argument(format!("learning_rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::argument("batch_size must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::argument(format!("momentum {} must be in [0, 1)", self.momentum)));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::argument(format!("weight_decay {} must be >= 0", self.weight_decay)));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::argument("alpha must be finite and beta >= 0"));
        }
        Ok(())
    }
}

/// What to train: model layout, prompt catalog and the two ablation axes.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub model_cfg: ModelConfig,
    pub catalog: PromptCatalog,
    /// Supervision target name: "msm" (label-aware) or "identity".
    pub supervision: String,
    /// When false the contrastive branch is skipped entirely (beta acts as 0).
    pub contrastive: bool,
}

impl TrainSetup {
    pub fn new(model_cfg: ModelConfig, catalog: PromptCatalog) -> TrainSetup {
        TrainSetup { model_cfg, catalog, supervision: "msm".to_string(), contrastive: true }
    }
}

/// One row of the per-epoch log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub l_cls: f64,
    pub l_con: f64,
    pub loss: f64,
    pub train_oa: f64,
}

/// Renders the log as `epoch,l_cls,l_con,l,train_oa` lines.
pub fn log_to_text(log: &[EpochStats]) -> String {
    let mut out = String::from("epoch,l_cls,l_con,l,train_oa\n");
    for row in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.l_cls, row.l_con, row.loss, row.train_oa
        ));
    }
    out
}

pub struct TrainOutcome {
    pub model: BpLczModel,
    pub log: Vec<EpochStats>,
}

/// SGD with momentum and decoupled-from-nothing classic weight decay:
/// `g <- g + wd * w; v <- mu * v + g; w <- w - lr * v`.
pub struct SgdMomentum {
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<ArrayD<f64>>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64, params: &[&ArrayD<f64>]) -> SgdMomentum {
        SgdMomentum {
            lr,
            momentum,
            weight_decay,
            velocity: params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect(),
        }
    }

    /// Applies one update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut [&mut ArrayD<f64>], grads: &[Option<&ArrayD<f64>>]) {
        let (mu, wd, lr) = (self.momentum, self.weight_decay, self.lr);
        for (i, param) in params.iter_mut().enumerate() {
            let Some(grad) = grads[i] else { continue };
            let v = &mut self.velocity[i];
            ndarray::Zip::from(&mut **v).and(grad).and(&**param).for_each(|vi, &gi, &wi| {
                *vi = *vi * mu + gi + wd * wi;
            });
            ndarray::Zip::from(&mut **param).and(&**v).for_each(|wi, &vi| *wi -= lr * vi);
        }
    }
}

/// Per-sample, per-group tensors in conv layout, precomputed once.
fn grouped_nchw(samples: &[Sample], cfg: &ModelConfig, norm: &NormStats) -> Result<Vec<Vec<Array3<f64>>>> {
    samples
        .iter()
        .map(|s| {
            let standardized = norm.apply(s);
            let grouped = split_bands(&standardized, &cfg.groups)?;
            Ok(grouped
                .groups
                .iter()
                .map(|hwc| {
                    let (h, w, c) = hwc.dim();
                    let mut chw = Array3::zeros((c, h, w));
                    for y in 0..h {
                        for x in 0..w {
                            for ci in 0..c {
                                chw[[ci, y, x]] = hwc[[y, x, ci]];
                            }
                        }
                    }
                    chw
                })
                .collect())
        })
        .collect()
}

fn batch_input(grouped: &[Vec<Array3<f64>>], indices: &[usize], group: usize) -> Array4<f64> {
    let (c, h, w) = grouped[indices[0]][group].dim();
    let mut out = Array4::zeros((indices.len(), c, h, w));
    for (row, &i) in indices.iter().enumerate() {
        out.index_axis_mut(ndarray::Axis(0), row).assign(&grouped[i][group]);
    }
    out
}

/// Runs the full training recipe over the split's training half.
///
/// Per batch: split bands, build the batch's prompts from ground-truth
/// labels, encode images and texts per group, build both similarity
/// directions, fuse with alpha, build the supervision target from batch
/// labels, take the contrastive loss, concatenate raw image features,
/// classify, and minimize `L_cls + beta * L_con`.
pub fn train(
    split: &DatasetSplit,
    cfg: &TrainConfig,
    setup: &TrainSetup,
    registry: &EncoderRegistry,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    setup.model_cfg.validate()?;
    let supervision = supervision_by_name(&setup.supervision)?;
    if split.train.is_empty() {
        return Err(Error::data("training split is empty"));
    }

    let vocab = Vocab::from_catalog(&setup.catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = BpLczModel::init(setup.model_cfg.clone(), vocab, registry, &mut rng)?;

    let norm = &split.provenance.norm;
    let grouped = grouped_nchw(&split.train, &setup.model_cfg, norm)?;
    let labels: Vec<u8> = split.train.iter().map(|s| s.label).collect();

    // Ground-truth prompts per (label, group), tokenized once.
    let mut token_cache: BTreeMap<(u8, usize), Vec<usize>> = BTreeMap::new();
    if setup.contrastive {
        let mut present: Vec<u8> = labels.clone();
        present.sort_unstable();
        present.dedup();
        for &label in &present {
            for (g, spec) in setup.model_cfg.groups.iter().enumerate() {
                let prompt = setup.catalog.get(label, &spec.name).ok_or_else(|| {
                    Error::argument(format!(
                        "catalog has no prompt for class {label}, group {}",
                        spec.name
                    ))
                })?;
                token_cache.insert((label, g), model.vocab.encode(prompt)?);
            }
        }
    }

    let flat = model.flat_params();
    let mut optimizer = SgdMomentum::new(cfg.learning_rate, cfg.momentum, cfg.weight_decay, &flat);
    drop(flat);

    let n_groups = setup.model_cfg.groups.len();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum_cls = 0.0;
        let mut sum_con = 0.0;
        let mut sum_total = 0.0;
        let mut correct = 0usize;

        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_labels: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let label_ids: Vec<usize> = batch_labels.iter().map(|&l| usize::from(l)).collect();

            let mut tape = Tape::new();
            let binding = model.bind_params(&mut tape);

            let mut image_feats = Vec::with_capacity(n_groups);
            for g in 0..n_groups {
                let input = tape.leaf(batch_input(&grouped, chunk, g).into_dyn());
                image_feats.push(model.image_forward(registry, &mut tape, &binding, g, input)?);
            }

            let (l_con_value, l_con_var) = if setup.contrastive {
                let target = supervision.target(&batch_labels);
                let mut s_list = Vec::with_capacity(n_groups);
                let mut s_hat_list = Vec::with_capacity(n_groups);
                for (g, feats) in image_feats.iter().enumerate() {
                    let tokens: Vec<Vec<usize>> = batch_labels
                        .iter()
                        .map(|&l| token_cache[&(l, g)].clone())
                        .collect();
                    let text = model.text_forward(registry, &mut tape, &binding, g, &tokens)?;
                    let image_n = tape.l2_normalize_rows(*feats)?;
                    let text_n = tape.l2_normalize_rows(text)?;
                    let text_n_t = tape.transpose(text_n);
                    let image_n_t = tape.transpose(image_n);
                    s_list.push(tape.matmul(image_n, text_n_t));
                    s_hat_list.push(tape.matmul(text_n, image_n_t));
                }
                let s_sum = tape.sum_list(&s_list);
                let fused_s = tape.scale(s_sum, cfg.alpha);
                let s_hat_sum = tape.sum_list(&s_hat_list);
                let fused_s_hat = tape.scale(s_hat_sum, cfg.alpha);
                let l_i2t = tape.bce_with_logits_mean(fused_s, &target.w);
                let l_t2i = tape.bce_with_logits_mean(fused_s_hat, &target.w);
                let sum = tape.sum_list(&[l_i2t, l_t2i]);
                let l_con = tape.scale(sum, 0.5);
                (tape.scalar(l_con), Some(l_con))
            } else {
                (0.0, None)
            };

            let fused = tape.concat_cols(&image_feats);
            let logits = model.classifier_forward(&mut tape, &binding, fused);
            let l_cls = tape.softmax_ce_mean(logits, &label_ids);
            let loss = match l_con_var {
                Some(l_con) => tape.add_scaled(l_cls, l_con, cfg.beta),
                None => l_cls,
            };

            let loss_value = tape.scalar(loss);
            if !loss_value.is_finite() {
                return Err(Error::Divergence { epoch, step: step + 1 });
            }

            let logits_value =
                tape.value(logits).view().into_dimensionality::<Ix2>().unwrap().to_owned();
            let preds = predict_labels(&logits_value);
            correct += preds.iter().zip(&batch_labels).filter(|(p, l)| p == l).count();

            let b = chunk.len() as f64;
            sum_cls += tape.scalar(l_cls) * b;
            sum_con += l_con_value * b;
            sum_total += loss_value * b;

            let grads = tape.backward(loss);
            let grad_refs: Vec<Option<&ArrayD<f64>>> =
                binding.flat.iter().map(|v| grads.get(*v)).collect();
            let mut params = model.flat_params_mut();
            optimizer.step(&mut params, &grad_refs);
        }

        let n = split.train.len() as f64;
        log.push(EpochStats {
            epoch,
            l_cls: sum_cls / n,
            l_con: sum_con / n,
            loss: sum_total / n,
            train_oa: correct as f64 / n,
        });
    }

    Ok(TrainOutcome { model, log })
}

/// Concatenated raw per-group image features `[N, n*d]` for a sample set.
pub fn fused_features(
    model: &BpLczModel,
    registry: &EncoderRegistry,
    samples: &[Sample],
    norm: &NormStats,
) -> Result<Array2<f64>> {
    let grouped = grouped_nchw(samples, &model.cfg, norm)?;
    let n_groups = model.cfg.groups.len();
    let mut out = Array2::zeros((samples.len(), model.cfg.fused_dim()));
    let indices: Vec<usize> = (0..samples.len()).collect();
    for chunk in indices.chunks(64) {
        let mut tape = Tape::new();
        let binding = model.bind_params(&mut tape);
        let mut feats = Vec::with_capacity(n_groups);
        for g in 0..n_groups {
            let input = tape.leaf(batch_input(&grouped, chunk, g).into_dyn());
            feats.push(model.image_forward(registry, &mut tape, &binding, g, input)?);
        }
        let fused = tape.concat_cols(&feats);
        let fused_value =
            tape.value(fused).view().into_dimensionality::<Ix2>().unwrap().to_owned();
        for (row, &i) in chunk.iter().enumerate() {
            out.row_mut(i).assign(&fused_value.row(row));
        }
    }
    Ok(out)
}

/// Deterministic class predictions for a set of samples.
pub fn predict(
    model: &BpLczModel,
    registry: &EncoderRegistry,
    samples: &[Sample],
    norm: &NormStats,
) -> Result<Vec<u8>> {
    let fused = fused_features(model, registry, samples, norm)?;
    let logits = model.classify(&fused)?;
    Ok(predict_labels(&logits))
}

/// Evaluates a model over labelled samples. Prompts play no role here: the
/// classifier consumes only the fused image features.
pub fn evaluate(
    model: &BpLczModel,
    registry: &EncoderRegistry,
    samples: &[Sample],
    norm: &NormStats,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::data("evaluation set is empty"));
    }
    let preds = predict(model, registry, samples, norm)?;
    let truth: Vec<u8> = samples.iter().map(|s| s.label).collect();
    EvalReport::from_predictions(&truth, &preds, model.cfg.class_count)
}

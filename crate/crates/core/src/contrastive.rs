//! Supervised contrastive objective: the batch-level 0/1 target matrix that
//! marks all same-label pairs as positives, and the symmetric sigmoid
//! cross-entropy loss against the fused similarity matrices.

use crate::error::{Error, Result};
use ndarray::Array2;

/// The B x B binary supervision matrix built from batch labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedMatrix {
    pub w: Array2<f64>,
    pub labels: Vec<u8>,
}

/// `W[j,k] = 1` iff `labels[j] == labels[k]`, so W is symmetric with a unit
/// diagonal, and distinct labels degrade it to the identity.
pub fn build_msm(labels: &[u8]) -> SupervisedMatrix {
    let b = labels.len();
    let mut w = Array2::zeros((b, b));
    for j in 0..b {
        for k in 0..b {
            if labels[j] == labels[k] {
                w[[j, k]] = 1.0;
            }
        }
    }
    SupervisedMatrix { w, labels: labels.to_vec() }
}

/// The one-to-one target: identity matrix, diagonal pairs only.
pub fn identity_target(labels: &[u8]) -> SupervisedMatrix {
    SupervisedMatrix { w: Array2::eye(labels.len()), labels: labels.to_vec() }
}

/// Mean binary cross-entropy between `sigmoid(logits)` and 0/1 targets,
/// reduced over all B^2 entries (numerically stable form).
pub fn bce_sigmoid_mean(logits: &Array2<f64>, targets: &Array2<f64>) -> f64 {
    debug_assert_eq!(logits.dim(), targets.dim());
    let mut total = 0.0;
    for (s, t) in logits.iter().zip(targets.iter()) {
        total += s.max(0.0) - s * t + (-s.abs()).exp().ln_1p();
    }
    total / logits.len() as f64
}

/// Symmetric contrastive loss: the average of the image-to-text and
/// text-to-image BCE terms against the supervision matrix.
pub fn contrastive_loss(
    fused_s: &Array2<f64>,
    fused_s_hat: &Array2<f64>,
    w: &SupervisedMatrix,
) -> Result<f64> {
    if fused_s.dim() != w.w.dim() || fused_s_hat.dim() != w.w.dim() {
        return Err(Error::argument(format!(
            "shape mismatch: S {:?}, S_hat {:?}, W {:?}",
            fused_s.dim(),
            fused_s_hat.dim(),
            w.w.dim()
        )));
    }
    let l_i2t = bce_sigmoid_mean(fused_s, &w.w);
    let l_t2i = bce_sigmoid_mean(fused_s_hat, &w.w);
    Ok((l_i2t + l_t2i) / 2.0)
}

/// Supervision target variant, selectable by name (ablation axis).
pub trait SupervisionStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn target(&self, labels: &[u8]) -> SupervisedMatrix;
}

/// Label-aware target: all same-class pairs are positives.
pub struct MsmSupervision;

impl SupervisionStrategy for MsmSupervision {
    fn name(&self) -> &'static str {
        "msm"
    }

    fn target(&self, labels: &[u8]) -> SupervisedMatrix {
        build_msm(labels)
    }
}

/// Diagonal-only target: each sample pairs only with its own prompt.
pub struct IdentitySupervision;

impl SupervisionStrategy for IdentitySupervision {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn target(&self, labels: &[u8]) -> SupervisedMatrix {
        identity_target(labels)
    }
}

pub fn supervision_names() -> [&'static str; 2] {
    ["msm", "identity"]
}

pub fn supervision_by_name(name: &str) -> Result<Box<dyn SupervisionStrategy>> {
    match name {
        "msm" => Ok(Box::new(MsmSupervision)),
        "identity" => Ok(Box::new(IdentitySupervision)),
        other => Err(Error::argument(format!(
            "unknown supervision strategy {other:?}; available: msm, identity"
        ))),
    }
}

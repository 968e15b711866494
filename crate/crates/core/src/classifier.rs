//! Feature fusion by concatenation and the classification loss.

use crate::error::{Error, Result};
use ndarray::Array2;

/// Classifier head configuration. The default is a single linear layer over
/// the concatenated group features.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassifierConfig {
    pub input_dim: usize,
    pub hidden: Option<usize>,
    pub classes: usize,
}

/// Penalty weight balancing classification and contrastive terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights { beta: 2.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::argument(format!("beta {} must be >= 0", self.beta)));
        }
        Ok(())
    }
}

/// Row-wise concatenation of per-group `[B,d]` features, in group order.
pub fn fuse_features(per_group: &[Array2<f64>]) -> Result<Array2<f64>> {
    let first = per_group
        .first()
        .ok_or_else(|| Error::argument("fuse_features needs at least one group"))?;
    let rows = first.nrows();
    let mut total = 0;
    for (i, m) in per_group.iter().enumerate() {
        if m.nrows() != rows {
            return Err(Error::argument(format!(
                "group {i} has {} rows, expected {rows}",
                m.nrows()
            )));
        }
        total += m.ncols();
    }
    let mut fused = Array2::zeros((rows, total));
    let mut offset = 0;
    for m in per_group {
        fused.slice_mut(ndarray::s![.., offset..offset + m.ncols()]).assign(m);
        offset += m.ncols();
    }
    Ok(fused)
}

/// Mean softmax cross-entropy of logits against integer labels.
pub fn cross_entropy_mean(logits: &Array2<f64>, labels: &[u8]) -> Result<f64> {
    if logits.nrows() != labels.len() {
        return Err(Error::argument(format!(
            "{} logit rows vs {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let k = logits.ncols();
    let mut total = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let label = usize::from(labels[i]);
        if label >= k {
            return Err(Error::argument(format!("label {label} outside 0..{k}")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    Ok(total / labels.len() as f64)
}

/// Total training objective: `L_cls + beta * L_con`.
pub fn total_loss(logits: &Array2<f64>, labels: &[u8], l_con: f64, beta: f64) -> Result<f64> {
    LossWeights { beta }.validate()?;
    if !(l_con >= 0.0) {
        return Err(Error::argument(format!("l_con {l_con} must be >= 0")));
    }
    Ok(cross_entropy_mean(logits, labels)? + beta * l_con)
}

/// Argmax predictions, ties broken toward the lowest class index.
pub fn predict_labels(logits: &Array2<f64>) -> Vec<u8> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u8
        })
        .collect()
}

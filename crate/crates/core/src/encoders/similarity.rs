//! Cosine similarity matrices and their weighted fusion.

use crate::error::{Error, Result};
use ndarray::Array2;

/// Returns a copy of `feats` with every row scaled to unit L2 norm.
pub fn normalize_rows(feats: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = feats.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < 1e-12 {
            return Err(Error::argument(format!(
                "row {i} has zero norm; normalization undefined"
            )));
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

/// Cosine similarity matrices for one band group.
///
/// `S[j,k]` is the cosine of image row j with text row k; the text-image
/// matrix is computed independently from the text side (and equals the
/// transpose of `S` because both use the same normalized features).
pub fn similarity_matrices(
    image_feats: &Array2<f64>,
    text_feats: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if image_feats.dim() != text_feats.dim() {
        return Err(Error::argument(format!(
            "feature shape mismatch: image {:?} vs text {:?}",
            image_feats.dim(),
            text_feats.dim()
        )));
    }
    let image_n = normalize_rows(image_feats)?;
    let text_n = normalize_rows(text_feats)?;
    let s = image_n.dot(&text_n.t());
    let s_hat = text_n.dot(&image_n.t());
    Ok((s, s_hat))
}

/// Weighted fusion: `alpha` times the elementwise sum of the group matrices.
pub fn fuse_similarities(per_group: &[Array2<f64>], alpha: f64) -> Result<Array2<f64>> {
    let first = per_group
        .first()
        .ok_or_else(|| Error::argument("fuse_similarities needs at least one matrix"))?;
    let mut fused = Array2::zeros(first.dim());
    for (i, m) in per_group.iter().enumerate() {
        if m.dim() != first.dim() {
            return Err(Error::argument(format!(
                "matrix {i} has shape {:?}, expected {:?}",
                m.dim(),
                first.dim()
            )));
        }
        fused += m;
    }
    fused.mapv_inplace(|v| alpha * v);
    Ok(fused)
}

/// Per-group and fused similarity matrices for one batch.
#[derive(Debug, Clone)]
pub struct SimilarityBundle {
    pub per_group_s: Vec<Array2<f64>>,
    pub per_group_s_hat: Vec<Array2<f64>>,
    pub fused_s: Array2<f64>,
    pub fused_s_hat: Array2<f64>,
    pub alpha: f64,
}

impl SimilarityBundle {
    /// Builds all matrices from raw (pre-normalization) per-group features.
    pub fn compute(
        image_feats: &[Array2<f64>],
        text_feats: &[Array2<f64>],
        alpha: f64,
    ) -> Result<SimilarityBundle> {
        if image_feats.len() != text_feats.len() {
            return Err(Error::argument(format!(
                "group count mismatch: {} image vs {} text",
                image_feats.len(),
                text_feats.len()
            )));
        }
        let mut per_group_s = Vec::with_capacity(image_feats.len());
        let mut per_group_s_hat = Vec::with_capacity(image_feats.len());
        for (i, t) in image_feats.iter().zip(text_feats) {
            let (s, s_hat) = similarity_matrices(i, t)?;
            per_group_s.push(s);
            per_group_s_hat.push(s_hat);
        }
        let fused_s = fuse_similarities(&per_group_s, alpha)?;
        let fused_s_hat = fuse_similarities(&per_group_s_hat, alpha)?;
        Ok(SimilarityBundle { per_group_s, per_group_s_hat, fused_s, fused_s_hat, alpha })
    }

    pub fn group_count(&self) -> usize {
        self.per_group_s.len()
    }
}

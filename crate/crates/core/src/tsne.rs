//! Exact t-SNE for desk-scale feature sets (a few hundred to ~1k points),
//! seeded and fully deterministic.

use crate::error::{Error, Result};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Projection hyperparameters (standard defaults).
#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> TsneConfig {
        TsneConfig {
            perplexity: 30.0,
            iterations: 500,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 100,
            seed: 47,
        }
    }
}

/// Embeds `[N, D]` features into `[N, 2]`.
pub fn tsne_embed(features: &Array2<f64>, cfg: &TsneConfig) -> Result<Array2<f64>> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::argument(format!("t-SNE needs at least 2 points, got {n}")));
    }
    // Perplexity cannot exceed what the neighbourhood can support.
    let perplexity = cfg.perplexity.min(((n - 1) as f64 / 3.0).max(1.0));

    // Pairwise squared euclidean distances.
    let mut d2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = &features.row(i) - &features.row(j);
            let dist = diff.dot(&diff);
            d2[[i, j]] = dist;
            d2[[j, i]] = dist;
        }
    }

    // Conditional affinities with a per-point bandwidth found by bisecting
    // the entropy to log(perplexity).
    let target_entropy = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        for _ in 0..50 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = (-beta * d2[[i, j]]).exp();
                sum += w;
                weighted += w * d2[[i, j]];
            }
            if sum <= 0.0 {
                beta /= 2.0;
                continue;
            }
            // H = ln(sum) + beta * E[d^2]
            let entropy = sum.ln() + beta * weighted / sum;
            let diff = entropy - target_entropy;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_finite() { (beta + beta_max) / 2.0 } else { beta * 2.0 };
            } else {
                beta_max = beta;
                beta = if beta_min.is_finite() { (beta + beta_min) / 2.0 } else { beta / 2.0 };
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            if j != i {
                let w = (-beta * d2[[i, j]]).exp();
                p[[i, j]] = w;
                sum += w;
            }
        }
        if sum > 0.0 {
            for j in 0..n {
                p[[i, j]] /= sum;
            }
        }
    }

    // Symmetrize and floor.
    let mut p_sym = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            p_sym[[i, j]] = ((p[[i, j]] + p[[j, i]]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    // Seeded small gaussian init.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = StandardNormal;
    let mut y = Array2::from_shape_simple_fn((n, 2), || {
        let v: f64 = normal.sample(&mut rng);
        v * 1e-4
    });

    let mut velocity: Array2<f64> = Array2::zeros((n, 2));
    let mut gains: Array2<f64> = Array2::from_elem((n, 2), 1.0);

    for iter in 0..cfg.iterations {
        let exaggeration = if iter < cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        let momentum = if iter < cfg.exaggeration_iters { 0.5 } else { 0.8 };

        // Student-t affinities in the embedding.
        let mut q_unnorm = Array2::zeros((n, n));
        let mut q_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dy0 = y[[i, 0]] - y[[j, 0]];
                let dy1 = y[[i, 1]] - y[[j, 1]];
                let w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                q_unnorm[[i, j]] = w;
                q_unnorm[[j, i]] = w;
                q_sum += 2.0 * w;
            }
        }
        let q_sum = q_sum.max(1e-12);

        let mut grad: Array2<f64> = Array2::zeros((n, 2));
        for i in 0..n {
            for j in 0..n {
                if j == i {
                    continue;
                }
                let q_ij = (q_unnorm[[i, j]] / q_sum).max(1e-12);
                let mult = (exaggeration * p_sym[[i, j]] - q_ij) * q_unnorm[[i, j]];
                grad[[i, 0]] += 4.0 * mult * (y[[i, 0]] - y[[j, 0]]);
                grad[[i, 1]] += 4.0 * mult * (y[[i, 1]] - y[[j, 1]]);
            }
        }

        // Gains and momentum update (standard t-SNE schedule).
        for i in 0..n {
            for k in 0..2 {
                let same_sign = grad[[i, k]].signum() == velocity[[i, k]].signum();
                gains[[i, k]] = if same_sign {
                    (gains[[i, k]] * 0.8).max(0.01)
                } else {
                    gains[[i, k]] + 0.2
                };
                velocity[[i, k]] =
                    momentum * velocity[[i, k]] - cfg.learning_rate * gains[[i, k]] * grad[[i, k]];
                y[[i, k]] += velocity[[i, k]];
            }
        }

        // Re-center.
        for k in 0..2 {
            let mean = y.column(k).sum() / n as f64;
            y.column_mut(k).mapv_inplace(|v| v - mean);
        }
    }

    Ok(y)
}

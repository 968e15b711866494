//! Image encoder architectures.

use super::{uniform_tensor, zeros_tensor, EncoderConfig, ImageEncoderArch, NamedTensor};
use crate::tape::{Tape, Var};
use rand_chacha::ChaCha8Rng;

/// Default per-group encoder: three strided 3x3 conv blocks with relu,
/// global average pooling, then a linear projection to the embedding width.
pub struct Conv3Encoder;

impl ImageEncoderArch for Conv3Encoder {
    fn name(&self) -> &'static str {
        "conv3"
    }

    fn init(&self, cfg: &EncoderConfig, in_channels: usize, rng: &mut ChaCha8Rng) -> Vec<NamedTensor> {
        let mut params = Vec::new();
        let mut c_in = in_channels;
        for (i, &width) in cfg.image_widths.iter().enumerate() {
            let fan_in = (c_in * 9) as f64;
            // He-style limit for relu blocks.
            let limit = (6.0 / fan_in).sqrt();
            params.push(uniform_tensor(&format!("conv{}_w", i + 1), &[c_in * 9, width], limit, rng));
            params.push(zeros_tensor(&format!("conv{}_b", i + 1), &[width]));
            c_in = width;
        }
        // Fan-in-only limit keeps the projected features near unit scale,
        // which the zero-initialized classifier head needs to pick up speed.
        let limit = (6.0 / c_in as f64).sqrt();
        params.push(uniform_tensor("proj_w", &[c_in, cfg.embed_dim], limit, rng));
        params.push(zeros_tensor("proj_b", &[cfg.embed_dim]));
        params
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], input: Var) -> Var {
        let blocks = (params.len() - 2) / 2;
        let mut x = input;
        for i in 0..blocks {
            let conv = tape.conv3x3(x, params[2 * i], params[2 * i + 1], 2);
            x = tape.relu(conv);
        }
        let pooled = tape.global_avg_pool(x);
        let proj = tape.matmul(pooled, params[params.len() - 2]);
        tape.add_row_bias(proj, params[params.len() - 1])
    }
}

/// Cheapest variant: global average pool of the raw channels followed by a
/// linear map. Useful for fast ablation sweeps and tiny gradient probes.
pub struct GapLinearEncoder;

impl ImageEncoderArch for GapLinearEncoder {
    fn name(&self) -> &'static str {
        "gap-linear"
    }

    fn init(&self, cfg: &EncoderConfig, in_channels: usize, rng: &mut ChaCha8Rng) -> Vec<NamedTensor> {
        let limit = (6.0 / in_channels as f64).sqrt();
        vec![
            uniform_tensor("proj_w", &[in_channels, cfg.embed_dim], limit, rng),
            zeros_tensor("proj_b", &[cfg.embed_dim]),
        ]
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], input: Var) -> Var {
        let pooled = tape.global_avg_pool(input);
        let proj = tape.matmul(pooled, params[0]);
        tape.add_row_bias(proj, params[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::{Rng, SeedableRng};

    fn run(arch: &dyn ImageEncoderArch, cfg: &EncoderConfig, input: ArrayD<f64>, seed: u64) -> ndarray::Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = input.shape()[1];
        let params = arch.init(cfg, c, &mut rng);
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.value.clone())).collect();
        let x = tape.leaf(input);
        let out = arch.forward(&mut tape, &vars, x);
        tape.value(out).view().into_dimensionality::<ndarray::Ix2>().unwrap().to_owned()
    }

    #[test]
    fn conv3_produces_embed_dim_features() {
        let cfg = EncoderConfig { embed_dim: 16, image_widths: vec![4, 4, 4], ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input = ArrayD::from_shape_simple_fn(IxDyn(&[2, 3, 32, 32]), || rng.gen_range(-1.0..1.0));
        let out = run(&Conv3Encoder, &cfg, input, 1);
        assert_eq!(out.dim(), (2, 16));
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn identical_rows_encode_identically() {
        let cfg = EncoderConfig { embed_dim: 8, image_widths: vec![2, 2, 2], ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let one: Vec<f64> = (0..32 * 32 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut data = one.clone();
        data.extend(one.iter().copied());
        let input = ArrayD::from_shape_vec(IxDyn(&[2, 2, 32, 32]), data).unwrap();
        for arch in [&Conv3Encoder as &dyn ImageEncoderArch, &GapLinearEncoder] {
            let out = run(arch, &cfg, input.clone(), 3);
            for j in 0..8 {
                assert_eq!(out[[0, j]], out[[1, j]], "{}", arch.name());
            }
        }
    }

    #[test]
    fn gap_linear_is_mean_then_projection() {
        let cfg = EncoderConfig { embed_dim: 4, ..Default::default() };
        // Constant channels: pooling must preserve the constants exactly.
        let mut input = ArrayD::zeros(IxDyn(&[1, 2, 32, 32]));
        input.slice_mut(ndarray::s![0, 0, .., ..]).fill(2.0);
        input.slice_mut(ndarray::s![0, 1, .., ..]).fill(-1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = GapLinearEncoder.init(&cfg, 2, &mut rng);
        let w = params[0].value.view().into_dimensionality::<ndarray::Ix2>().unwrap().to_owned();
        let out = run(&GapLinearEncoder, &cfg, input, 4);
        for j in 0..4 {
            let expected = 2.0 * w[[0, j]] - w[[1, j]];
            assert!((out[[0, j]] - expected).abs() < 1e-12);
        }
    }
}

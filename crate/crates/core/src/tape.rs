//! Minimal reverse-mode automatic differentiation over ndarray tensors.
//!
//! A [`Tape`] records one forward computation; [`Tape::backward`] walks the
//! recorded nodes in reverse and accumulates gradients for every variable
//! (leaves and interior nodes alike). The op set is exactly what the training
//! pipeline needs: matmul, bias add, relu, strided 3x3 convolution, pooling,
//! row normalization, embeddings and the two loss heads.
//!
//! Everything is `f64` and single-threaded, so runs are bit-reproducible.

use crate::error::{Error, Result};
use ndarray::{arr0, Array2, Array4, ArrayD, ArrayView2, Axis, Ix2, Ix4};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type BackFn = Box<dyn Fn(&Tape, &ArrayD<f64>, &mut Grads)>;

struct Node {
    value: ArrayD<f64>,
    back: Option<BackFn>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads {
    slots: Vec<Option<ArrayD<f64>>>,
}

impl Grads {
    fn accum(&mut self, id: usize, g: ArrayD<f64>) {
        match &mut self.slots[id] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    pub fn get(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.slots[v.0].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: ArrayD<f64>, back: Option<BackFn>) -> Var {
        self.nodes.push(Node { value, back });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant) on the tape.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, None)
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    fn value2(&self, v: Var) -> ArrayView2<'_, f64> {
        self.nodes[v.0]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("variable is not a matrix")
    }

    /// Value of a scalar (0-d or single-element) variable.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = &self.nodes[v.0].value;
        debug_assert_eq!(val.len(), 1, "variable is not a scalar");
        *val.iter().next().expect("scalar value")
    }

    /// Matrix product `[m,k] x [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value2(a).dot(&self.value2(b));
        self.push(
            out.into_dyn(),
            Some(Box::new(move |tape, g, grads| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let ga = g2.dot(&tape.value2(b).t());
                let gb = tape.value2(a).t().dot(&g2);
                grads.accum(a.0, ga.into_dyn());
                grads.accum(b.0, gb.into_dyn());
            })),
        )
    }

    /// `[m,n] + [n]`, bias broadcast across rows.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Var {
        let b1 = self.nodes[bias.0].value.view().into_dimensionality::<ndarray::Ix1>().unwrap().to_owned();
        let out = &self.value2(x) + &b1;
        self.push(
            out.into_dyn(),
            Some(Box::new(move |_tape, g, grads| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                grads.accum(x.0, g.clone());
                grads.accum(bias.0, g2.sum_axis(Axis(0)).into_dyn());
            })),
        )
    }

    /// Elementwise sum of same-shape variables.
    pub fn sum_list(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "sum_list needs at least one input");
        let mut out = self.nodes[xs[0].0].value.clone();
        for v in &xs[1..] {
            out += &self.nodes[v.0].value;
        }
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        self.push(
            out,
            Some(Box::new(move |_tape, g, grads| {
                for &id in &ids {
                    grads.accum(id, g.clone());
                }
            })),
        )
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.nodes[x.0].value.mapv(|v| c * v);
        self.push(
            out,
            Some(Box::new(move |_tape, g, grads| {
                grads.accum(x.0, g.mapv(|v| c * v));
            })),
        )
    }

    /// `a + beta * b` for same-shape variables (used to combine losses).
    pub fn add_scaled(&mut self, a: Var, b: Var, beta: f64) -> Var {
        let out = &self.nodes[a.0].value + &self.nodes[b.0].value.mapv(|v| beta * v);
        self.push(
            out,
            Some(Box::new(move |_tape, g, grads| {
                grads.accum(a.0, g.clone());
                grads.accum(b.0, g.mapv(|v| beta * v));
            })),
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0].value.mapv(|v| v.max(0.0));
        self.push(
            out,
            Some(Box::new(move |tape, g, grads| {
                let xv = &tape.nodes[x.0].value;
                let mut gx = g.clone();
                gx.zip_mut_with(xv, |gi, &vi| {
                    if vi <= 0.0 {
                        *gi = 0.0;
                    }
                });
                grads.accum(x.0, gx);
            })),
        )
    }

    /// 3x3 convolution with padding 1 and the given stride.
    ///
    /// `x` is `[B,C,H,W]`, `kernel` is the flattened `[C*9, F]` weight matrix
    /// (column f holds output filter f), `bias` is `[F]`. Output `[B,F,OH,OW]`.
    pub fn conv3x3(&mut self, x: Var, kernel: Var, bias: Var, stride: usize) -> Var {
        let xv = self.nodes[x.0].value.view().into_dimensionality::<Ix4>().unwrap();
        let (b, c, h, w) = xv.dim();
        let k2 = self.value2(kernel);
        assert_eq!(k2.nrows(), c * 9, "kernel rows must equal in_channels * 9");
        let filters = k2.ncols();
        let (oh, ow) = conv_output_size(h, w, stride);

        let cols = im2col(&xv, stride);
        let mut out2 = cols.dot(&k2);
        let b1 = self.nodes[bias.0]
            .value
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .unwrap()
            .to_owned();
        out2 += &b1;

        let mut out = Array4::zeros((b, filters, oh, ow));
        for bi in 0..b {
            for f in 0..filters {
                for oy in 0..oh {
                    for ox in 0..ow {
                        out[[bi, f, oy, ox]] = out2[[(bi * oh + oy) * ow + ox, f]];
                    }
                }
            }
        }

        self.push(
            out.into_dyn(),
            Some(Box::new(move |tape, g, grads| {
                let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                let mut g2 = Array2::zeros((b * oh * ow, filters));
                for bi in 0..b {
                    for f in 0..filters {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                g2[[(bi * oh + oy) * ow + ox, f]] = g4[[bi, f, oy, ox]];
                            }
                        }
                    }
                }
                grads.accum(bias.0, g2.sum_axis(Axis(0)).into_dyn());
                grads.accum(kernel.0, cols.t().dot(&g2).into_dyn());
                let gcols = g2.dot(&tape.value2(kernel).t());
                let gx = col2im(&gcols, (b, c, h, w), stride);
                grads.accum(x.0, gx.into_dyn());
            })),
        )
    }

    /// Mean over the spatial dimensions: `[B,C,H,W] -> [B,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xv = self.nodes[x.0].value.view().into_dimensionality::<Ix4>().unwrap();
        let (b, c, h, w) = xv.dim();
        let scale = 1.0 / (h * w) as f64;
        let mut out = Array2::zeros((b, c));
        for bi in 0..b {
            for ci in 0..c {
                let mut sum = 0.0;
                for y in 0..h {
                    for xj in 0..w {
                        sum += xv[[bi, ci, y, xj]];
                    }
                }
                out[[bi, ci]] = sum * scale;
            }
        }
        self.push(
            out.into_dyn(),
            Some(Box::new(move |_tape, g, grads| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut gx = Array4::zeros((b, c, h, w));
                for bi in 0..b {
                    for ci in 0..c {
                        let v = g2[[bi, ci]] * scale;
                        for y in 0..h {
                            for xj in 0..w {
                                gx[[bi, ci, y, xj]] = v;
                            }
                        }
                    }
                }
                grads.accum(x.0, gx.into_dyn());
            })),
        )
    }

    /// Scales every row of `[m,n]` to unit L2 norm. Errors on a zero row.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value2(x);
        let mut norms = Vec::with_capacity(xv.nrows());
        for (i, row) in xv.rows().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if n < 1e-12 {
                return Err(Error::argument(format!(
                    "row {i} has zero norm; normalization undefined"
                )));
            }
            norms.push(n);
        }
        let mut out = xv.to_owned();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| v / norms[i]);
        }
        // The backward closure reads the output values, so the node is pushed
        // first and its closure attached once the id is known.
        let out_var = self.push(out.into_dyn(), None);
        let y_id = out_var.0;
        self.nodes[y_id].back = Some(Box::new(move |tape, g, grads| {
            // y = x / r  =>  dL/dx = (g - y * (g . y)) / r, row-wise.
            let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
            let y = tape.nodes[y_id].value.view().into_dimensionality::<Ix2>().unwrap();
            let mut gx = Array2::zeros(g2.dim());
            for i in 0..g2.nrows() {
                let gi = g2.row(i);
                let yi = y.row(i);
                let dot = gi.dot(&yi);
                for j in 0..g2.ncols() {
                    gx[[i, j]] = (gi[j] - yi[j] * dot) / norms[i];
                }
            }
            grads.accum(x.0, gx.into_dyn());
        }));
        Ok(out_var)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value2(x).t().to_owned();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |_tape, g, grads| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                grads.accum(x.0, g2.t().to_owned().into_dyn());
            })),
        )
    }

    /// Column-wise concatenation of `[B,d_i]` matrices into `[B, sum d_i]`.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty());
        let rows = self.value2(xs[0]).nrows();
        let widths: Vec<usize> = xs.iter().map(|v| self.value2(*v).ncols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Array2::zeros((rows, total));
        let mut offset = 0;
        for (v, w) in xs.iter().zip(&widths) {
            out.slice_mut(ndarray::s![.., offset..offset + w]).assign(&self.value2(*v));
            offset += w;
        }
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        let widths_back = widths.clone();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |_tape, g, grads| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut offset = 0;
                for (&id, &w) in ids.iter().zip(&widths_back) {
                    let slice = g2.slice(ndarray::s![.., offset..offset + w]).to_owned();
                    grads.accum(id, slice.into_dyn());
                    offset += w;
                }
            })),
        )
    }

    /// Mean of embedding rows per token list: `table [V,E]`, output `[B,E]`.
    /// Repeated tokens contribute (and receive gradient) once per occurrence.
    pub fn embedding_mean(&mut self, table: Var, token_lists: &[Vec<usize>]) -> Var {
        let t2 = self.value2(table);
        let e = t2.ncols();
        let b = token_lists.len();
        let mut out = Array2::zeros((b, e));
        for (i, tokens) in token_lists.iter().enumerate() {
            assert!(!tokens.is_empty(), "token list {i} is empty");
            for &t in tokens {
                for j in 0..e {
                    out[[i, j]] += t2[[t, j]];
                }
            }
            let inv = 1.0 / tokens.len() as f64;
            for j in 0..e {
                out[[i, j]] *= inv;
            }
        }
        let lists: Vec<Vec<usize>> = token_lists.to_vec();
        let (v_rows, e_cols) = t2.dim();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |_tape, g, grads| {
                let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
                let mut gt = Array2::zeros((v_rows, e_cols));
                for (i, tokens) in lists.iter().enumerate() {
                    let inv = 1.0 / tokens.len() as f64;
                    for &t in tokens {
                        for j in 0..e_cols {
                            gt[[t, j]] += g2[[i, j]] * inv;
                        }
                    }
                }
                grads.accum(table.0, gt.into_dyn());
            })),
        )
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and a constant
    /// 0/1 target matrix, reduced over all entries. Returns a scalar.
    pub fn bce_with_logits_mean(&mut self, logits: Var, targets: &Array2<f64>) -> Var {
        let l2 = self.value2(logits);
        assert_eq!(l2.dim(), targets.dim(), "logits/targets shape mismatch");
        let count = l2.len() as f64;
        let mut total = 0.0;
        for (s, t) in l2.iter().zip(targets.iter()) {
            // Stable form of -t*ln(sigma(s)) - (1-t)*ln(1-sigma(s)).
            total += s.max(0.0) - s * t + (-s.abs()).exp().ln_1p();
        }
        let targets_back = targets.clone();
        self.push(
            arr0(total / count).into_dyn(),
            Some(Box::new(move |tape, g, grads| {
                let gs = g.iter().next().copied().unwrap_or(1.0);
                let l2 = tape.value2(logits);
                let mut gx = Array2::zeros(l2.dim());
                for ((gi, &s), &t) in gx.iter_mut().zip(l2.iter()).zip(targets_back.iter()) {
                    let sig = 1.0 / (1.0 + (-s).exp());
                    *gi = gs * (sig - t) / count;
                }
                grads.accum(logits.0, gx.into_dyn());
            })),
        )
    }

    /// Mean softmax cross-entropy of `[B,K]` logits against integer labels.
    pub fn softmax_ce_mean(&mut self, logits: Var, labels: &[usize]) -> Var {
        let l2 = self.value2(logits);
        let b = l2.nrows();
        assert_eq!(labels.len(), b, "labels/logits batch mismatch");
        let mut total = 0.0;
        for (i, row) in l2.rows().into_iter().enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[labels[i]];
        }
        let labels_back = labels.to_vec();
        self.push(
            arr0(total / b as f64).into_dyn(),
            Some(Box::new(move |tape, g, grads| {
                let gs = g.iter().next().copied().unwrap_or(1.0);
                let l2 = tape.value2(logits);
                let mut gx = Array2::zeros(l2.dim());
                for (i, row) in l2.rows().into_iter().enumerate() {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                    for j in 0..row.len() {
                        let p = (row[j] - max).exp() / denom;
                        let y = if labels_back[i] == j { 1.0 } else { 0.0 };
                        gx[[i, j]] = gs * (p - y) / b as f64;
                    }
                }
                grads.accum(logits.0, gx.into_dyn());
            })),
        )
    }

    /// Runs reverse accumulation from a scalar root.
    pub fn backward(&self, root: Var) -> Grads {
        let mut grads = Grads { slots: vec![None; self.nodes.len()] };
        let seed = ArrayD::ones(self.nodes[root.0].value.raw_dim());
        assert_eq!(seed.len(), 1, "backward root must be a scalar");
        grads.slots[root.0] = Some(seed);
        for id in (0..=root.0).rev() {
            if let Some(g) = grads.slots[id].take() {
                if let Some(back) = &self.nodes[id].back {
                    back(self, &g, &mut grads);
                }
                grads.slots[id] = Some(g);
            }
        }
        grads
    }
}

pub fn conv_output_size(h: usize, w: usize, stride: usize) -> (usize, usize) {
    ((h + 2 - 3) / stride + 1, (w + 2 - 3) / stride + 1)
}

/// Unfolds `[B,C,H,W]` into `[B*OH*OW, C*9]` patches for a padded 3x3 conv.
fn im2col(x: &ndarray::ArrayView4<'_, f64>, stride: usize) -> Array2<f64> {
    let (b, c, h, w) = x.dim();
    let (oh, ow) = conv_output_size(h, w, stride);
    let mut cols = Array2::zeros((b * oh * ow, c * 9));
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (bi * oh + oy) * ow + ox;
                for ci in 0..c {
                    for ky in 0..3 {
                        let y = (oy * stride + ky) as isize - 1;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let xj = (ox * stride + kx) as isize - 1;
                            if xj < 0 || xj >= w as isize {
                                continue;
                            }
                            cols[[row, (ci * 3 + ky) * 3 + kx]] = x[[bi, ci, y as usize, xj as usize]];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input grid.
fn col2im(gcols: &Array2<f64>, dims: (usize, usize, usize, usize), stride: usize) -> Array4<f64> {
    let (b, c, h, w) = dims;
    let (oh, ow) = conv_output_size(h, w, stride);
    let mut gx = Array4::zeros((b, c, h, w));
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (bi * oh + oy) * ow + ox;
                for ci in 0..c {
                    for ky in 0..3 {
                        let y = (oy * stride + ky) as isize - 1;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let xj = (ox * stride + kx) as isize - 1;
                            if xj < 0 || xj >= w as isize {
                                continue;
                            }
                            gx[[bi, ci, y as usize, xj as usize]] +=
                                gcols[[row, (ci * 3 + ky) * 3 + kx]];
                        }
                    }
                }
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, Dimension, IxDyn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_array(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<f64> {
        ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.gen_range(-1.0..1.0))
    }

    /// Central-difference check of `build` at the given leaves.
    fn fd_check(inputs: &[ArrayD<f64>], build: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
        let root = build(&mut tape, &vars);
        let grads = tape.backward(root);

        let h = 1e-6;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]).expect("missing gradient").clone();
            for idx in 0..input.len() {
                let mut plus = inputs.to_vec();
                plus[k].as_slice_mut().unwrap()[idx] += h;
                let mut minus = inputs.to_vec();
                minus[k].as_slice_mut().unwrap()[idx] -= h;
                let eval = |ins: &[ArrayD<f64>]| {
                    let mut t = Tape::new();
                    let vs: Vec<Var> = ins.iter().map(|a| t.leaf(a.clone())).collect();
                    let r = build(&mut t, &vs);
                    t.scalar(r)
                };
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let got = analytic.as_slice().unwrap()[idx];
                let denom = numeric.abs().max(got.abs()).max(1e-4);
                assert!(
                    (numeric - got).abs() / denom < 1e-5,
                    "input {k} element {idx}: analytic {got} vs numeric {numeric}"
                );
            }
        }
    }

    /// Reduce any matrix variable to a scalar with data-independent weights.
    fn spread_sum(tape: &mut Tape, v: Var) -> Var {
        let shape: Vec<usize> = tape.value(v).shape().to_vec();
        let weights = ArrayD::from_shape_fn(IxDyn(&shape), |ix| {
            let mut acc = 1.0;
            for (axis, i) in ix.as_array_view().iter().enumerate() {
                acc += (axis + 1) as f64 * 0.3 * (*i as f64 + 1.0).sin();
            }
            acc
        });
        let w = tape.leaf(weights);
        // sum(v * w) via BCE-free path: elementwise product then total.
        let prod = tape.mul_test_only(v, w);
        tape.sum_all_test_only(prod)
    }

    impl Tape {
        /// Elementwise product (test helper only).
        fn mul_test_only(&mut self, a: Var, b: Var) -> Var {
            let out = &self.nodes[a.0].value * &self.nodes[b.0].value;
            self.push(
                out,
                Some(Box::new(move |tape, g, grads| {
                    let ga = g * &tape.nodes[b.0].value;
                    let gb = g * &tape.nodes[a.0].value;
                    grads.accum(a.0, ga);
                    grads.accum(b.0, gb);
                })),
            )
        }

        /// Sum of all elements (test helper only).
        fn sum_all_test_only(&mut self, x: Var) -> Var {
            let total: f64 = self.nodes[x.0].value.iter().sum();
            let shape = self.nodes[x.0].value.raw_dim();
            self.push(
                arr0(total).into_dyn(),
                Some(Box::new(move |_tape, g, grads| {
                    let gs = g.iter().next().copied().unwrap();
                    grads.accum(x.0, ArrayD::from_elem(shape.clone(), gs));
                })),
            )
        }
    }

    #[test]
    fn matmul_and_bias_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_array(&[3, 4], &mut rng);
        let b = random_array(&[4, 2], &mut rng);
        let bias = random_array(&[2], &mut rng);
        fd_check(&[a, b, bias], |tape, vars| {
            let mm = tape.matmul(vars[0], vars[1]);
            let out = tape.add_row_bias(mm, vars[2]);
            spread_sum(tape, out)
        });
    }

    #[test]
    fn relu_scale_sum_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Keep values away from the relu kink.
        let mut a = random_array(&[4, 3], &mut rng);
        a.mapv_inplace(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
        let b = random_array(&[4, 3], &mut rng);
        fd_check(&[a, b], |tape, vars| {
            let r = tape.relu(vars[0]);
            let s = tape.scale(vars[1], 0.7);
            let sum = tape.sum_list(&[r, s]);
            spread_sum(tape, sum)
        });
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for stride in [1usize, 2] {
            let x = random_array(&[2, 2, 6, 6], &mut rng);
            let w = random_array(&[2 * 9, 3], &mut rng);
            let b = random_array(&[3], &mut rng);
            fd_check(&[x, w, b], move |tape, vars| {
                let c = tape.conv3x3(vars[0], vars[1], vars[2], stride);
                let p = tape.global_avg_pool(c);
                spread_sum(tape, p)
            });
        }
    }

    #[test]
    fn normalize_transpose_concat_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_array(&[3, 4], &mut rng);
        let b = random_array(&[3, 2], &mut rng);
        fd_check(&[a, b], |tape, vars| {
            let n = tape.l2_normalize_rows(vars[0]).unwrap();
            let t = tape.transpose(n);
            let t2 = tape.transpose(t);
            let cat = tape.concat_cols(&[t2, vars[1]]);
            spread_sum(tape, cat)
        });
    }

    #[test]
    fn embedding_mean_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let table = random_array(&[5, 3], &mut rng);
        let lists = vec![vec![0, 2, 2], vec![4], vec![1, 3]];
        fd_check(&[table], move |tape, vars| {
            let e = tape.embedding_mean(vars[0], &lists);
            spread_sum(tape, e)
        });
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let logits = random_array(&[3, 3], &mut rng);
        let targets = ndarray::array![[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        let t = targets.clone();
        fd_check(&[logits.clone()], move |tape, vars| {
            tape.bce_with_logits_mean(vars[0], &t)
        });
        let labels = vec![2usize, 0, 1];
        fd_check(&[logits], move |tape, vars| tape.softmax_ce_mean(vars[0], &labels));
    }

    #[test]
    fn combined_loss_add_scaled_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_array(&[2, 2], &mut rng);
        let targets = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
        let labels = vec![0usize, 1];
        let t = targets.clone();
        fd_check(&[a], move |tape, vars| {
            let bce = tape.bce_with_logits_mean(vars[0], &t);
            let ce = tape.softmax_ce_mean(vars[0], &labels);
            tape.add_scaled(ce, bce, 2.0)
        });
    }

    #[test]
    fn zero_norm_row_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(ndarray::array![[0.0, 0.0], [1.0, 2.0]].into_dyn());
        assert!(tape.l2_normalize_rows(x).is_err());
    }

    #[test]
    fn interior_gradients_are_retained() {
        // dL/dS is available for interior nodes, not only leaves.
        let mut tape = Tape::new();
        let x = tape.leaf(ndarray::array![[0.5, -0.5]].into_dyn());
        let s = tape.scale(x, 2.0);
        let targets = ndarray::array![[1.0, 0.0]];
        let loss = tape.bce_with_logits_mean(s, &targets);
        let grads = tape.backward(loss);
        assert!(grads.get(s).is_some());
        assert!(grads.get(x).is_some());
    }
}

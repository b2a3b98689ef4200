//! Dense layers with optional PReLU, stacked into feed-forward networks with
//! reverse-mode gradients.
//!
//! Batches are flat row-major buffers: `batch * dim` values, one sample per
//! row. Weights are stored row-major as `out_dim x in_dim`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Initial PReLU slope.
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreluMode {
    /// One slope shared by every channel of the layer.
    #[default]
    Shared,
    /// One slope per output channel.
    PerChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::Dimension {
                expected: in_dim * out_dim,
                got: weights.len(),
            });
        }
        if biases.len() != out_dim {
            return Err(Error::Dimension {
                expected: out_dim,
                got: biases.len(),
            });
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            biases,
        })
    }

    /// Uniform fan-in scaled initialization with gain matched to a PReLU of
    /// slope 0.25; biases start at zero.
    pub fn kaiming_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let gain2 = 2.0 / (1.0 + PRELU_INIT * PRELU_INIT);
        let bound = (3.0 * gain2 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            biases: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// `y = x W^T + b` for a batch of `batch` rows.
    fn forward_into(&self, x: &[f64], batch: usize, y: &mut [f64]) {
        debug_assert_eq!(x.len(), batch * self.in_dim);
        debug_assert_eq!(y.len(), batch * self.out_dim);
        for row in y.chunks_exact_mut(self.out_dim) {
            row.copy_from_slice(&self.biases);
        }
        gemm(
            batch,
            self.in_dim,
            self.out_dim,
            x,
            (self.in_dim as isize, 1),
            &self.weights,
            (1, self.in_dim as isize),
            1.0,
            y,
            (self.out_dim as isize, 1),
        );
    }
}

/// PReLU slopes: length 1 when shared, `out_dim` when per-channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Prelu {
    pub(crate) slopes: Vec<f64>,
}

impl Prelu {
    pub fn new(mode: PreluMode, channels: usize) -> Self {
        let n = match mode {
            PreluMode::Shared => 1,
            PreluMode::PerChannel => channels,
        };
        Self {
            slopes: vec![PRELU_INIT; n],
        }
    }

    pub fn from_slopes(slopes: Vec<f64>) -> Self {
        Self { slopes }
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn is_shared(&self) -> bool {
        self.slopes.len() == 1
    }

    #[inline]
    fn slope(&self, channel: usize) -> f64 {
        if self.slopes.len() == 1 {
            self.slopes[0]
        } else {
            self.slopes[channel]
        }
    }
}

/// `x` when `x >= 0`, otherwise `a * x`.
#[inline]
pub fn prelu(x: f64, a: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        a * x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub dense: DenseLayer,
    pub prelu: Option<Prelu>,
}

/// A feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    layers: Vec<Layer>,
}

/// Activations retained by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `inputs[l]` is the input to layer `l`; `inputs[len]` is the output.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer (only kept for PReLU layers).
    pre: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("cache holds at least the input")
    }

    /// Output of layer `l` after its activation.
    pub fn activation(&self, l: usize) -> &[f64] {
        &self.inputs[l + 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub slopes: Option<Vec<f64>>,
}

/// Parameter gradients of a [`Stack`], layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Flat views in the same order as [`Stack::params_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 3);
        for g in &self.layers {
            out.push(g.weights.as_slice());
            out.push(g.biases.as_slice());
            if let Some(s) = &g.slopes {
                out.push(s.as_slice());
            }
        }
        out
    }
}

impl Stack {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dataset("a stack needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].dense.out_dim() != pair[1].dense.in_dim() {
                return Err(Error::Dimension {
                    expected: pair[0].dense.out_dim(),
                    got: pair[1].dense.in_dim(),
                });
            }
        }
        for layer in &layers {
            if let Some(p) = &layer.prelu {
                if p.slopes.len() != 1 && p.slopes.len() != layer.dense.out_dim() {
                    return Err(Error::Dimension {
                        expected: layer.dense.out_dim(),
                        got: p.slopes.len(),
                    });
                }
            }
        }
        Ok(Self { layers })
    }

    /// Builds a stack over `widths` with PReLU after every layer except the last.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], mode: PreluMode, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Dataset("a stack needs at least two widths".into()));
        }
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                dense: DenseLayer::kaiming_uniform(w[0], w[1], rng),
                prelu: (i + 1 < n).then(|| Prelu::new(mode, w[1])),
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].dense.in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].dense.out_dim()
    }

    fn check_batch(&self, x: &[f64], batch: usize) -> Result<()> {
        let expected = batch * self.input_dim();
        if x.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass through the first `depth` layers, keeping activations.
    pub fn forward_cached_to(&self, x: &[f64], batch: usize, depth: usize) -> Result<ForwardCache> {
        self.check_batch(x, batch)?;
        let depth = depth.min(self.layers.len());
        let mut inputs = Vec::with_capacity(depth + 1);
        let mut pre = Vec::with_capacity(depth);
        inputs.push(x.to_vec());
        for layer in &self.layers[..depth] {
            let mut z = vec![0.0; batch * layer.dense.out_dim()];
            layer
                .dense
                .forward_into(inputs.last().unwrap(), batch, &mut z);
            match &layer.prelu {
                Some(p) => {
                    let mut a = z.clone();
                    apply_prelu(p, layer.dense.out_dim(), &mut a);
                    pre.push(Some(z));
                    inputs.push(a);
                }
                None => {
                    pre.push(None);
                    inputs.push(z);
                }
            }
        }
        Ok(ForwardCache { batch, inputs, pre })
    }

    pub fn forward_cached(&self, x: &[f64], batch: usize) -> Result<ForwardCache> {
        self.forward_cached_to(x, batch, self.layers.len())
    }

    /// Forward pass through the first `depth` layers without caching.
    pub fn forward_to(&self, x: &[f64], batch: usize, depth: usize) -> Result<Vec<f64>> {
        self.check_batch(x, batch)?;
        let mut cur = x.to_vec();
        for layer in &self.layers[..depth.min(self.layers.len())] {
            let mut z = vec![0.0; batch * layer.dense.out_dim()];
            layer.dense.forward_into(&cur, batch, &mut z);
            if let Some(p) = &layer.prelu {
                apply_prelu(p, layer.dense.out_dim(), &mut z);
            }
            cur = z;
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.forward_to(x, batch, self.layers.len())
    }

    /// Reverse-mode gradients of a scalar loss given `d_output`, the loss
    /// gradient with respect to the stack output of the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64]) -> Result<Gradients> {
        if cache.inputs.len() != self.layers.len() + 1 {
            return Err(Error::Dataset(
                "backward needs a full-depth forward cache".into(),
            ));
        }
        let batch = cache.batch;
        let expected = batch * self.output_dim();
        if d_output.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: d_output.len(),
            });
        }
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut d_act = d_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = layer.dense.out_dim();
            let inp = layer.dense.in_dim();
            // Through the activation.
            let slopes = match (&layer.prelu, &cache.pre[l]) {
                (Some(p), Some(z)) => {
                    let mut ds = vec![0.0; p.slopes.len()];
                    for (dr, zr) in d_act.chunks_exact_mut(out).zip(z.chunks_exact(out)) {
                        for (c, (d, &zv)) in dr.iter_mut().zip(zr).enumerate() {
                            if zv < 0.0 {
                                let k = if p.is_shared() { 0 } else { c };
                                ds[k] += *d * zv;
                                *d *= p.slope(c);
                            }
                        }
                    }
                    Some(ds)
                }
                _ => None,
            };
            let d_pre = d_act;
            let x = &cache.inputs[l];

            let mut d_bias = vec![0.0; out];
            for row in d_pre.chunks_exact(out) {
                for (b, d) in d_bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            // dW = dZ^T X
            let mut d_w = vec![0.0; out * inp];
            gemm(
                out,
                batch,
                inp,
                &d_pre,
                (1, out as isize),
                x,
                (inp as isize, 1),
                0.0,
                &mut d_w,
                (inp as isize, 1),
            );
            d_act = if l > 0 {
                // dX = dZ W
                let mut d_x = vec![0.0; batch * inp];
                gemm(
                    batch,
                    out,
                    inp,
                    &d_pre,
                    (out as isize, 1),
                    &layer.dense.weights,
                    (inp as isize, 1),
                    0.0,
                    &mut d_x,
                    (inp as isize, 1),
                );
                d_x
            } else {
                Vec::new()
            };
            grads.push(LayerGrad {
                weights: d_w,
                biases: d_bias,
                slopes,
            });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Mutable parameter tensors: per layer weights, biases, then slopes.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 3);
        for layer in &mut self.layers {
            out.push(layer.dense.weights.as_mut_slice());
            out.push(layer.dense.biases.as_mut_slice());
            if let Some(p) = &mut layer.prelu {
                out.push(p.slopes.as_mut_slice());
            }
        }
        out
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(layer.dense.weights.len());
            out.push(layer.dense.biases.len());
            if let Some(p) = &layer.prelu {
                out.push(p.slopes.len());
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.dense.weights.iter().all(|v| v.is_finite())
                && l.dense.biases.iter().all(|v| v.is_finite())
                && l
                    .prelu
                    .as_ref()
                    .map_or(true, |p| p.slopes.iter().all(|v| v.is_finite()))
        })
    }
}

fn apply_prelu(p: &Prelu, channels: usize, values: &mut [f64]) {
    for row in values.chunks_exact_mut(channels) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = prelu(*v, p.slope(c));
        }
    }
}

/// `c = alpha_acc * c + a b` with `a: m x k`, `b: k x n`, `c: m x n` under
/// the given (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (isize, isize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices cover every element addressed by the strides above,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn prelu_examples() {
        assert_eq!(prelu(2.0, 0.25), 2.0);
        assert_eq!(prelu(-2.0, 0.25), -0.5);
        assert_eq!(prelu(0.0, 0.7), 0.0);
        assert_eq!(prelu(0.0, -3.0), 0.0);
    }

    #[test]
    fn stack_rejects_mismatched_widths() {
        let layers = vec![
            Layer {
                dense: DenseLayer::zeros(3, 4),
                prelu: None,
            },
            Layer {
                dense: DenseLayer::zeros(5, 2),
                prelu: None,
            },
        ];
        assert!(Stack::new(layers).is_err());
    }

    #[test]
    fn hand_checked_two_layer_forward() {
        // 2 -> 2 (PReLU 0.25) -> 2, identity-like weights.
        let l0 = DenseLayer::from_parts(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.5, -1.0]).unwrap();
        let l1 = DenseLayer::from_parts(2, 2, vec![2.0, 0.0, 1.0, 1.0], vec![0.0, 0.1]).unwrap();
        let stack = Stack::new(vec![
            Layer {
                dense: l0,
                prelu: Some(Prelu::new(PreluMode::Shared, 2)),
            },
            Layer {
                dense: l1,
                prelu: None,
            },
        ])
        .unwrap();
        // x = [1, -2]: z0 = [1.5, -3.0] -> a0 = [1.5, -0.75]
        // z1 = [3.0, 1.5 - 0.75 + 0.1] = [3.0, 0.85]
        let y = stack.forward(&[1.0, -2.0], 1).unwrap();
        assert!((y[0] - 3.0).abs() < 1e-15);
        assert!((y[1] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn batch_matches_loop() {
        let mut r = rng::seeded(4);
        let stack = Stack::init(&[7, 5, 3], PreluMode::PerChannel, &mut r).unwrap();
        let x = rng::gaussian_vec(&mut r, 7 * 6, 1.0);
        let batched = stack.forward(&x, 6).unwrap();
        for (i, row) in x.chunks_exact(7).enumerate() {
            let single = stack.forward(row, 1).unwrap();
            for (a, b) in single.iter().zip(&batched[i * 3..i * 3 + 3]) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn linear_mse_gradient_closed_form() {
        // One linear layer, loss = sum((y - t)^2) / n for one sample:
        // dW = 2 (y - t) x^T / n.
        let dense =
            DenseLayer::from_parts(3, 2, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6], vec![0.0, 0.1])
                .unwrap();
        let stack = Stack::new(vec![Layer { dense, prelu: None }]).unwrap();
        let x = [1.0, 2.0, -1.0];
        let t = [0.5, -0.5];
        let cache = stack.forward_cached(&x, 1).unwrap();
        let y = cache.output().to_vec();
        let d: Vec<f64> = y.iter().zip(&t).map(|(y, t)| 2.0 * (y - t) / 2.0).collect();
        let g = stack.backward(&cache, &d).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                let expect = 2.0 * (y[o] - t[o]) * x[i] / 2.0;
                assert!((g.layers[0].weights[o * 3 + i] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut r = rng::seeded(9);
        let stack = Stack::init(&[4, 3, 2], PreluMode::Shared, &mut r).unwrap();
        let x = rng::gaussian_vec(&mut r, 8, 1.0);
        let cache = stack.forward_cached(&x, 2).unwrap();
        let g = stack.backward(&cache, &[0.0; 4]).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }
}

//! Fully connected network with ReLU (or tanh) hidden layers and a linear
//! output.
//!
//! Parameters live in one flat buffer so optimizers, soft updates and
//! finite-difference checks can treat every network uniformly. Layer `l`
//! stores its weights row-major as `fan_in x fan_out`, followed by
//! `fan_out` biases.

use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix};
use super::rng::Rng;
use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    #[serde(default)]
    activation: Activation,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    // inputs to each layer; entry 0 is the network input
    layer_inputs: Vec<Matrix>,
}

impl ForwardCache {
    pub fn is_empty(&self) -> bool {
        self.layer_inputs.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.layer_inputs.first().map_or(0, Matrix::rows)
    }
}

/// Gradients of a scalar loss with respect to parameters and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub params: Vec<f64>,
    pub input: Matrix,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        let mut net = Self::zeros(sizes);
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in net.weights_mut(l) {
                *w = rng.uniform_range(-limit, limit);
            }
        }
        net
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let count = sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            activation: Activation::default(),
            params: vec![0.0; count],
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes[..=layer]
            .windows(2)
            .take(layer)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn layer_range(&self, layer: usize) -> (usize, usize, usize) {
        let start = self.layer_offset(layer);
        let w_len = self.sizes[layer] * self.sizes[layer + 1];
        (start, start + w_len, start + w_len + self.sizes[layer + 1])
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let (a, b, _) = self.layer_range(layer);
        &self.params[a..b]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let (a, b, _) = self.layer_range(layer);
        &mut self.params[a..b]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let (_, b, c) = self.layer_range(layer);
        &self.params[b..c]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let (_, b, c) = self.layer_range(layer);
        &mut self.params[b..c]
    }

    /// Single-input forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&input)?.into_vec())
    }

    /// Single-input forward pass that records activations for `backward`.
    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let input = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let (out, cache) = self.forward_batch_cached(&input)?;
        Ok((out.into_vec(), cache))
    }

    /// Row-wise forward pass over a batch.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut act = x.clone();
        for l in 0..self.num_layers() {
            act = self.affine(l, &act);
            if l + 1 < self.num_layers() {
                let f = self.activation;
                act.as_mut_slice().iter_mut().for_each(|v| *v = f.apply(*v));
            }
        }
        Ok(act)
    }

    pub fn forward_batch_cached(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(x)?;
        let mut cache = ForwardCache {
            layer_inputs: Vec::with_capacity(self.num_layers()),
        };
        let mut act = x.clone();
        for l in 0..self.num_layers() {
            let mut next = self.affine(l, &act);
            if l + 1 < self.num_layers() {
                let f = self.activation;
                next.as_mut_slice().iter_mut().for_each(|v| *v = f.apply(*v));
            }
            cache.layer_inputs.push(act);
            act = next;
        }
        Ok((act, cache))
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    fn affine(&self, layer: usize, input: &Matrix) -> Matrix {
        let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let batch = input.rows();
        let mut out = Matrix::zeros(batch, fan_out);
        let bias = self.bias(layer);
        for r in 0..batch {
            out.row_mut(r).copy_from_slice(bias);
        }
        gemm(
            batch,
            fan_in,
            fan_out,
            input.as_slice(),
            false,
            self.weights(layer),
            false,
            out.as_mut_slice(),
            1.0,
        );
        out
    }

    fn check_cache(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<()> {
        if cache.layer_inputs.len() != self.num_layers() {
            return Err(Error::MissingCache);
        }
        if upstream.cols() != self.output_dim() {
            return Err(Error::Shape {
                expected: self.output_dim(),
                got: upstream.cols(),
            });
        }
        if upstream.rows() != cache.batch_size() {
            return Err(Error::Shape {
                expected: cache.batch_size(),
                got: upstream.rows(),
            });
        }
        Ok(())
    }

    /// Back-propagate `upstream = dL/d(output)` (one row per batch element).
    /// Parameter gradients are summed over the batch.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<MlpGrad> {
        self.check_cache(cache, upstream)?;
        let mut grads = vec![0.0; self.params.len()];
        let input = self.backprop(cache, upstream, Some(&mut grads));
        Ok(MlpGrad { params: grads, input })
    }

    /// Like [`Mlp::backward`] but only returns `dL/d(input)`.
    pub fn backward_input(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Matrix> {
        self.check_cache(cache, upstream)?;
        Ok(self.backprop(cache, upstream, None))
    }

    fn backprop(&self, cache: &ForwardCache, upstream: &Matrix, mut grads: Option<&mut Vec<f64>>) -> Matrix {
        let batch = upstream.rows();
        let mut delta = upstream.clone();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let a_in = &cache.layer_inputs[l];
            if let Some(g) = grads.as_deref_mut() {
                let (w0, w1, b1) = self.layer_range(l);
                gemm(
                    fan_in,
                    batch,
                    fan_out,
                    a_in.as_slice(),
                    true,
                    delta.as_slice(),
                    false,
                    &mut g[w0..w1],
                    0.0,
                );
                let gb = &mut g[w1..b1];
                for r in 0..batch {
                    for (acc, d) in gb.iter_mut().zip(delta.row(r)) {
                        *acc += d;
                    }
                }
            }
            let mut d_in = Matrix::zeros(batch, fan_in);
            gemm(
                batch,
                fan_out,
                fan_in,
                delta.as_slice(),
                false,
                self.weights(l),
                true,
                d_in.as_mut_slice(),
                0.0,
            );
            if l > 0 {
                // through the activation that produced this layer's input
                let f = self.activation;
                for (d, a) in d_in.as_mut_slice().iter_mut().zip(a_in.as_slice()) {
                    *d *= f.slope_from_output(*a);
                }
            }
            delta = d_in;
        }
        delta
    }

    /// Polyak averaging: `self = (1 - tau) * self + tau * online`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) {
        assert_eq!(self.sizes, online.sizes, "soft update between different shapes");
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = (1.0 - tau) * *t + tau * o;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-line forward pass written independently of `Mlp`.
    fn scripted_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut act = x.to_vec();
        for l in 0..net.num_layers() {
            let (fi, fo) = (net.sizes()[l], net.sizes()[l + 1]);
            let w = net.weights(l);
            let b = net.bias(l);
            let mut next = vec![0.0; fo];
            for j in 0..fo {
                let mut z = b[j];
                for i in 0..fi {
                    z += act[i] * w[i * fo + j];
                }
                next[j] = if l + 1 >= net.num_layers() {
                    z
                } else if net.activation() == Activation::Tanh {
                    z.tanh()
                } else if z > 0.0 {
                    z
                } else {
                    0.0
                };
            }
            act = next;
        }
        act
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 8, 8, 2]);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn unit_chain_at_zero() {
        let mut net = Mlp::zeros(&[1, 1, 1, 1]).with_activation(Activation::Tanh);
        for l in 0..3 {
            net.weights_mut(l)[0] = 1.0;
        }
        let out = net.forward(&[0.0]).unwrap();
        assert_eq!(out[0], 0.0_f64.tanh().tanh());
        let out = net.forward(&[0.3]).unwrap();
        assert!((out[0] - 0.3_f64.tanh().tanh()).abs() < 1e-15);
        let net = net.with_activation(Activation::Relu);
        assert_eq!(net.forward(&[0.3]).unwrap()[0], 0.3);
        assert_eq!(net.forward(&[-0.3]).unwrap()[0], 0.0);
    }

    #[test]
    fn param_count_formula() {
        let net = Mlp::zeros(&[4, 256, 256, 1]);
        assert_eq!(net.param_count(), 5 * 256 + 257 * 256 + 257);
    }

    #[test]
    fn forward_matches_scripted_oracle() {
        let mut rng = Rng::new(5);
        for i in 0..20 {
            let act = if i % 2 == 0 { Activation::Relu } else { Activation::Tanh };
            let mut net = Mlp::new(&[3, 7, 5, 2], &mut rng).with_activation(act);
            for p in net.params_mut() {
                *p += 0.1 * rng.normal();
            }
            let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let got = net.forward(&x).unwrap();
            let want = scripted_forward(&net, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn wrong_input_width() {
        let net = Mlp::zeros(&[3, 4, 1]);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn backward_without_cache_is_usage_error() {
        let net = Mlp::zeros(&[2, 3, 1]);
        let up = Matrix::zeros(1, 1);
        assert!(matches!(
            net.backward(&ForwardCache::default(), &up),
            Err(Error::MissingCache)
        ));
    }

    #[test]
    fn zero_net_output_bias_gradient() {
        let net = Mlp::zeros(&[2, 4, 4, 1]);
        let (_, cache) = net.forward_cached(&[0.7, -0.2]).unwrap();
        let g = net.backward(&cache, &Matrix::from_rows(&[[1.0]])).unwrap();
        let last = net.num_layers() - 1;
        let (_, b0, b1) = net.layer_range(last);
        assert_eq!(&g.params[b0..b1], &[1.0]);
        // hidden activations are zero so every later weight gradient vanishes
        for l in 0..net.num_layers() {
            let (w0, w1, _) = net.layer_range(l);
            if l > 0 {
                assert!(g.params[w0..w1].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn backward_is_deterministic() {
        let mut rng = Rng::new(9);
        let net = Mlp::new(&[3, 8, 8, 2], &mut rng);
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]]);
        let (_, cache) = net.forward_batch_cached(&x).unwrap();
        let up = Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]);
        let g1 = net.backward(&cache, &up).unwrap();
        let g2 = net.backward(&cache, &up).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn soft_update_is_elementwise_ema() {
        let mut rng = Rng::new(2);
        let online = Mlp::new(&[2, 3, 1], &mut rng);
        let mut target = Mlp::new(&[2, 3, 1], &mut rng);
        let old = target.params().to_vec();
        target.soft_update_from(&online, 5e-3);
        for ((t, o), p) in target.params().iter().zip(&old).zip(online.params()) {
            assert_eq!(*t, (1.0 - 5e-3) * o + 5e-3 * p);
        }
    }
}

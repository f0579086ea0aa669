//! Feedforward count regressor: affine + ReLU hidden layers, affine +
//! softplus output, so predictions are never negative.

mod io;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureSpec, NormStats};

pub use io::MODEL_FORMAT_VERSION;
pub use train::{epoch_order, train, train_with_order, Split, TrainConfig, TrainHistory};

pub const DEFAULT_HIDDEN: [usize; 2] = [32, 16];

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.n_in).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v)
        }));
    }
}

/// Network weights. Also used as the container for gradients and optimizer
/// moments, which share its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorParams {
    pub layers: Vec<Layer>,
    pub init_seed: u64,
}

pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Half-up rounding of a network output, floored at zero.
pub fn round_count(y: f64) -> u32 {
    let r = (y + 0.5).floor();
    if r > 0.0 {
        r as u32
    } else {
        0
    }
}

fn huber(r: f64) -> f64 {
    if r.abs() <= 1.0 {
        0.5 * r * r
    } else {
        r.abs() - 0.5
    }
}

fn huber_grad(r: f64) -> f64 {
    r.clamp(-1.0, 1.0)
}

impl RegressorParams {
    /// Glorot-uniform weights, zero biases. `layer_sizes` runs from the
    /// input width to the output width, which must be 1.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes must list at least input and output, all >= 1: {layer_sizes:?}"
            )));
        }
        if layer_sizes[layer_sizes.len() - 1] != 1 {
            return Err(Error::invalid("output layer must have exactly one unit"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let mut layer = Layer::zeros(w[0], w[1]);
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                for x in &mut layer.weights {
                    *x = rng.random_range(-limit..=limit);
                }
                layer
            })
            .collect();
        Ok(Self {
            layers,
            init_seed: seed,
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].n_in];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
            init_seed: self.init_seed,
        }
    }

    /// Every parameter in a fixed order: per layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.biases.len() != l.n_out {
                return Err(Error::invalid(format!("layer {k} has inconsistent shape")));
            }
            if k > 0 && self.layers[k - 1].n_out != l.n_in {
                return Err(Error::invalid(format!("layer {k} input width mismatch")));
            }
        }
        if self.layers[self.layers.len() - 1].n_out != 1 {
            return Err(Error::invalid("output layer must have exactly one unit"));
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite network parameter"));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::invalid(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Pre-activations of every layer for one input.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.n_out);
            layer.affine(&act, &mut z);
            if k + 1 < self.layers.len() {
                act = z.iter().map(|&v| v.max(0.0)).collect();
            }
            zs.push(z);
        }
        zs
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let zs = self.trace(x);
        Ok(softplus(zs[zs.len() - 1][0]))
    }

    pub fn predict_count(&self, x: &[f64]) -> Result<u32> {
        self.forward(x).map(round_count)
    }

    /// Mean Huber loss (delta 1) over the batch plus `l2 * |W|^2 / 2` over
    /// weights (not biases), with its gradient.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[f64], l2: f64) -> Result<(f64, Self)> {
        let rows: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        self.loss_and_gradient_rows(&rows, ys, l2)
    }

    pub(crate) fn loss_and_gradient_rows(
        &self,
        xs: &[&[f64]],
        ys: &[f64],
        l2: f64,
    ) -> Result<(f64, Self)> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::invalid(format!(
                "batch of {} inputs and {} targets",
                xs.len(),
                ys.len()
            )));
        }
        let n = xs.len() as f64;
        let mut grad = self.zeros_like();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for (x, &y) in xs.iter().zip(ys) {
            self.check_input(x)?;
            let zs = self.trace(x);
            let z_out = zs[last][0];
            let r = softplus(z_out) - y;
            loss += huber(r);
            // dL/dz for the current layer
            let mut delta = vec![huber_grad(r) * sigmoid(z_out) / n];
            for k in (0..=last).rev() {
                let layer = &self.layers[k];
                let g = &mut grad.layers[k];
                let input: Vec<f64> = if k == 0 {
                    x.to_vec()
                } else {
                    zs[k - 1].iter().map(|&v| v.max(0.0)).collect()
                };
                for (o, &d) in delta.iter().enumerate() {
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (gw, a) in row.iter_mut().zip(&input) {
                        *gw += d * a;
                    }
                }
                if k > 0 {
                    delta = (0..layer.n_in)
                        .map(|i| {
                            if zs[k - 1][i] > 0.0 {
                                delta
                                    .iter()
                                    .enumerate()
                                    .map(|(o, d)| d * layer.weights[o * layer.n_in + i])
                                    .sum()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                }
            }
        }
        loss /= n;
        if l2 > 0.0 {
            for (layer, g) in self.layers.iter().zip(&mut grad.layers) {
                for (w, gw) in layer.weights.iter().zip(&mut g.weights) {
                    loss += 0.5 * l2 * w * w;
                    *gw += l2 * w;
                }
            }
        }
        Ok((loss, grad))
    }

    /// Mean Huber loss without the penalty term.
    pub fn data_loss(&self, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::invalid("loss needs matching non-empty inputs and targets"));
        }
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            total += huber(self.forward(x)? - y);
        }
        Ok(total / xs.len() as f64)
    }
}

/// A trained network together with everything needed to apply it to raw
/// feature rows: the feature spec, normalization and window geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct CountModel {
    pub params: RegressorParams,
    pub norm: NormStats,
    pub spec: FeatureSpec,
    pub window_s: f64,
    pub stride_s: f64,
    pub shuffle_seed: u64,
    /// Fingerprint of the dataset the model was trained on.
    pub train_fingerprint: String,
}

impl CountModel {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.norm.width() != self.spec.len() {
            return Err(Error::invalid("normalization width differs from feature spec"));
        }
        if self.norm.kept_count() != self.params.input_width() {
            return Err(Error::invalid("network input width differs from kept features"));
        }
        Ok(())
    }

    /// Network output for a raw (unnormalized) feature row.
    pub fn forward_raw(&self, row: &[f64]) -> Result<f64> {
        self.params.forward(&self.norm.apply_row(row)?)
    }

    pub fn predict_raw(&self, row: &[f64]) -> Result<u32> {
        self.forward_raw(row).map(round_count)
    }
}

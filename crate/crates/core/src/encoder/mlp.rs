use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::numkernel::{self, DenseMatrix};
use crate::rng;
use crate::{Error, Result};

const INIT_STREAM: u64 = 0x696e_6974;
const DROPOUT_STREAM: u64 = 0x6472_6f70;

/// Affine layer `y = W x + b`; `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    fn zeros_like(&self) -> Self {
        Self { weights: DenseMatrix::zeros(self.weights.rows(), self.weights.cols()), bias: vec![0.0; self.bias.len()] }
    }
}

/// Multilayer perceptron: rectifier on hidden layers, identity on the output,
/// inverted dropout on the output embedding in training mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoder {
    layers: Vec<Layer>,
    dropout_rate: f64,
    version: u64,
}

/// Activations saved by [`MlpEncoder::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<DenseMatrix>,
    pre_activations: Vec<DenseMatrix>,
    dropout_scale: Option<Vec<f64>>,
    version: u64,
}

/// Parameter gradients, laid out like the encoder's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<Layer>,
}

impl EncoderGrads {
    /// Flat views in the same order as [`MlpEncoder::parameters`].
    pub fn as_slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()]).collect()
    }
}

impl MlpEncoder {
    /// Seeded initialization with `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
    /// weights and biases.
    pub fn new(layer_dims: &[usize], dropout_rate: f64, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidDimension("encoder needs an input and an output width"));
        }
        if layer_dims.contains(&0) {
            return Err(Error::InvalidDimension("layer widths must be positive"));
        }
        let mut rng = rng::stream(seed, INIT_STREAM);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                let weights = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
                let bias = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
                Layer { weights: DenseMatrix::new(fan_out, fan_in, weights).expect("finite init"), bias }
            })
            .collect();
        Self::from_layers(layers, dropout_rate)
    }

    pub fn from_layers(layers: Vec<Layer>, dropout_rate: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidDimension("encoder needs at least one layer"));
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::DimensionMismatch { expected: l.output_dim(), actual: l.bias.len() });
            }
        }
        for w in layers.windows(2) {
            if w[1].input_dim() != w[0].output_dim() {
                return Err(Error::DimensionMismatch { expected: w[0].output_dim(), actual: w[1].input_dim() });
            }
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidParameter { name: "dropout_rate", reason: "must lie in [0, 1)" });
        }
        Ok(Self { layers, dropout_rate, version: 0 })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].input_dim()];
        dims.extend(self.layers.iter().map(Layer::output_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    /// Flat parameter views: weights then bias, layer by layer.
    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()]).collect()
    }

    /// Mutable parameter views. Invalidates outstanding forward caches.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers.iter_mut().flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()]).collect()
    }

    /// Runs the network on a `B x input_dim` batch. Dropout is drawn from
    /// `rng_seed` only when `training` is set and the rate is positive.
    pub fn forward(&self, batch: &DenseMatrix, training: bool, rng_seed: u64) -> Result<(DenseMatrix, ForwardCache)> {
        if batch.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: batch.cols() });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut h = batch.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = affine(&h, layer);
            inputs.push(h);
            if l < last {
                pre_activations.push(z.clone());
                z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = z;
        }
        let dropout_scale = (training && self.dropout_rate > 0.0).then(|| {
            let mut rng = rng::stream(rng_seed, DROPOUT_STREAM);
            let keep = 1.0 - self.dropout_rate;
            let scale: Vec<f64> = (0..h.as_slice().len())
                .map(|_| if rng.random::<f64>() < self.dropout_rate { 0.0 } else { 1.0 / keep })
                .collect();
            for (v, s) in h.as_mut_slice().iter_mut().zip(&scale) {
                *v *= s;
            }
            scale
        });
        Ok((h, ForwardCache { inputs, pre_activations, dropout_scale, version: self.version }))
    }

    /// Eval-mode forward pass without keeping a cache.
    pub fn embed(&self, batch: &DenseMatrix) -> Result<DenseMatrix> {
        if batch.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: batch.cols() });
        }
        let last = self.layers.len() - 1;
        let mut h = batch.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            h = affine(&h, layer);
            if l < last {
                h.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Gradients of every weight and bias given `dL/d(embeddings)`.
    pub fn backward(&self, cache: &ForwardCache, grad_embeddings: &DenseMatrix) -> Result<EncoderGrads> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        let batch = cache.inputs[0].rows();
        if grad_embeddings.shape() != (batch, self.embedding_dim()) {
            return Err(Error::ShapeMismatch("embedding gradient must be B x embedding_dim"));
        }
        let mut g = grad_embeddings.clone();
        if let Some(scale) = &cache.dropout_scale {
            for (v, s) in g.as_mut_slice().iter_mut().zip(scale) {
                *v *= s;
            }
        }
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            let grad = &mut grads[l];
            for i in 0..batch {
                let gi = g.row(i);
                let xi = input.row(i);
                for (o, &go) in gi.iter().enumerate() {
                    if go != 0.0 {
                        numkernel::axpy(go, xi, grad.weights.row_mut(o));
                        grad.bias[o] += go;
                    }
                }
            }
            if l > 0 {
                let mut prev = DenseMatrix::zeros(batch, layer.input_dim());
                let pre = &cache.pre_activations[l - 1];
                for i in 0..batch {
                    let out = prev.row_mut(i);
                    for (o, &go) in g.row(i).iter().enumerate() {
                        if go != 0.0 {
                            numkernel::axpy(go, layer.weights.row(o), out);
                        }
                    }
                    for (v, &z) in out.iter_mut().zip(pre.row(i)) {
                        if z <= 0.0 {
                            *v = 0.0;
                        }
                    }
                }
                g = prev;
            }
        }
        Ok(EncoderGrads { layers: grads })
    }
}

fn affine(h: &DenseMatrix, layer: &Layer) -> DenseMatrix {
    let mut z = DenseMatrix::zeros(h.rows(), layer.output_dim());
    for i in 0..h.rows() {
        let hi = h.row(i);
        for (o, v) in z.row_mut(i).iter_mut().enumerate() {
            *v = numkernel::dot(layer.weights.row(o), hi) + layer.bias[o];
        }
    }
    z
}

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};

use super::{next_generation, ComplexBatch, GradientBlocks, Regressor};
use crate::error::{Error, Result};
use crate::seed;

/// `[Re x; Im x]`.
pub fn embed_complex(x: &[Complex64]) -> Vec<f64> {
    x.iter().map(|z| z.re).chain(x.iter().map(|z| z.im)).collect()
}

/// Inverse of [`embed_complex`]; `v` must have even length.
pub fn unembed_real(v: &[f64]) -> Result<Vec<Complex64>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::invalid(format!("stacked vector has odd length {}", v.len())));
    }
    let (re, im) = v.split_at(v.len() / 2);
    Ok(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
}

fn embed_batch(b: &ComplexBatch) -> DMatrix<f64> {
    let (len, count) = (b.len(), b.batch_size());
    let mut out = DMatrix::zeros(2 * len, count);
    out.rows_mut(0, len).copy_from(&b.re);
    out.rows_mut(len, len).copy_from(&b.im);
    out
}

fn unembed_batch(m: &DMatrix<f64>) -> ComplexBatch {
    let len = m.nrows() / 2;
    ComplexBatch { re: m.rows(0, len).into_owned(), im: m.rows(len, len).into_owned() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealLayer {
    pub(crate) weight: DMatrix<f64>,
    pub(crate) bias: DVector<f64>,
    pub(crate) activation: bool,
}

impl RealLayer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() || weight.is_empty() {
            return Err(Error::invalid(format!(
                "weight is {:?} but bias has {} entries",
                weight.shape(),
                bias.len()
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(Self { weight, bias, activation: false })
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn has_activation(&self) -> bool {
        self.activation
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }
}

/// Real fully-connected baseline: ReLU hidden layers, linear output.
#[derive(Debug, Clone)]
pub struct RealNetwork {
    layers: Vec<RealLayer>,
    dims: Vec<usize>,
    input_scale: f64,
    generation: u64,
}

impl PartialEq for RealNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.dims == other.dims && self.input_scale.to_bits() == other.input_scale.to_bits()
    }
}

/// Stacked-real loss: squared error over `R` times the complex length `rows / 2`.
pub(crate) fn real_loss(out: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
    if out.shape() != targets.shape() {
        return Err(Error::invalid(format!("output {:?} vs target {:?}", out.shape(), targets.shape())));
    }
    if out.is_empty() {
        return Err(Error::invalid("loss needs a non-empty batch"));
    }
    Ok((out - targets).norm_squared() / (out.ncols() as f64 * out.nrows() as f64 / 2.0))
}

impl RealNetwork {
    /// Weights i.i.d. `N(0, 1/n_in)`, biases zero.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::invalid(format!(
                "network needs at least one hidden layer (dims length >= 3), got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::invalid(format!("all widths must be >= 1, got {dims:?}")));
        }
        let mut rng = seed::rng(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("positive std");
            let mut weight = DMatrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    weight[(r, c)] = normal.sample(&mut rng);
                }
            }
            layers.push(RealLayer { weight, bias: DVector::zeros(fan_out), activation: false });
        }
        Self::from_layers(layers)
    }

    /// Baseline for complex vectors of length `complex_in -> complex_out`.
    pub fn for_complex(complex_in: usize, hidden: &[usize], complex_out: usize, seed: u64) -> Result<Self> {
        let mut dims = vec![2 * complex_in];
        dims.extend_from_slice(hidden);
        dims.push(2 * complex_out);
        Self::new(&dims, seed)
    }

    pub fn from_layers(mut layers: Vec<RealLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::invalid(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        let last = layers.len() - 1;
        for (k, layer) in layers.iter_mut().enumerate() {
            layer.activation = k != last;
        }
        let mut dims = vec![layers[0].inputs()];
        dims.extend(layers.iter().map(|l| l.outputs()));
        Ok(Self { layers, dims, input_scale: 1.0, generation: next_generation() })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[RealLayer] {
        &self.layers
    }

    pub fn forward(&self, inputs: &DMatrix<f64>) -> Result<RealForward> {
        if inputs.nrows() != self.dims[0] {
            return Err(Error::invalid(format!(
                "input length {} does not match network input {}",
                inputs.nrows(),
                self.dims[0]
            )));
        }
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        for layer in &self.layers {
            let mut z = &layer.weight * &x;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            let next = if layer.activation { z.map(|v| v.max(0.0)) } else { DMatrix::zeros(0, 0) };
            layer_inputs.push(std::mem::replace(&mut x, next));
            pre.push(z);
        }
        Ok(RealForward { generation: self.generation, inputs: layer_inputs, pre })
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cache = self.forward(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(cache.output().as_slice().to_vec())
    }

    pub fn backward(&self, cache: &RealForward, targets: &DMatrix<f64>) -> Result<RealGradients> {
        if cache.generation != self.generation {
            return Err(Error::InvalidState(
                "forward cache was computed with different parameters".into(),
            ));
        }
        let out = cache.output();
        if out.shape() != targets.shape() {
            return Err(Error::invalid(format!("output {:?} vs target {:?}", out.shape(), targets.shape())));
        }
        let norm = 2.0 / (out.ncols() as f64 * out.nrows() as f64 / 2.0);
        let mut delta = (out - targets) * norm;
        let mut grads = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation {
                delta.zip_apply(&cache.pre[k], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            let weight = &delta * cache.inputs[k].transpose();
            let bias = delta.column_sum();
            if k > 0 {
                delta = layer.weight.tr_mul(&delta);
            }
            grads.push(RealLayerGradient { weight, bias });
        }
        grads.reverse();
        Ok(RealGradients { layers: grads })
    }
}

#[derive(Debug, Clone)]
pub struct RealForward {
    generation: u64,
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

impl RealForward {
    pub fn output(&self) -> &DMatrix<f64> {
        self.pre.last().expect("network has at least one layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealLayerGradient {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealGradients {
    pub layers: Vec<RealLayerGradient>,
}

impl GradientBlocks for RealGradients {
    fn blocks(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()]).collect()
    }
}

impl Regressor for RealNetwork {
    type Gradients = RealGradients;

    fn input_len(&self) -> usize {
        self.dims[0] / 2
    }

    fn output_len(&self) -> usize {
        self.dims.last().expect("dims non-empty") / 2
    }

    fn input_scale(&self) -> f64 {
        self.input_scale
    }

    fn set_input_scale(&mut self, scale: f64) {
        self.input_scale = scale;
    }

    fn predict_normalized(&self, inputs: &ComplexBatch) -> Result<ComplexBatch> {
        let mut cache = self.forward(&embed_batch(inputs))?;
        Ok(unembed_batch(&cache.pre.pop().expect("network has at least one layer")))
    }

    fn loss_and_gradients(&self, inputs: &ComplexBatch, targets: &ComplexBatch) -> Result<(f64, RealGradients)> {
        let cache = self.forward(&embed_batch(inputs))?;
        let t = embed_batch(targets);
        let value = real_loss(cache.output(), &t)?;
        Ok((value, self.backward(&cache, &t)?))
    }

    fn parameter_blocks(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()]).collect()
    }

    fn parameter_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation = next_generation();
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

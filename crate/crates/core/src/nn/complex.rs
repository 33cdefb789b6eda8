use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};

use super::{loss, next_generation, ComplexBatch, GradientBlocks, Regressor};
use crate::error::{Error, Result};
use crate::seed;

/// Split ReLU: `max(Re z, 0) + j max(Im z, 0)`.
pub fn crelu(z: &[Complex64]) -> Vec<Complex64> {
    z.iter().map(|z| Complex64::new(z.re.max(0.0), z.im.max(0.0))).collect()
}

/// One affine map `W x + b`, optionally followed by [`crelu`].
///
/// Stored in planar form so every complex product is four real GEMMs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexLayer {
    pub(crate) weight_re: DMatrix<f64>,
    pub(crate) weight_im: DMatrix<f64>,
    pub(crate) bias_re: DVector<f64>,
    pub(crate) bias_im: DVector<f64>,
    pub(crate) activation: bool,
}

impl ComplexLayer {
    pub fn new(weight: &DMatrix<Complex64>, bias: &DVector<Complex64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::invalid(format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        if weight.is_empty() {
            return Err(Error::invalid("layer widths must be at least 1"));
        }
        if weight.iter().chain(bias.iter()).any(|z| !z.is_finite()) {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(Self {
            weight_re: weight.map(|z| z.re),
            weight_im: weight.map(|z| z.im),
            bias_re: bias.map(|z| z.re),
            bias_im: bias.map(|z| z.im),
            activation: false,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight_re.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight_re.nrows()
    }

    pub fn has_activation(&self) -> bool {
        self.activation
    }

    pub fn weight(&self) -> DMatrix<Complex64> {
        self.weight_re.zip_map(&self.weight_im, Complex64::new)
    }

    pub fn bias(&self) -> DVector<Complex64> {
        self.bias_re.zip_map(&self.bias_im, Complex64::new)
    }

    fn affine(&self, x: &ComplexBatch) -> ComplexBatch {
        let mut re = &self.weight_re * &x.re;
        re.gemm(-1.0, &self.weight_im, &x.im, 1.0);
        let mut im = &self.weight_re * &x.im;
        im.gemm(1.0, &self.weight_im, &x.re, 1.0);
        for mut col in re.column_iter_mut() {
            col += &self.bias_re;
        }
        for mut col in im.column_iter_mut() {
            col += &self.bias_im;
        }
        ComplexBatch { re, im }
    }
}

/// Complex feedforward network: split-ReLU hidden layers, linear output layer.
#[derive(Debug, Clone)]
pub struct ComplexNetwork {
    layers: Vec<ComplexLayer>,
    dims: Vec<usize>,
    input_scale: f64,
    generation: u64,
}

impl PartialEq for ComplexNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.dims == other.dims && self.input_scale.to_bits() == other.input_scale.to_bits()
    }
}

impl ComplexNetwork {
    /// Weights i.i.d. `CN(0, 1/n_in)` per layer, biases zero.
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
            let normal = Normal::new(0.0, (0.5 / fan_in as f64).sqrt()).expect("positive std");
            let mut weight_re = DMatrix::zeros(fan_out, fan_in);
            let mut weight_im = DMatrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    weight_re[(r, c)] = normal.sample(&mut rng);
                    weight_im[(r, c)] = normal.sample(&mut rng);
                }
            }
            layers.push(ComplexLayer {
                weight_re,
                weight_im,
                bias_re: DVector::zeros(fan_out),
                bias_im: DVector::zeros(fan_out),
                activation: false,
            });
        }
        Self::from_layers(layers)
    }

    /// Chains layers; every layer but the last gets the activation.
    pub fn from_layers(mut layers: Vec<ComplexLayer>) -> Result<Self> {
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

    pub fn layers(&self) -> &[ComplexLayer] {
        &self.layers
    }

    pub fn forward(&self, inputs: &ComplexBatch) -> Result<ComplexForward> {
        if inputs.len() != self.dims[0] {
            return Err(Error::invalid(format!(
                "input length {} does not match network input {}",
                inputs.len(),
                self.dims[0]
            )));
        }
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        for layer in &self.layers {
            let z = layer.affine(&x);
            let next = if layer.activation {
                ComplexBatch { re: z.re.map(|v| v.max(0.0)), im: z.im.map(|v| v.max(0.0)) }
            } else {
                z.clone()
            };
            layer_inputs.push(std::mem::replace(&mut x, next));
            pre.push(z);
        }
        Ok(ComplexForward { generation: self.generation, inputs: layer_inputs, pre })
    }

    /// Forward pass on a single vector.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(self.forward(&ComplexBatch::from_vector(x))?.output().column(0))
    }

    /// Gradients of [`loss`] with respect to every real and imaginary part,
    /// packaged as `dL/dRe + j dL/dIm`.
    pub fn backward(&self, cache: &ComplexForward, targets: &ComplexBatch) -> Result<ComplexGradients> {
        if cache.generation != self.generation {
            return Err(Error::InvalidState(
                "forward cache was computed with different parameters".into(),
            ));
        }
        let out = cache.output();
        if out.re.shape() != targets.re.shape() || targets.im.shape() != targets.re.shape() {
            return Err(Error::invalid(format!(
                "target shape {:?} does not match output shape {:?}",
                targets.re.shape(),
                out.re.shape()
            )));
        }
        let norm = 2.0 / (out.batch_size() * out.len()) as f64;
        let mut dre = (&out.re - &targets.re) * norm;
        let mut dim = (&out.im - &targets.im) * norm;

        let mut grads = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation {
                let z = &cache.pre[k];
                dre.zip_apply(&z.re, |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
                dim.zip_apply(&z.im, |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            let x = &cache.inputs[k];
            let xre_t = x.re.transpose();
            let xim_t = x.im.transpose();
            let mut weight_re = &dre * &xre_t;
            weight_re.gemm(1.0, &dim, &xim_t, 1.0);
            let mut weight_im = &dim * &xre_t;
            weight_im.gemm(-1.0, &dre, &xim_t, 1.0);
            let bias_re = dre.column_sum();
            let bias_im = dim.column_sum();
            if k > 0 {
                let mut next_re = layer.weight_re.tr_mul(&dre);
                next_re.gemm_tr(1.0, &layer.weight_im, &dim, 1.0);
                let mut next_im = layer.weight_re.tr_mul(&dim);
                next_im.gemm_tr(-1.0, &layer.weight_im, &dre, 1.0);
                dre = next_re;
                dim = next_im;
            }
            grads.push(ComplexLayerGradient { weight_re, weight_im, bias_re, bias_im });
        }
        grads.reverse();
        Ok(ComplexGradients { layers: grads })
    }
}

/// Per-layer inputs and pre-activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ComplexForward {
    generation: u64,
    inputs: Vec<ComplexBatch>,
    pre: Vec<ComplexBatch>,
}

impl ComplexForward {
    pub fn output(&self) -> &ComplexBatch {
        self.pre.last().expect("network has at least one layer")
    }

    pub fn pre_activations(&self) -> &[ComplexBatch] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexLayerGradient {
    pub weight_re: DMatrix<f64>,
    pub weight_im: DMatrix<f64>,
    pub bias_re: DVector<f64>,
    pub bias_im: DVector<f64>,
}

impl ComplexLayerGradient {
    pub fn weight(&self) -> DMatrix<Complex64> {
        self.weight_re.zip_map(&self.weight_im, Complex64::new)
    }

    pub fn bias(&self) -> DVector<Complex64> {
        self.bias_re.zip_map(&self.bias_im, Complex64::new)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGradients {
    pub layers: Vec<ComplexLayerGradient>,
}

impl GradientBlocks for ComplexGradients {
    fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weight_re.as_slice(), g.weight_im.as_slice(), g.bias_re.as_slice(), g.bias_im.as_slice()])
            .collect()
    }
}

impl Regressor for ComplexNetwork {
    type Gradients = ComplexGradients;

    fn input_len(&self) -> usize {
        self.dims[0]
    }

    fn output_len(&self) -> usize {
        *self.dims.last().expect("dims non-empty")
    }

    fn input_scale(&self) -> f64 {
        self.input_scale
    }

    fn set_input_scale(&mut self, scale: f64) {
        self.input_scale = scale;
    }

    fn predict_normalized(&self, inputs: &ComplexBatch) -> Result<ComplexBatch> {
        let mut cache = self.forward(inputs)?;
        Ok(cache.pre.pop().expect("network has at least one layer"))
    }

    fn loss_and_gradients(&self, inputs: &ComplexBatch, targets: &ComplexBatch) -> Result<(f64, ComplexGradients)> {
        let cache = self.forward(inputs)?;
        let value = loss(cache.output(), targets)?;
        Ok((value, self.backward(&cache, targets)?))
    }

    fn parameter_blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight_re.as_slice(), l.weight_im.as_slice(), l.bias_re.as_slice(), l.bias_im.as_slice()])
            .collect()
    }

    fn parameter_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation = next_generation();
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight_re.as_mut_slice(),
                    l.weight_im.as_mut_slice(),
                    l.bias_re.as_mut_slice(),
                    l.bias_im.as_mut_slice(),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::complex_normal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn crelu_examples() {
        assert_eq!(crelu(&[c(1.0, 2.0)]), vec![c(1.0, 2.0)]);
        assert_eq!(crelu(&[c(-1.0, -2.0)]), vec![c(0.0, 0.0)]);
        assert_eq!(crelu(&[c(-1.0, 2.0)]), vec![c(0.0, 2.0)]);
    }

    #[test]
    fn crelu_is_idempotent() {
        let mut rng = seed::rng(1);
        let z: Vec<_> = (0..100).map(|_| complex_normal(&mut rng)).collect();
        let once = crelu(&z);
        assert_eq!(crelu(&once), once);
        for (a, b) in z.iter().zip(&once) {
            if a.re >= 0.0 && a.im >= 0.0 {
                assert_eq!(a, b);
            }
        }
    }

    fn identity_layer(n: usize) -> ComplexLayer {
        ComplexLayer::new(&DMatrix::identity(n, n), &DVector::zeros(n)).unwrap()
    }

    #[test]
    fn identity_single_layer_is_identity() {
        let net = ComplexNetwork::from_layers(vec![identity_layer(3)]).unwrap();
        let x = vec![c(1.0, -2.0), c(-0.5, 0.25), c(0.0, 3.0)];
        assert_eq!(net.apply(&x).unwrap(), x);
        assert!(!net.layers()[0].has_activation());
    }

    #[test]
    fn two_identity_layers_apply_crelu() {
        let net = ComplexNetwork::from_layers(vec![identity_layer(3), identity_layer(3)]).unwrap();
        let x = vec![c(1.0, -2.0), c(-0.5, 0.25), c(0.0, 3.0)];
        assert_eq!(net.apply(&x).unwrap(), crelu(&x));
    }

    #[test]
    fn forward_matches_scalar_loops() {
        let net = ComplexNetwork::new(&[3, 4, 2], 5).unwrap();
        let mut net = net;
        // Nonzero biases so the bias path is exercised.
        let mut rng = seed::rng(6);
        for block in net.parameter_blocks_mut() {
            for v in block.iter_mut() {
                *v += 0.1 * complex_normal(&mut rng).re;
            }
        }
        let x: Vec<_> = (0..3).map(|_| complex_normal(&mut rng)).collect();
        let mut h = x.clone();
        for layer in net.layers() {
            let w = layer.weight();
            let b = layer.bias();
            let mut z = vec![c(0.0, 0.0); w.nrows()];
            for r in 0..w.nrows() {
                z[r] = b[r];
                for k in 0..w.ncols() {
                    z[r] += w[(r, k)] * h[k];
                }
            }
            h = if layer.has_activation() { crelu(&z) } else { z };
        }
        let got = net.apply(&x).unwrap();
        for (a, b) in got.iter().zip(&h) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let net = ComplexNetwork::new(&[3, 4, 2], 5).unwrap();
        assert!(matches!(net.apply(&[c(1.0, 0.0)]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn init_is_deterministic_with_expected_variance() {
        let a = ComplexNetwork::new(&[400, 300, 2], 11).unwrap();
        assert_eq!(a, ComplexNetwork::new(&[400, 300, 2], 11).unwrap());
        assert_ne!(a, ComplexNetwork::new(&[400, 300, 2], 12).unwrap());
        let w = a.layers()[0].weight();
        assert_eq!(w.len(), 120_000);
        let var = w.iter().map(|z| z.norm_sqr()).sum::<f64>() / w.len() as f64;
        assert!((var * 400.0 - 1.0).abs() < 0.05, "variance {var}");
        assert!(a.layers()[0].bias().iter().all(|b| *b == c(0.0, 0.0)));
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(ComplexNetwork::new(&[3, 2], 0).is_err());
        assert!(ComplexNetwork::new(&[3, 0, 2], 0).is_err());
        let net = ComplexNetwork::new(&[4, 5, 6, 7], 0).unwrap();
        assert_eq!(net.dims(), &[4, 5, 6, 7]);
        let flags: Vec<_> = net.layers().iter().map(|l| l.has_activation()).collect();
        assert_eq!(flags, vec![true, true, false]);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let net = ComplexNetwork::new(&[3, 4, 2], 5).unwrap();
        let mut rng = seed::rng(2);
        let x = ComplexBatch::from_columns(3, &[(0..3).map(|_| complex_normal(&mut rng)).collect::<Vec<_>>()]).unwrap();
        let cache = net.forward(&x).unwrap();
        let target = cache.output().clone();
        let g = net.backward(&cache, &target).unwrap();
        assert!(g.blocks().iter().all(|b| b.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn scalar_linear_gradient_by_hand() {
        // L = |w x - 0|^2 with x = 1, R = L_h = 1, so dL/dRe + j dL/dIm = 2w.
        let w = c(0.6, -0.8);
        let layer = ComplexLayer::new(&DMatrix::from_element(1, 1, w), &DVector::zeros(1)).unwrap();
        let net = ComplexNetwork::from_layers(vec![layer]).unwrap();
        let x = ComplexBatch::from_vector(&[c(1.0, 0.0)]);
        let cache = net.forward(&x).unwrap();
        let g = net.backward(&cache, &ComplexBatch::zeros(1, 1)).unwrap();
        assert!((g.layers[0].weight()[(0, 0)] - 2.0 * w).norm() < 1e-15);
        assert!((g.layers[0].bias()[0] - 2.0 * w).norm() < 1e-15);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = ComplexNetwork::new(&[3, 4, 2], 5).unwrap();
        let x = ComplexBatch::zeros(3, 1);
        let cache = net.forward(&x).unwrap();
        net.parameter_blocks_mut()[0][0] += 1.0;
        let err = net.backward(&cache, &ComplexBatch::zeros(2, 1)).unwrap_err();
        assert!(matches!(err, Error::InvalidState(_)));
        let other = ComplexNetwork::new(&[3, 4, 2], 5).unwrap();
        assert!(other.backward(&net.forward(&x).unwrap(), &ComplexBatch::zeros(2, 1)).is_err());
    }
}

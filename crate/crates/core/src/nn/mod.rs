//! Feedforward regressors mapping estimated channels to extrapolated ones.
//!
//! [`ComplexNetwork`] works on complex vectors directly with a split ReLU;
//! [`RealNetwork`] is the real-valued baseline on stacked real/imaginary
//! parts. Both implement [`Regressor`], which is all [`train`] needs.

mod adam;
pub mod checkpoint;
mod complex;
mod real;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;

use crate::checksum::checksum_f64s;
use crate::error::{Error, Result};
use crate::experiment::metrics::nmse_batch;
use crate::seed;

pub use adam::{adam_step, AdamState};
pub use complex::{crelu, ComplexForward, ComplexGradients, ComplexLayer, ComplexLayerGradient, ComplexNetwork};
pub use real::{embed_complex, unembed_real, RealForward, RealGradients, RealLayer, RealLayerGradient, RealNetwork};

static GENERATION: AtomicU64 = AtomicU64::new(1);

/// Fresh identifier for a parameter state; forward caches remember it.
pub(crate) fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// A batch of complex column vectors in planar form (`len x batch`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBatch {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl ComplexBatch {
    pub fn zeros(len: usize, batch: usize) -> Self {
        Self { re: DMatrix::zeros(len, batch), im: DMatrix::zeros(len, batch) }
    }

    pub fn from_planar(re: DMatrix<f64>, im: DMatrix<f64>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::invalid(format!("planar shapes differ: {:?} vs {:?}", re.shape(), im.shape())));
        }
        Ok(Self { re, im })
    }

    /// Every column must have length `len`.
    pub fn from_columns<C: AsRef<[Complex64]>>(len: usize, columns: &[C]) -> Result<Self> {
        let mut batch = Self::zeros(len, columns.len());
        for (j, col) in columns.iter().enumerate() {
            let col = col.as_ref();
            if col.len() != len {
                return Err(Error::invalid(format!("column {j} has length {}, expected {len}", col.len())));
            }
            for (i, z) in col.iter().enumerate() {
                batch.re[(i, j)] = z.re;
                batch.im[(i, j)] = z.im;
            }
        }
        Ok(batch)
    }

    pub fn from_vector(v: &[Complex64]) -> Self {
        Self::from_columns(v.len(), &[v]).expect("single column has consistent length")
    }

    pub fn len(&self) -> usize {
        self.re.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.re.nrows() == 0
    }

    pub fn batch_size(&self) -> usize {
        self.re.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.len()).map(|i| Complex64::new(self.re[(i, j)], self.im[(i, j)])).collect()
    }

    pub fn columns(&self) -> Vec<Vec<Complex64>> {
        (0..self.batch_size()).map(|j| self.column(j)).collect()
    }

    pub fn select_columns(&self, indices: &[usize]) -> Self {
        Self { re: self.re.select_columns(indices), im: self.im.select_columns(indices) }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { re: &self.re * factor, im: &self.im * factor }
    }

    /// Mean of `|z|^2` over all entries.
    pub fn mean_power(&self) -> f64 {
        if self.re.is_empty() {
            return 0.0;
        }
        (self.re.norm_squared() + self.im.norm_squared()) / self.re.len() as f64
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.re.shape() == other.re.shape()
    }
}

/// `(1 / (R L_h)) sum_r ||out_r - target_r||^2`.
pub fn loss(outputs: &ComplexBatch, targets: &ComplexBatch) -> Result<f64> {
    if !outputs.same_shape(targets) {
        return Err(Error::invalid(format!(
            "output shape {:?} does not match target shape {:?}",
            outputs.re.shape(),
            targets.re.shape()
        )));
    }
    if outputs.batch_size() == 0 || outputs.is_empty() {
        return Err(Error::invalid("loss needs a non-empty batch of non-empty vectors"));
    }
    let err = (&outputs.re - &targets.re).norm_squared() + (&outputs.im - &targets.im).norm_squared();
    Ok(err / (outputs.batch_size() * outputs.len()) as f64)
}

/// Gradient blocks in the same order and layout as the parameter blocks.
pub trait GradientBlocks {
    fn blocks(&self) -> Vec<&[f64]>;
}

/// What the shared trainer needs from a network.
///
/// Inputs and outputs are complex vectors; the network works in a normalized
/// domain where both are divided by [`Regressor::input_scale`].
pub trait Regressor {
    type Gradients: GradientBlocks;

    /// Complex input length.
    fn input_len(&self) -> usize;

    /// Complex output length.
    fn output_len(&self) -> usize;

    fn input_scale(&self) -> f64;

    fn set_input_scale(&mut self, scale: f64);

    /// Output for normalized inputs.
    fn predict_normalized(&self, inputs: &ComplexBatch) -> Result<ComplexBatch>;

    fn loss_and_gradients(&self, inputs: &ComplexBatch, targets: &ComplexBatch) -> Result<(f64, Self::Gradients)>;

    fn parameter_blocks(&self) -> Vec<&[f64]>;

    /// Mutable access to every parameter; invalidates outstanding forward caches.
    fn parameter_blocks_mut(&mut self) -> Vec<&mut [f64]>;

    /// Output for raw (unnormalized) inputs.
    fn predict(&self, inputs: &ComplexBatch) -> Result<ComplexBatch> {
        let scale = self.input_scale();
        Ok(self.predict_normalized(&inputs.scaled(scale.recip()))?.scaled(scale))
    }

    fn real_parameter_count(&self) -> usize {
        self.parameter_blocks().iter().map(|b| b.len()).sum()
    }

    fn checksum(&self) -> u64 {
        checksum_f64s(self.parameter_blocks())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, batch_size: 32, epochs: 500, shuffle_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean batch loss per epoch, normalized domain.
    pub epoch_loss: Vec<f64>,
    /// Validation NMSE (linear) per epoch; empty when no validation set is given.
    pub validation_nmse: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub checksum: u64,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.epoch_loss.len()
    }

    /// Per-epoch loss and validation NMSE. Timings are left out so that reruns
    /// produce identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,validation_nmse\n");
        for (e, loss) in self.epoch_loss.iter().enumerate() {
            let val = self.validation_nmse.get(e).map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e + 1, loss, val));
        }
        out
    }
}

/// Minibatch ADAM training on `(inputs, targets)` column pairs.
///
/// The input scale is set from the training inputs so their mean per-entry
/// power is 1; inputs and targets share it. Each epoch reshuffles with a
/// generator seeded from `(shuffle_seed, epoch)`; a trailing partial batch is
/// kept.
pub fn train<R: Regressor>(
    net: &mut R,
    inputs: &ComplexBatch,
    targets: &ComplexBatch,
    validation: Option<(&ComplexBatch, &ComplexBatch)>,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let count = inputs.batch_size();
    if count == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    if targets.batch_size() != count {
        return Err(Error::invalid(format!("{count} inputs but {} targets", targets.batch_size())));
    }
    if inputs.len() != net.input_len() || targets.len() != net.output_len() {
        return Err(Error::invalid(format!(
            "network maps {} -> {}, data is {} -> {}",
            net.input_len(),
            net.output_len(),
            inputs.len(),
            targets.len()
        )));
    }
    if config.batch_size == 0 || config.batch_size > count {
        return Err(Error::invalid(format!(
            "batch size {} must be in 1..={count}",
            config.batch_size
        )));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {}", config.learning_rate)));
    }
    let mut report = TrainReport::default();
    if config.epochs == 0 {
        report.checksum = net.checksum();
        return Ok(report);
    }

    let power = inputs.mean_power();
    let scale = if power > 0.0 { power.sqrt() } else { 1.0 };
    net.set_input_scale(scale);
    let x = inputs.scaled(scale.recip());
    let t = targets.scaled(scale.recip());
    let validation = validation.map(|(vx, vt)| (vx.scaled(scale.recip()), vt.scaled(scale.recip())));

    let mut adam = AdamState::new(config.learning_rate);
    let mut order: Vec<usize> = (0..count).collect();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut rng = seed::rng(seed::derive(config.shuffle_seed, seed::stream::SHUFFLE, epoch as u64));
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let bx = x.select_columns(chunk);
            let bt = t.select_columns(chunk);
            let (batch_loss, grads) = net.loss_and_gradients(&bx, &bt)?;
            adam_step(net, &grads, &mut adam)?;
            total += batch_loss;
            batches += 1;
        }
        report.epoch_loss.push(total / batches as f64);
        if let Some((vx, vt)) = &validation {
            let out = net.predict_normalized(vx)?;
            report.validation_nmse.push(nmse_batch(vt, &out)?);
        }
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    report.checksum = net.checksum();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::complex_normal;

    #[test]
    fn loss_examples() {
        let t = ComplexBatch::from_vector(&[Complex64::new(0.3, 1.0), Complex64::new(-2.0, 0.5)]);
        assert_eq!(loss(&t, &t).unwrap(), 0.0);

        let zero = ComplexBatch::zeros(2, 1);
        let out = ComplexBatch::from_vector(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        assert!((loss(&out, &zero).unwrap() - 1.0).abs() < 1e-15);

        let doubled = out.scaled(2.0);
        assert!((loss(&doubled, &zero).unwrap() - 4.0).abs() < 1e-15);

        assert!(matches!(loss(&out, &ComplexBatch::zeros(3, 1)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn loss_is_nonnegative_and_zero_only_on_equality() {
        let mut rng = seed::rng(3);
        for _ in 0..50 {
            let a: Vec<_> = (0..5).map(|_| complex_normal(&mut rng)).collect();
            let mut b = a.clone();
            let ba = ComplexBatch::from_vector(&a);
            assert_eq!(loss(&ba, &ComplexBatch::from_vector(&b)).unwrap(), 0.0);
            b[2] += Complex64::new(1e-9, 0.0);
            assert!(loss(&ba, &ComplexBatch::from_vector(&b)).unwrap() > 0.0);
        }
    }

    #[test]
    fn batch_round_trips_columns() {
        let cols = vec![
            vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)],
            vec![Complex64::new(-1.0, 0.5), Complex64::new(0.0, -7.0)],
        ];
        let b = ComplexBatch::from_columns(2, &cols).unwrap();
        assert_eq!(b.columns(), cols);
        assert_eq!(b.select_columns(&[1]).column(0), cols[1]);
        assert!(ComplexBatch::from_columns(3, &cols).is_err());
    }
}

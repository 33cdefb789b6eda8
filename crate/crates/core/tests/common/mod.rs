#![allow(dead_code)]

use nalgebra::DMatrix;
use prnet_core::nn::GradientBlocks;
use prnet_core::seed::{self, complex_normal};
use prnet_core::{ComplexBatch, Complex64, Regressor};

pub const FD_STEP: f64 = 1e-6;

/// Absolute gradients below this are compared absolutely.
pub const GRADIENT_FLOOR: f64 = 1e-7;

pub fn random_batch(seed: u64, len: usize, batch: usize) -> ComplexBatch {
    let mut rng = seed::rng(seed);
    let cols: Vec<Vec<Complex64>> = (0..batch).map(|_| (0..len).map(|_| complex_normal(&mut rng)).collect()).collect();
    ComplexBatch::from_columns(len, &cols).unwrap()
}

pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let mut rng = seed::rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| complex_normal(&mut rng))
}

/// Adds seeded `N(0, scale^2)` noise to every parameter. Freshly initialized
/// networks have zero biases, which puts pre-activations exactly on the ReLU
/// kink whenever a whole layer is inactive; gradients are only defined away
/// from such points.
pub fn jitter_parameters<R: Regressor>(net: &mut R, seed: u64, scale: f64) {
    let mut rng = seed::rng(seed);
    for block in net.parameter_blocks_mut() {
        for v in block.iter_mut() {
            *v += scale * complex_normal(&mut rng).re * std::f64::consts::SQRT_2;
        }
    }
}

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)` over
/// every real parameter, with central differences of step [`FD_STEP`].
pub fn max_gradient_error<R: Regressor>(net: &mut R, inputs: &ComplexBatch, targets: &ComplexBatch) -> f64 {
    let (_, grads) = net.loss_and_gradients(inputs, targets).unwrap();
    let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();
    let shape: Vec<usize> = analytic.iter().map(|b| b.len()).collect();
    let mut worst = 0.0f64;
    for (b, &len) in shape.iter().enumerate() {
        for i in 0..len {
            let base = net.parameter_blocks()[b][i];
            net.parameter_blocks_mut()[b][i] = base + FD_STEP;
            let plus = net.loss_and_gradients(inputs, targets).unwrap().0;
            net.parameter_blocks_mut()[b][i] = base - FD_STEP;
            let minus = net.loss_and_gradients(inputs, targets).unwrap().0;
            net.parameter_blocks_mut()[b][i] = base;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[b][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn rel_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / b.norm()
}

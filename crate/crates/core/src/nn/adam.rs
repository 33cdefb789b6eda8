use super::{GradientBlocks, Regressor};
use crate::error::{Error, Result};

/// Bias-corrected ADAM over independent real scalars.
///
/// Complex parameters are handled as their real and imaginary parts, so the
/// second-moment accumulators stay real and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self::with_moments(learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_moments(learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { learning_rate, beta1, beta2, eps, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> impl Iterator<Item = f64> + '_ {
        self.second.iter().flatten().copied()
    }

    /// Applies one update in place. Moment buffers take their shapes from the
    /// first call; later calls must match.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::invalid("gradient blocks do not match parameter blocks"));
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != grads.len() || self.first.iter().zip(&grads).any(|(m, g)| m.len() != g.len()) {
            return Err(Error::invalid("parameter shapes changed between ADAM steps"));
        }

        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step<R: Regressor>(net: &mut R, grads: &R::Gradients, state: &mut AdamState) -> Result<()> {
    state.update(net.parameter_blocks_mut(), grads.blocks())
}

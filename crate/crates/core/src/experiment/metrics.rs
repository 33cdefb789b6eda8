use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::nn::ComplexBatch;

/// Mean over samples of `||truth - estimate||^2 / ||truth||^2`.
pub fn nmse<T: AsRef<[Complex64]>, E: AsRef<[Complex64]>>(truth: &[T], estimate: &[E]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::invalid(format!("{} truth vectors but {} estimates", truth.len(), estimate.len())));
    }
    if truth.is_empty() {
        return Err(Error::invalid("NMSE needs at least one sample"));
    }
    let mut total = 0.0;
    for (i, (t, e)) in truth.iter().zip(estimate).enumerate() {
        let (t, e) = (t.as_ref(), e.as_ref());
        if t.len() != e.len() {
            return Err(Error::invalid(format!("sample {i}: lengths {} and {} differ", t.len(), e.len())));
        }
        let power: f64 = t.iter().map(|z| z.norm_sqr()).sum();
        if power == 0.0 {
            return Err(Error::invalid(format!("sample {i}: all-zero truth vector")));
        }
        let err: f64 = t.iter().zip(e).map(|(a, b)| (a - b).norm_sqr()).sum();
        total += err / power;
    }
    Ok(total / truth.len() as f64)
}

/// [`nmse`] over the columns of two batches.
pub fn nmse_batch(truth: &ComplexBatch, estimate: &ComplexBatch) -> Result<f64> {
    if truth.re.shape() != estimate.re.shape() {
        return Err(Error::invalid(format!(
            "truth {:?} and estimate {:?} shapes differ",
            truth.re.shape(),
            estimate.re.shape()
        )));
    }
    if truth.batch_size() == 0 {
        return Err(Error::invalid("NMSE needs at least one sample"));
    }
    let mut total = 0.0;
    for j in 0..truth.batch_size() {
        let power = truth.re.column(j).norm_squared() + truth.im.column(j).norm_squared();
        if power == 0.0 {
            return Err(Error::invalid(format!("sample {j}: all-zero truth vector")));
        }
        let err = (truth.re.column(j) - estimate.re.column(j)).norm_squared()
            + (truth.im.column(j) - estimate.im.column(j)).norm_squared();
        total += err / power;
    }
    Ok(total / truth.batch_size() as f64)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

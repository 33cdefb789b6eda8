//! Grouped-mode pilot transmission and channel estimation.
//!
//! The transmit array is split into `P` contiguous groups and group `g`
//! radiates in mode `g` during the pilot phase, so a single round of `M`
//! pilots observes the mixed-mode *composite* channel. That channel is then
//! recovered with LMMSE (or LS for reference).

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelTensor;
use crate::error::{Error, Result};
use crate::seed::{self, complex_normal};

/// Largest acceptable condition number of the LMMSE system matrix.
pub const MAX_CONDITION: f64 = 1e13;

/// Mode assigned to every transmit antenna during pilot transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMap {
    modes: usize,
    assignment: Vec<usize>,
}

/// Splits `tx_antennas` into `modes` contiguous groups.
///
/// The first `P - 1` groups hold `floor(M / P)` antennas and the last group
/// absorbs the remainder. Group `g` uses mode `g`.
pub fn partition_antennas(tx_antennas: usize, modes: usize) -> Result<GroupMap> {
    if tx_antennas == 0 || modes == 0 {
        return Err(Error::invalid("antenna and mode counts must be at least 1"));
    }
    if tx_antennas < modes {
        return Err(Error::invalid(format!(
            "M = {tx_antennas} < P = {modes}: some modes would never be observed"
        )));
    }
    let size = tx_antennas / modes;
    let assignment = (0..tx_antennas).map(|m| (m / size).min(modes - 1)).collect();
    Ok(GroupMap { modes, assignment })
}

impl GroupMap {
    pub fn tx_antennas(&self) -> usize {
        self.assignment.len()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Native mode of antenna `m`.
    pub fn mode_of(&self, m: usize) -> usize {
        self.assignment[m]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.modes];
        for &g in &self.assignment {
            sizes[g] += 1;
        }
        sizes
    }

    /// The `k`-th mode (ascending) that antenna `m` does not use natively.
    pub fn foreign_mode(&self, m: usize, k: usize) -> usize {
        let native = self.assignment[m];
        if k < native {
            k
        } else {
            k + 1
        }
    }
}

/// Column `m` of the result is column `m` of mode `g(m)`.
pub fn composite_channel(tensor: &ChannelTensor, map: &GroupMap) -> Result<DMatrix<Complex64>> {
    let geometry = tensor.geometry();
    if map.tx_antennas() != geometry.tx_antennas() || map.modes() != tensor.modes() {
        return Err(Error::invalid(format!(
            "group map (M = {}, P = {}) does not match tensor (M = {}, P = {})",
            map.tx_antennas(),
            map.modes(),
            geometry.tx_antennas(),
            tensor.modes()
        )));
    }
    Ok(DMatrix::from_fn(geometry.rx_antennas(), geometry.tx_antennas(), |n, m| {
        tensor.get(n, m, map.mode_of(m))
    }))
}

/// `M x M` pilot block with `X X^H = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix(DMatrix<Complex64>);

impl PilotMatrix {
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("pilot matrix must be square and non-empty"));
        }
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `||X X^H - I||_F`.
    pub fn unitarity_residual(&self) -> f64 {
        let m = self.len();
        (&self.0 * self.0.adjoint() - DMatrix::<Complex64>::identity(m, m)).norm()
    }
}

/// Unitary DFT pilots, `X[r, c] = e^{-j 2 pi r c / M} / sqrt(M)`.
pub fn make_pilots(tx_antennas: usize) -> Result<PilotMatrix> {
    if tx_antennas == 0 {
        return Err(Error::invalid("pilot length must be at least 1"));
    }
    let m = tx_antennas as f64;
    let scale = m.sqrt().recip();
    PilotMatrix::from_matrix(DMatrix::from_fn(tx_antennas, tx_antennas, |r, c| {
        // Reduce the exponent first so large M keeps full phase precision.
        let k = (r * c) % tx_antennas;
        Complex64::cis(-std::f64::consts::TAU * k as f64 / m) * scale
    }))
}

/// Noise variance for unit-power symbols: `SNR_dB = 10 log10(1 / sigma^2)`.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// `Y = H X + W` with i.i.d. `CN(0, sigma^2)` noise drawn from `seed`.
pub fn transmit(
    channel: &DMatrix<Complex64>,
    pilots: &PilotMatrix,
    snr_db: f64,
    seed: u64,
) -> Result<DMatrix<Complex64>> {
    if channel.ncols() != pilots.len() {
        return Err(Error::invalid(format!(
            "channel has {} columns but the pilot block is {}x{}",
            channel.ncols(),
            pilots.len(),
            pilots.len()
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("SNR must not be NaN"));
    }
    let sigma = noise_variance(snr_db).sqrt();
    let mut received = channel * pilots.matrix();
    if sigma > 0.0 {
        let mut rng = seed::rng(seed);
        // Column-major draw order.
        for z in received.iter_mut() {
            *z += complex_normal(&mut rng) * sigma;
        }
    }
    Ok(received)
}

/// Sample estimate of `R_H = E[H^H H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCovariance {
    matrix: DMatrix<Complex64>,
    sample_count: usize,
}

impl ChannelCovariance {
    /// Wraps a known covariance; it is Hermitian-symmetrized.
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("covariance must be square and non-empty"));
        }
        Ok(Self { matrix: hermitian_part(&matrix), sample_count: 0 })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }
}

fn hermitian_part(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

fn gram_sum(samples: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    // Pairwise split keeps the summation tree, and thus the result, fixed
    // regardless of how rayon schedules the halves.
    if samples.len() <= 8 {
        let mut acc = samples[0].ad_mul(&samples[0]);
        for h in &samples[1..] {
            acc += h.ad_mul(h);
        }
        return acc;
    }
    let (left, right) = samples.split_at(samples.len() / 2);
    let (a, b) = rayon::join(|| gram_sum(left), || gram_sum(right));
    a + b
}

/// `R_H = (1/S) sum_s H_s^H H_s`, Hermitian-symmetrized.
pub fn estimate_covariance(samples: &[DMatrix<Complex64>]) -> Result<ChannelCovariance> {
    let first = samples.first().ok_or_else(|| Error::invalid("covariance needs at least one sample"))?;
    if let Some(h) = samples.iter().find(|h| h.shape() != first.shape()) {
        return Err(Error::invalid(format!(
            "sample shapes differ: {:?} vs {:?}",
            h.shape(),
            first.shape()
        )));
    }
    let sum = gram_sum(samples);
    let matrix = hermitian_part(&(sum / Complex64::new(samples.len() as f64, 0.0)));
    Ok(ChannelCovariance { matrix, sample_count: samples.len() })
}

/// Precomputed LMMSE filter `G = (X^H R X + sigma^2 N I)^{-1} X^H R`, so that
/// `H_es = Y G`.
#[derive(Debug, Clone)]
pub struct LmmseEstimator {
    filter: DMatrix<Complex64>,
    condition: f64,
    noise_variance: f64,
}

impl LmmseEstimator {
    pub fn new(
        pilots: &PilotMatrix,
        covariance: &ChannelCovariance,
        noise_variance: f64,
        rx_antennas: usize,
    ) -> Result<Self> {
        let m = pilots.len();
        if covariance.matrix.nrows() != m {
            return Err(Error::invalid(format!(
                "covariance is {0}x{0} but pilots are {m}x{m}",
                covariance.matrix.nrows()
            )));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::invalid(format!("noise variance must be finite and >= 0, got {noise_variance}")));
        }
        let x = pilots.matrix();
        let rhs = x.ad_mul(&covariance.matrix);
        let mut system = hermitian_part(&(&rhs * x));
        let loading = noise_variance * rx_antennas as f64;
        for i in 0..m {
            system[(i, i)] += Complex64::new(loading, 0.0);
        }

        let eigen = system.clone().symmetric_eigenvalues();
        let (lo, hi) = eigen.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::NumericalFailure { context: "LMMSE system matrix".into(), condition });
        }
        let cholesky = system
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure { context: "LMMSE Cholesky factorization".into(), condition })?;
        Ok(Self { filter: cholesky.solve(&rhs), condition, noise_variance })
    }

    pub fn filter(&self) -> &DMatrix<Complex64> {
        &self.filter
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn apply(&self, received: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        if received.ncols() != self.filter.nrows() {
            return Err(Error::invalid(format!(
                "received block has {} columns, expected {}",
                received.ncols(),
                self.filter.nrows()
            )));
        }
        Ok(received * &self.filter)
    }
}

/// `H_es = Y (X^H R_H X + sigma^2 N I)^{-1} X^H R_H`.
pub fn lmmse_estimate(
    received: &DMatrix<Complex64>,
    pilots: &PilotMatrix,
    covariance: &ChannelCovariance,
    noise_variance: f64,
    rx_antennas: usize,
) -> Result<DMatrix<Complex64>> {
    LmmseEstimator::new(pilots, covariance, noise_variance, rx_antennas)?.apply(received)
}

/// `H_ls = Y X^{-1}`.
pub fn ls_estimate(received: &DMatrix<Complex64>, pilots: &PilotMatrix) -> Result<DMatrix<Complex64>> {
    if received.ncols() != pilots.len() {
        return Err(Error::invalid(format!(
            "received block has {} columns, expected {}",
            received.ncols(),
            pilots.len()
        )));
    }
    // H X = Y  <=>  X^T H^T = Y^T
    let lu = pilots.matrix().transpose().lu();
    let solution = lu
        .solve(&received.transpose())
        .ok_or_else(|| Error::NumericalFailure { context: "LS pilot inversion".into(), condition: f64::INFINITY })?;
    Ok(solution.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Lmmse,
    Ls,
}

/// An estimated composite channel and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeEstimate {
    pub matrix: DMatrix<Complex64>,
    pub group_map: GroupMap,
    pub snr_db: f64,
    pub estimator: EstimatorKind,
}

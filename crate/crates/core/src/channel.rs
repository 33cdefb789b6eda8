//! Clustered multipath channels with per-mode radiation pattern gains.
//!
//! For radiation mode `p` the channel between an `M`-element transmit ULA and
//! an `N`-element receive ULA is
//!
//! ```text
//! H^p = 1/sqrt(MN) * sum_{i,j} alpha_ij * b_p(theta_ij, phi_ij) * a_r(theta_ij) * a_t(theta_ij)^H
//! ```
//!
//! where the steering vectors depend on azimuth only and the elevation enters
//! through the pattern gain `b_p`. The propagation state (`PathSet`) is shared
//! by all modes, so two slices of a [`ChannelTensor`] differ only through `b_p`.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::{self, complex_normal};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Side length of the angular grid used to normalize pattern power.
pub const PATTERN_GRID: usize = 64;

/// Uniform linear arrays on both ends of the link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    tx_antennas: usize,
    rx_antennas: usize,
    spacing: f64,
    carrier: f64,
    chi: f64,
}

impl ArrayGeometry {
    pub fn new(tx_antennas: usize, rx_antennas: usize, spacing: f64, carrier: f64) -> Result<Self> {
        if tx_antennas == 0 || rx_antennas == 0 {
            return Err(Error::invalid("antenna counts must be at least 1"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) || !(carrier > 0.0 && carrier.is_finite()) {
            return Err(Error::invalid(format!(
                "spacing ({spacing}) and carrier ({carrier}) must be positive and finite"
            )));
        }
        Ok(Self {
            tx_antennas,
            rx_antennas,
            spacing,
            carrier,
            chi: TAU * spacing * carrier / SPEED_OF_LIGHT,
        })
    }

    /// Half-wavelength spacing at `carrier`, i.e. `chi = pi`.
    pub fn half_wavelength(tx_antennas: usize, rx_antennas: usize, carrier: f64) -> Result<Self> {
        Self::new(tx_antennas, rx_antennas, SPEED_OF_LIGHT / (2.0 * carrier), carrier)
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx_antennas
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx_antennas
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn carrier(&self) -> f64 {
        self.carrier
    }

    /// Phase constant `2 pi d f / c`.
    pub fn chi(&self) -> f64 {
        self.chi
    }
}

/// ULA response `[1, e^{-j chi sin(theta)}, ..., e^{-j chi (len-1) sin(theta)}]`.
pub fn steering_vector(geometry: &ArrayGeometry, theta: f64, length: usize) -> Result<DVector<Complex64>> {
    if !theta.is_finite() {
        return Err(Error::invalid(format!("steering angle must be finite, got {theta}")));
    }
    if length == 0 {
        return Err(Error::invalid("steering vector length must be at least 1"));
    }
    let step = -geometry.chi * theta.sin();
    Ok(DVector::from_fn(length, |k, _| Complex64::cis(step * k as f64)))
}

/// Propagation paths of one channel realization, stored cluster-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    clusters: usize,
    rays_per_cluster: usize,
    gains: Vec<Complex64>,
    azimuth: Vec<f64>,
    elevation: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub gain: Complex64,
    pub azimuth: f64,
    pub elevation: f64,
}

impl PathSet {
    pub fn new(
        clusters: usize,
        rays_per_cluster: usize,
        gains: Vec<Complex64>,
        azimuth: Vec<f64>,
        elevation: Vec<f64>,
    ) -> Result<Self> {
        let count = clusters * rays_per_cluster;
        if clusters == 0 || rays_per_cluster == 0 {
            return Err(Error::invalid("path set needs at least one cluster and one ray"));
        }
        if gains.len() != count || azimuth.len() != count || elevation.len() != count {
            return Err(Error::invalid(format!(
                "path arrays must hold {count} entries (got {}, {}, {})",
                gains.len(),
                azimuth.len(),
                elevation.len()
            )));
        }
        if let Some(t) = azimuth.iter().find(|t| !(0.0..=TAU).contains(*t)) {
            return Err(Error::invalid(format!("azimuth {t} outside [0, 2pi]")));
        }
        if let Some(e) = elevation.iter().find(|e| !(0.0..=PI).contains(*e)) {
            return Err(Error::invalid(format!("elevation {e} outside [0, pi]")));
        }
        if gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("path gains must be finite"));
        }
        Ok(Self { clusters, rays_per_cluster, gains, azimuth, elevation })
    }

    pub fn single_ray(gain: Complex64, azimuth: f64, elevation: f64) -> Result<Self> {
        Self::new(1, 1, vec![gain], vec![azimuth], vec![elevation])
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn rays_per_cluster(&self) -> usize {
        self.rays_per_cluster
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn gains_mut(&mut self) -> &mut [Complex64] {
        &mut self.gains
    }

    pub fn azimuth(&self) -> &[f64] {
        &self.azimuth
    }

    pub fn elevation(&self) -> &[f64] {
        &self.elevation
    }

    pub fn ray(&self, cluster: usize, ray: usize) -> Ray {
        let i = cluster * self.rays_per_cluster + ray;
        Ray { gain: self.gains[i], azimuth: self.azimuth[i], elevation: self.elevation[i] }
    }

    pub fn rays(&self) -> impl Iterator<Item = Ray> + '_ {
        (0..self.len()).map(|i| Ray {
            gain: self.gains[i],
            azimuth: self.azimuth[i],
            elevation: self.elevation[i],
        })
    }
}

/// Draws a cluster-ray path set.
///
/// Cluster centres are uniform on `[0, 2pi) x [0, pi]`; each ray is offset by
/// an independent uniform draw in `[-spread, spread]` on both axes. Azimuth
/// wraps around, elevation is clamped. Gains are unit-variance circular
/// complex Gaussians.
pub fn sample_paths(seed: u64, clusters: usize, rays_per_cluster: usize, spread: f64) -> Result<PathSet> {
    if clusters == 0 || rays_per_cluster == 0 {
        return Err(Error::invalid("path set needs at least one cluster and one ray"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::invalid(format!("angular spread must be finite and >= 0, got {spread}")));
    }
    let mut rng = seed::rng(seed);
    let count = clusters * rays_per_cluster;
    let mut azimuth = Vec::with_capacity(count);
    let mut elevation = Vec::with_capacity(count);
    let mut gains = Vec::with_capacity(count);
    for _ in 0..clusters {
        let centre_az = rng.random::<f64>() * TAU;
        let centre_el = rng.random::<f64>() * PI;
        for _ in 0..rays_per_cluster {
            let d_az = spread * (2.0 * rng.random::<f64>() - 1.0);
            let d_el = spread * (2.0 * rng.random::<f64>() - 1.0);
            azimuth.push((centre_az + d_az).rem_euclid(TAU));
            elevation.push((centre_el + d_el).clamp(0.0, PI));
            gains.push(complex_normal(&mut rng));
        }
    }
    PathSet::new(clusters, rays_per_cluster, gains, azimuth, elevation)
}

/// Radiation pattern gains as truncated 2-D Fourier series, one per mode:
/// `b_p(theta, phi) = sum_{u<U_theta, v<U_phi} c[p,u,v] e^{j(u theta + v phi)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternGainModel {
    modes: usize,
    order_theta: usize,
    order_phi: usize,
    coeffs: Vec<Complex64>,
    seed: Option<u64>,
}

impl PatternGainModel {
    /// Wraps raw coefficients, laid out `[p][u][v]`. No normalization.
    pub fn from_coefficients(
        modes: usize,
        order_theta: usize,
        order_phi: usize,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        if modes == 0 || order_theta == 0 || order_phi == 0 {
            return Err(Error::invalid("pattern model needs >= 1 mode and Fourier order >= 1"));
        }
        if coeffs.len() != modes * order_theta * order_phi {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                modes * order_theta * order_phi,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("pattern coefficients must be finite"));
        }
        Ok(Self { modes, order_theta, order_phi, coeffs, seed: None })
    }

    /// Every mode has gain 1 in every direction.
    pub fn isotropic(modes: usize) -> Result<Self> {
        Self::from_coefficients(modes, 1, 1, vec![Complex64::new(1.0, 0.0); modes])
    }

    /// Seeded random patterns.
    ///
    /// All modes share one random angular pattern; mode `p` applies its own
    /// unit-modulus complex gain and adds an independent perturbation whose
    /// coefficient variance is `diversity` times that of the shared part.
    /// Each mode is then normalized to unit average power on the
    /// [`PATTERN_GRID`] grid. `diversity = 0` gives patterns that agree up to a
    /// complex constant; large values approach independent patterns.
    pub fn random(
        seed: u64,
        modes: usize,
        order_theta: usize,
        order_phi: usize,
        diversity: f64,
    ) -> Result<Self> {
        if !(diversity >= 0.0 && diversity.is_finite()) {
            return Err(Error::invalid(format!("mode diversity must be finite and >= 0, got {diversity}")));
        }
        let terms = order_theta * order_phi;
        let mut rng = seed::rng(seed);
        let shared: Vec<Complex64> = (0..terms).map(|_| complex_normal(&mut rng)).collect();
        let weight = diversity.sqrt();
        let mut coeffs = Vec::with_capacity(modes * terms);
        for _ in 0..modes {
            let rotation = Complex64::cis(TAU * rng.random::<f64>());
            for s in &shared {
                coeffs.push(rotation * (s + weight * complex_normal(&mut rng)));
            }
        }
        let mut model = Self::from_coefficients(modes, order_theta, order_phi, coeffs)?;
        model.normalize()?;
        model.seed = Some(seed);
        Ok(model)
    }

    /// Rescales each mode to unit average power on the angular grid.
    pub fn normalize(&mut self) -> Result<()> {
        for p in 0..self.modes {
            let power = self.grid_power(p)?;
            if !(power > 0.0) {
                return Err(Error::invalid(format!("mode {p} has zero pattern power")));
            }
            let scale = power.sqrt().recip();
            let terms = self.order_theta * self.order_phi;
            self.coeffs[p * terms..(p + 1) * terms].iter_mut().for_each(|c| *c *= scale);
        }
        Ok(())
    }

    /// Mean of `|b_p|^2` over the midpoint grid of [`PATTERN_GRID`]^2 angles.
    pub fn grid_power(&self, p: usize) -> Result<f64> {
        let g = PATTERN_GRID as f64;
        let mut total = 0.0;
        for i in 0..PATTERN_GRID {
            let theta = TAU * (i as f64 + 0.5) / g;
            for k in 0..PATTERN_GRID {
                let phi = PI * (k as f64 + 0.5) / g;
                total += self.gain(p, theta, phi)?.norm_sqr();
            }
        }
        Ok(total / (g * g))
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn order_theta(&self) -> usize {
        self.order_theta
    }

    pub fn order_phi(&self) -> usize {
        self.order_phi
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coefficient(&self, p: usize, u: usize, v: usize) -> Complex64 {
        self.coeffs[(p * self.order_theta + u) * self.order_phi + v]
    }

    /// Gain of mode `p` (0-based) toward `(theta, phi)`.
    pub fn gain(&self, p: usize, theta: f64, phi: f64) -> Result<Complex64> {
        if p >= self.modes {
            return Err(Error::invalid(format!("mode index {p} out of range (P = {})", self.modes)));
        }
        let terms = self.order_theta * self.order_phi;
        let rows = &self.coeffs[p * terms..(p + 1) * terms];
        let step_phi = Complex64::cis(phi);
        let step_theta = Complex64::cis(theta);
        let mut rot_theta = Complex64::new(1.0, 0.0);
        let mut total = Complex64::new(0.0, 0.0);
        for row in rows.chunks_exact(self.order_phi) {
            // Horner in e^{j phi}.
            let inner = row.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * step_phi + c);
            total += rot_theta * inner;
            rot_theta *= step_theta;
        }
        Ok(total)
    }
}

/// True channels of every radiation mode for one propagation state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    geometry: ArrayGeometry,
    slices: Vec<DMatrix<Complex64>>,
}

impl ChannelTensor {
    pub fn from_slices(geometry: ArrayGeometry, slices: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::invalid("channel tensor needs at least one mode"));
        }
        let shape = (geometry.rx_antennas, geometry.tx_antennas);
        if let Some(s) = slices.iter().find(|s| s.shape() != shape) {
            return Err(Error::invalid(format!("slice shape {:?} does not match {shape:?}", s.shape())));
        }
        Ok(Self { geometry, slices })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn modes(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, p: usize) -> &DMatrix<Complex64> {
        &self.slices[p]
    }

    pub fn slices(&self) -> &[DMatrix<Complex64>] {
        &self.slices
    }

    pub fn get(&self, rx: usize, tx: usize, p: usize) -> Complex64 {
        self.slices[p][(rx, tx)]
    }
}

/// Channel matrix (`N x M`) of mode `p`.
pub fn generate_channel(
    geometry: &ArrayGeometry,
    paths: &PathSet,
    gains: &PatternGainModel,
    p: usize,
) -> Result<DMatrix<Complex64>> {
    if p >= gains.modes() {
        return Err(Error::invalid(format!("mode index {p} out of range (P = {})", gains.modes())));
    }
    let (n, m, rays) = (geometry.rx_antennas, geometry.tx_antennas, paths.len());
    let norm = ((m * n) as f64).sqrt().recip();
    let mut weights = Vec::with_capacity(rays);
    for ray in paths.rays() {
        weights.push(ray.gain * gains.gain(p, ray.azimuth, ray.elevation)? * norm);
    }
    let phase = |k: usize, r: usize| -geometry.chi * k as f64 * paths.azimuth[r].sin();
    let rx = DMatrix::from_fn(n, rays, |k, r| Complex64::cis(phase(k, r)) * weights[r]);
    let tx = DMatrix::from_fn(m, rays, |k, r| Complex64::cis(phase(k, r)));
    Ok(rx * tx.adjoint())
}

pub fn generate_all_modes(
    geometry: &ArrayGeometry,
    paths: &PathSet,
    gains: &PatternGainModel,
) -> Result<ChannelTensor> {
    let slices = (0..gains.modes())
        .map(|p| generate_channel(geometry, paths, gains, p))
        .collect::<Result<Vec<_>>>()?;
    ChannelTensor::from_slices(*geometry, slices)
}

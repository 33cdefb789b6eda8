use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ArrayGeometry, SPEED_OF_LIGHT};
use crate::checksum::checksum64;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;

/// Which regressor an experiment trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Prnet,
    Dnn,
    Both,
}

impl ModelKind {
    /// The concrete models this selector expands to.
    pub fn members(self) -> &'static [ModelKind] {
        match self {
            ModelKind::Prnet => &[ModelKind::Prnet],
            ModelKind::Dnn => &[ModelKind::Dnn],
            ModelKind::Both => &[ModelKind::Prnet, ModelKind::Dnn],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Prnet => "prnet",
            ModelKind::Dnn => "dnn",
            ModelKind::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "prnet" => Ok(ModelKind::Prnet),
            "dnn" => Ok(ModelKind::Dnn),
            "both" => Ok(ModelKind::Both),
            other => Err(Error::config(format!("unknown model {other:?}; expected prnet, dnn or both"))),
        }
    }
}

/// Flat key-value experiment description; every run stores it next to its
/// results.
///
/// Angles are in degrees, frequencies in Hz, lengths in metres. A missing
/// `spacing_m` means half a wavelength; a missing `baseline_hidden` means
/// equal-width layers sized for parameter parity with the complex network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub modes: usize,
    pub clusters: usize,
    pub rays_per_cluster: usize,
    pub angular_spread_deg: f64,
    pub carrier_hz: f64,
    pub spacing_m: Option<f64>,
    pub fourier_order: usize,
    pub mode_diversity: f64,
    pub calibration_samples: usize,
    pub samples: usize,
    pub test_numerator: u32,
    pub test_denominator: u32,
    pub train_snr_db: f64,
    pub hidden: Vec<usize>,
    pub baseline_hidden: Option<Vec<usize>>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub snr_db: Vec<f64>,
    pub eval_snr_db: f64,
    pub antennas: Vec<usize>,
    pub mode_counts: Vec<usize>,
    pub model: ModelKind,
    pub model_file: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl ExperimentConfig {
    /// Small enough to train in minutes.
    pub fn desk_scale() -> Self {
        Self {
            tx_antennas: 16,
            rx_antennas: 4,
            modes: 4,
            clusters: 4,
            rays_per_cluster: 8,
            angular_spread_deg: 7.5,
            carrier_hz: 2.5e9,
            spacing_m: None,
            fourier_order: 4,
            mode_diversity: 0.01,
            calibration_samples: 1000,
            samples: 2048,
            test_numerator: 2,
            test_denominator: 5,
            train_snr_db: 25.0,
            hidden: vec![128, 128, 128],
            baseline_hidden: None,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 150,
            seed: 1,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            eval_snr_db: 30.0,
            antennas: vec![8, 16],
            mode_counts: vec![2, 4],
            model: ModelKind::Prnet,
            model_file: None,
        }
    }

    /// M = 64, N = 8, P = 8 with 10 clusters of 20 rays and 10240 samples.
    pub fn paper_scale() -> Self {
        Self {
            tx_antennas: 64,
            rx_antennas: 8,
            modes: 8,
            clusters: 10,
            rays_per_cluster: 20,
            calibration_samples: 4000,
            samples: 10240,
            hidden: vec![512, 512, 512],
            epochs: 500,
            antennas: vec![16, 32, 48, 64],
            mode_counts: vec![2, 4, 6, 8],
            ..Self::desk_scale()
        }
    }

    /// Keys missing from `text` take desk-scale defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_over(text, &Self::desk_scale())
    }

    /// Keys missing from `text` take their values from `base`.
    pub fn from_toml_over(text: &str, base: &Self) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(&base.to_toml()).expect("serialized config parses");
        let overlay: toml::Table = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        table.extend(overlay);
        let config: Self = table.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// Identifies the configuration a result came from.
    pub fn checksum(&self) -> u64 {
        checksum64(self.to_toml().as_bytes())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        match self.spacing_m {
            Some(d) => ArrayGeometry::new(self.tx_antennas, self.rx_antennas, d, self.carrier_hz),
            None => ArrayGeometry::half_wavelength(self.tx_antennas, self.rx_antennas, self.carrier_hz),
        }
    }

    pub fn spread_rad(&self) -> f64 {
        self.angular_spread_deg.to_radians()
    }

    pub fn test_size(&self) -> usize {
        (self.samples as u64 * self.test_numerator as u64 / self.test_denominator as u64) as usize
    }

    pub fn input_len(&self) -> usize {
        self.tx_antennas * self.rx_antennas
    }

    pub fn output_len(&self) -> usize {
        self.tx_antennas * self.rx_antennas * (self.modes - 1)
    }

    /// `[MN, hidden.., MN(P-1)]`.
    pub fn prnet_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_len()];
        dims.extend(&self.hidden);
        dims.push(self.output_len());
        dims
    }

    /// Real hidden widths of the baseline.
    pub fn baseline_widths(&self) -> Vec<usize> {
        match &self.baseline_hidden {
            Some(h) => h.clone(),
            None => {
                let target = complex_parameter_count(&self.prnet_dims());
                let width = parity_width(2 * self.input_len(), 2 * self.output_len(), self.hidden.len(), target);
                vec![width; self.hidden.len()]
            }
        }
    }

    /// `[2MN, widths.., 2MN(P-1)]`.
    pub fn baseline_dims(&self) -> Vec<usize> {
        let mut dims = vec![2 * self.input_len()];
        dims.extend(self.baseline_widths());
        dims.push(2 * self.output_len());
        dims
    }

    /// Real parameter counts of the complex network and the baseline.
    pub fn parameter_counts(&self) -> (usize, usize) {
        (complex_parameter_count(&self.prnet_dims()), real_parameter_count(&self.baseline_dims()))
    }

    pub fn train_config(&self, shuffle_seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            shuffle_seed,
        }
    }

    /// Checks every field a run may touch.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::config(msg));
        if self.tx_antennas == 0 || self.rx_antennas == 0 {
            return fail("antenna counts must be positive".into());
        }
        if self.modes == 0 {
            return fail("modes must be >= 1".into());
        }
        if self.modes > self.tx_antennas {
            return fail(format!("modes ({}) must not exceed tx antennas ({})", self.modes, self.tx_antennas));
        }
        if self.clusters == 0 || self.rays_per_cluster == 0 {
            return fail("clusters and rays_per_cluster must be positive".into());
        }
        if !(self.angular_spread_deg >= 0.0 && self.angular_spread_deg.is_finite()) {
            return fail(format!("angular_spread_deg must be finite and >= 0, got {}", self.angular_spread_deg));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return fail(format!("carrier_hz must be positive, got {}", self.carrier_hz));
        }
        if let Some(d) = self.spacing_m {
            if !(d > 0.0 && d.is_finite()) {
                return fail(format!("spacing_m must be positive, got {d}"));
            }
            if d > 1e3 * SPEED_OF_LIGHT / self.carrier_hz {
                return fail(format!("spacing_m = {d} is implausibly large for the carrier"));
            }
        }
        if self.fourier_order == 0 {
            return fail("fourier_order must be >= 1".into());
        }
        if !(self.mode_diversity >= 0.0 && self.mode_diversity.is_finite()) {
            return fail(format!("mode_diversity must be finite and >= 0, got {}", self.mode_diversity));
        }
        if self.calibration_samples == 0 {
            return fail("calibration_samples must be >= 1".into());
        }
        if self.samples == 0 {
            return fail("samples must be >= 1".into());
        }
        if self.test_denominator == 0 || self.test_numerator >= self.test_denominator {
            return fail(format!(
                "test fraction {}/{} must lie in [0, 1)",
                self.test_numerator, self.test_denominator
            ));
        }
        if self.test_size() == 0 {
            return fail(format!("{} samples leave an empty test split", self.samples));
        }
        if self.samples - self.test_size() < self.batch_size {
            return fail(format!(
                "training split of {} is smaller than batch_size {}",
                self.samples - self.test_size(),
                self.batch_size
            ));
        }
        check_snr("train_snr_db", self.train_snr_db)?;
        check_snr("eval_snr_db", self.eval_snr_db)?;
        for &s in &self.snr_db {
            check_snr("snr_db", s)?;
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("hidden must list at least one positive width".into());
        }
        if let Some(h) = &self.baseline_hidden {
            if h.is_empty() || h.contains(&0) {
                return fail("baseline_hidden must list at least one positive width".into());
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        check_unique("antennas", &self.antennas)?;
        check_unique("mode_counts", &self.mode_counts)?;
        check_unique_f64("snr_db", &self.snr_db)?;
        Ok(())
    }
}

fn check_snr(name: &str, v: f64) -> Result<()> {
    // Dataset headers store SNR in centi-dB as i32.
    if v.is_nan() || (v.is_finite() && v.abs() > 1e6) || v == f64::NEG_INFINITY {
        return Err(Error::config(format!("{name} value {v} out of range")));
    }
    Ok(())
}

fn check_unique(name: &str, values: &[usize]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &v in values {
        if !seen.insert(v) {
            return Err(Error::config(format!("duplicate value {v} in {name}")));
        }
    }
    Ok(())
}

fn check_unique_f64(name: &str, values: &[f64]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &v in values {
        if !seen.insert(v.to_bits()) {
            return Err(Error::config(format!("duplicate value {v} in {name}")));
        }
    }
    Ok(())
}

/// Real scalars in a complex network with the given widths.
pub fn complex_parameter_count(dims: &[usize]) -> usize {
    2 * real_parameter_count(dims)
}

/// Real scalars in a real network with the given widths.
pub fn real_parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Width `h` of `layers` equal hidden layers between `n_in` and `n_out` real
/// units whose parameter count is closest to `target`.
pub fn parity_width(n_in: usize, n_out: usize, layers: usize, target: usize) -> usize {
    let count = |h: usize| {
        let mut dims = vec![n_in];
        dims.extend(std::iter::repeat_n(h, layers));
        dims.push(n_out);
        real_parameter_count(&dims)
    };
    // count is increasing in h; binary search the crossing.
    let (mut lo, mut hi) = (1usize, 1usize);
    while count(hi) < target {
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if count(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gap = |h: usize| (count(h) as f64 / target as f64).ln().abs();
    if gap(lo) <= gap(hi) {
        lo
    } else {
        hi
    }
}

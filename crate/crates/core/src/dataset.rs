//! Training samples: grouped-pilot LMMSE estimates paired with the noiseless
//! channels of every non-native mode.
//!
//! Dataset file layout (little-endian):
//!
//! ```text
//! magic            4 bytes  "PRNC"
//! version          u32
//! M, N, P, S       u32 x 4
//! test fraction    u32 numerator, u32 denominator
//! train SNR        i32      centi-dB (millibel); i32::MAX encodes +inf
//! master seed      u64
//! layout version   u32
//! records          S x (MN + MN(P-1)) complex values as (re, im) f32 pairs,
//!                  each record h_es then h_pre
//! checksum         u64      over every preceding byte
//! ```

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::binio::{ByteReader, ByteWriter};
use crate::channel::{generate_all_modes, sample_paths, ArrayGeometry, ChannelTensor, PatternGainModel};
use crate::checksum::checksum64;
use crate::error::{Error, Result};
use crate::estimation::{
    composite_channel, estimate_covariance, make_pilots, noise_variance, partition_antennas, transmit,
    ChannelCovariance, GroupMap, LmmseEstimator, PilotMatrix,
};
use crate::experiment::ExperimentConfig;
use crate::nn::ComplexBatch;
use crate::seed::{self, stream};

pub const MAGIC: [u8; 4] = *b"PRNC";
pub const VERSION: u32 = 1;
pub const LAYOUT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 16 + 8 + 4 + 8 + 4;

/// Positions of channel entries inside `h_es` and `h_pre`.
///
/// `h_es[m N + n] = H_es[n, m]` and `h_pre[(k M + m) N + n] = H^{q}[n, m]`
/// where `q` is the `k`-th non-native mode of antenna `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorLayout {
    rx_antennas: usize,
    group_map: GroupMap,
}

/// Where a tensor entry lives after vectorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Estimated(usize),
    Extrapolated(usize),
}

impl VectorLayout {
    pub fn new(group_map: GroupMap, rx_antennas: usize) -> Result<Self> {
        if rx_antennas == 0 {
            return Err(Error::invalid("layout needs at least one receive antenna"));
        }
        Ok(Self { rx_antennas, group_map })
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx_antennas
    }

    pub fn tx_antennas(&self) -> usize {
        self.group_map.tx_antennas()
    }

    pub fn modes(&self) -> usize {
        self.group_map.modes()
    }

    pub fn group_map(&self) -> &GroupMap {
        &self.group_map
    }

    pub fn es_len(&self) -> usize {
        self.tx_antennas() * self.rx_antennas
    }

    pub fn pre_len(&self) -> usize {
        self.es_len() * (self.modes() - 1)
    }

    pub fn es_index(&self, n: usize, m: usize) -> usize {
        m * self.rx_antennas + n
    }

    pub fn pre_index(&self, n: usize, m: usize, k: usize) -> usize {
        (k * self.tx_antennas() + m) * self.rx_antennas + n
    }

    /// Slot of `H^p[n, m]`.
    pub fn slot(&self, n: usize, m: usize, p: usize) -> Slot {
        let native = self.group_map.mode_of(m);
        if p == native {
            Slot::Estimated(self.es_index(n, m))
        } else {
            let k = if p < native { p } else { p - 1 };
            Slot::Extrapolated(self.pre_index(n, m, k))
        }
    }

    /// Column-major `vec` of an `N x M` matrix.
    pub fn vectorize_es(&self, h: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
        if h.shape() != (self.rx_antennas, self.tx_antennas()) {
            return Err(Error::invalid(format!(
                "expected {}x{} matrix, got {:?}",
                self.rx_antennas,
                self.tx_antennas(),
                h.shape()
            )));
        }
        Ok(h.as_slice().to_vec())
    }

    /// Non-native entries of every mode in `h_pre` order.
    pub fn vectorize_pre(&self, tensor: &ChannelTensor) -> Result<Vec<Complex64>> {
        self.check_tensor(tensor)?;
        let (n_rx, m_tx) = (self.rx_antennas, self.tx_antennas());
        let mut out = Vec::with_capacity(self.pre_len());
        for k in 0..self.modes() - 1 {
            for m in 0..m_tx {
                let q = self.group_map.foreign_mode(m, k);
                for n in 0..n_rx {
                    out.push(tensor.get(n, m, q));
                }
            }
        }
        Ok(out)
    }

    /// Rebuilds the `P` mode slices from the two vectors.
    pub fn reassemble(&self, h_es: &[Complex64], h_pre: &[Complex64]) -> Result<Vec<DMatrix<Complex64>>> {
        if h_es.len() != self.es_len() || h_pre.len() != self.pre_len() {
            return Err(Error::invalid(format!(
                "expected vectors of length {} and {}, got {} and {}",
                self.es_len(),
                self.pre_len(),
                h_es.len(),
                h_pre.len()
            )));
        }
        let (n_rx, m_tx) = (self.rx_antennas, self.tx_antennas());
        Ok((0..self.modes())
            .map(|p| {
                DMatrix::from_fn(n_rx, m_tx, |n, m| match self.slot(n, m, p) {
                    Slot::Estimated(i) => h_es[i],
                    Slot::Extrapolated(i) => h_pre[i],
                })
            })
            .collect())
    }

    fn check_tensor(&self, tensor: &ChannelTensor) -> Result<()> {
        let g = tensor.geometry();
        if tensor.modes() != self.modes() || g.rx_antennas() != self.rx_antennas || g.tx_antennas() != self.tx_antennas() {
            return Err(Error::invalid("tensor dimensions do not match the layout"));
        }
        Ok(())
    }
}

/// One supervised pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Vectorized LMMSE estimate of the composite channel.
    pub h_es: Vec<Complex64>,
    /// Noiseless non-native channels.
    pub h_pre: Vec<Complex64>,
    pub seed: u64,
}

/// Everything fixed across the samples of one configuration: geometry, mode
/// patterns, grouping, pilots and the calibrated covariance.
#[derive(Debug, Clone)]
pub struct Pipeline {
    geometry: ArrayGeometry,
    gains: PatternGainModel,
    layout: VectorLayout,
    pilots: PilotMatrix,
    covariance: ChannelCovariance,
    clusters: usize,
    rays_per_cluster: usize,
    spread: f64,
    master_seed: u64,
}

impl Pipeline {
    /// Builds the pattern model from `derive(seed, GAIN_MODEL, 0)` and
    /// calibrates `R_H` on `calibration_samples` independent composite
    /// channels.
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let geometry = config.geometry()?;
        let gains = PatternGainModel::random(
            seed::derive(config.seed, stream::GAIN_MODEL, 0),
            config.modes,
            config.fourier_order,
            config.fourier_order,
            config.mode_diversity,
        )?;
        let group_map = partition_antennas(config.tx_antennas, config.modes)?;
        let layout = VectorLayout::new(group_map, config.rx_antennas)?;
        let pilots = make_pilots(config.tx_antennas)?;
        let mut pipeline = Self {
            geometry,
            gains,
            layout,
            pilots,
            covariance: ChannelCovariance::from_matrix(DMatrix::identity(config.tx_antennas, config.tx_antennas))?,
            clusters: config.clusters,
            rays_per_cluster: config.rays_per_cluster,
            spread: config.spread_rad(),
            master_seed: config.seed,
        };
        let composites = (0..config.calibration_samples as u64)
            .into_par_iter()
            .map(|i| pipeline.composite(seed::derive(config.seed, stream::CALIBRATION, i)))
            .collect::<Result<Vec<_>>>()?;
        pipeline.covariance = estimate_covariance(&composites)?;
        Ok(pipeline)
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn gains(&self) -> &PatternGainModel {
        &self.gains
    }

    pub fn layout(&self) -> &VectorLayout {
        &self.layout
    }

    pub fn pilots(&self) -> &PilotMatrix {
        &self.pilots
    }

    pub fn covariance(&self) -> &ChannelCovariance {
        &self.covariance
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Seed of sample `i`.
    pub fn sample_seed(&self, i: usize) -> u64 {
        seed::derive(self.master_seed, stream::SAMPLE, i as u64)
    }

    pub fn estimator(&self, snr_db: f64) -> Result<LmmseEstimator> {
        LmmseEstimator::new(&self.pilots, &self.covariance, noise_variance(snr_db), self.geometry.rx_antennas())
    }

    /// All-mode channel of the propagation state drawn from `sample_seed`.
    pub fn tensor(&self, sample_seed: u64) -> Result<ChannelTensor> {
        let paths = sample_paths(
            seed::derive(sample_seed, stream::PATHS, 0),
            self.clusters,
            self.rays_per_cluster,
            self.spread,
        )?;
        generate_all_modes(&self.geometry, &paths, &self.gains)
    }

    fn composite(&self, sample_seed: u64) -> Result<DMatrix<Complex64>> {
        composite_channel(&self.tensor(sample_seed)?, self.layout.group_map())
    }

    /// The estimated input vector for `tensor`, with noise from
    /// `derive(sample_seed, NOISE, 0)`. The same noise realization is scaled
    /// for every SNR.
    fn estimate(
        &self,
        tensor: &ChannelTensor,
        sample_seed: u64,
        snr_db: f64,
        estimator: &LmmseEstimator,
    ) -> Result<Vec<Complex64>> {
        let composite = composite_channel(tensor, self.layout.group_map())?;
        let received = transmit(&composite, &self.pilots, snr_db, seed::derive(sample_seed, stream::NOISE, 0))?;
        let mut h_es = self.layout.vectorize_es(&estimator.apply(&received)?)?;
        quantize(&mut h_es);
        Ok(h_es)
    }

    /// `estimator` must have been built for `snr_db`. Values are rounded to
    /// single precision so that stored and regenerated samples agree.
    pub fn build_sample(&self, sample_seed: u64, snr_db: f64, estimator: &LmmseEstimator) -> Result<Sample> {
        let tensor = self.tensor(sample_seed)?;
        let h_es = self.estimate(&tensor, sample_seed, snr_db, estimator)?;
        let mut h_pre = self.layout.vectorize_pre(&tensor)?;
        quantize(&mut h_pre);
        Ok(Sample { h_es, h_pre, seed: sample_seed })
    }

    /// Inputs of the given samples re-estimated at `snr_db`, as columns.
    pub fn inputs_at(&self, sample_seeds: &[u64], snr_db: f64) -> Result<ComplexBatch> {
        let estimator = self.estimator(snr_db)?;
        let columns = sample_seeds
            .par_iter()
            .map(|&s| self.estimate(&self.tensor(s)?, s, snr_db, &estimator))
            .collect::<Result<Vec<_>>>()?;
        ComplexBatch::from_columns(self.layout.es_len(), &columns)
    }

    /// Builds `config.samples` samples at the training SNR and splits them.
    pub fn build_dataset(&self, config: &ExperimentConfig) -> Result<Dataset> {
        let estimator = self.estimator(config.train_snr_db)?;
        let samples = (0..config.samples)
            .into_par_iter()
            .map(|i| self.build_sample(self.sample_seed(i), config.train_snr_db, &estimator))
            .collect::<Result<Vec<_>>>()?;
        let header = DatasetHeader {
            tx_antennas: config.tx_antennas,
            rx_antennas: config.rx_antennas,
            modes: config.modes,
            samples: config.samples,
            test_numerator: config.test_numerator,
            test_denominator: config.test_denominator,
            train_snr_centi_db: encode_snr(config.train_snr_db)?,
            master_seed: self.master_seed,
            layout_version: LAYOUT_VERSION,
        };
        Dataset::new(header, samples)
    }
}

fn quantize(v: &mut [Complex64]) {
    for z in v {
        *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
    }
}

fn encode_snr(snr_db: f64) -> Result<i32> {
    if snr_db == f64::INFINITY {
        return Ok(i32::MAX);
    }
    let scaled = (snr_db * 100.0).round();
    if !(scaled.is_finite() && scaled > i32::MIN as f64 && scaled < i32::MAX as f64) {
        return Err(Error::invalid(format!("SNR {snr_db} dB cannot be stored")));
    }
    Ok(scaled as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub modes: usize,
    pub samples: usize,
    pub test_numerator: u32,
    pub test_denominator: u32,
    pub train_snr_centi_db: i32,
    pub master_seed: u64,
    pub layout_version: u32,
}

impl DatasetHeader {
    pub fn train_snr_db(&self) -> f64 {
        if self.train_snr_centi_db == i32::MAX {
            f64::INFINITY
        } else {
            self.train_snr_centi_db as f64 / 100.0
        }
    }

    pub fn es_len(&self) -> usize {
        self.tx_antennas * self.rx_antennas
    }

    pub fn pre_len(&self) -> usize {
        self.es_len() * (self.modes - 1)
    }

    /// `floor(S * num / den)`.
    pub fn test_size(&self) -> usize {
        (self.samples as u64 * self.test_numerator as u64 / self.test_denominator as u64) as usize
    }

    fn record_bytes(&self) -> u64 {
        8 * (self.es_len() + self.pre_len()) as u64
    }
}

/// Samples plus the seeded train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl Dataset {
    /// The split is a permutation seeded from `derive(master_seed, SPLIT, 0)`;
    /// its first `test_size` entries form the test set. Both index lists are
    /// sorted.
    pub fn new(header: DatasetHeader, samples: Vec<Sample>) -> Result<Self> {
        if samples.len() != header.samples {
            return Err(Error::invalid(format!("header says {} samples, got {}", header.samples, samples.len())));
        }
        if header.modes == 0 || header.test_denominator == 0 || header.test_numerator > header.test_denominator {
            return Err(Error::invalid("invalid header"));
        }
        if let Some((i, _)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| s.h_es.len() != header.es_len() || s.h_pre.len() != header.pre_len())
        {
            return Err(Error::invalid(format!("sample {i} does not match the header dimensions")));
        }
        let (train, test) = split_indices(header.samples, header.test_size(), header.master_seed);
        Ok(Self { header, samples, train, test })
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }

    /// `(inputs, targets)` of the selected samples as batch columns.
    pub fn batches(&self, indices: &[usize]) -> Result<(ComplexBatch, ComplexBatch)> {
        let es: Vec<&[Complex64]> = indices.iter().map(|&i| self.samples[i].h_es.as_slice()).collect();
        let pre: Vec<&[Complex64]> = indices.iter().map(|&i| self.samples[i].h_pre.as_slice()).collect();
        Ok((
            ComplexBatch::from_columns(self.header.es_len(), &es)?,
            ComplexBatch::from_columns(self.header.pre_len(), &pre)?,
        ))
    }

    pub fn seeds(&self, indices: &[usize]) -> Vec<u64> {
        indices.iter().map(|&i| self.samples[i].seed).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut w = ByteWriter::with_capacity((HEADER_LEN + 8 + h.record_bytes() * h.samples as u64) as usize);
        w.bytes(&MAGIC);
        w.u32(VERSION);
        for v in [h.tx_antennas, h.rx_antennas, h.modes, h.samples] {
            w.u32(v as u32);
        }
        w.u32(h.test_numerator);
        w.u32(h.test_denominator);
        w.i32(h.train_snr_centi_db);
        w.u64(h.master_seed);
        w.u32(h.layout_version);
        for s in &self.samples {
            for z in s.h_es.iter().chain(&s.h_pre) {
                w.f32(z.re as f32);
                w.f32(z.im as f32);
            }
        }
        let sum = checksum64(w.as_slice());
        w.u64(sum);
        w.into_inner()
    }

    /// Parses and verifies a dataset file. Sample seeds are rederived from the
    /// master seed.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let total = bytes.len() as u64;
        if total < HEADER_LEN {
            return Err(Error::Truncated { expected: HEADER_LEN, actual: total });
        }
        let mut r = ByteReader::new(bytes);
        let magic: [u8; 4] = r.array()?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {:?}, expected \"PRNC\"", String::from_utf8_lossy(&magic)),
            });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format { offset: 4, message: format!("unsupported dataset version {version}") });
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let [tx_antennas, rx_antennas, modes, samples] = dims;
        if tx_antennas == 0 || rx_antennas == 0 || modes == 0 || modes > tx_antennas {
            return Err(Error::Format {
                offset: 8,
                message: format!("invalid dimensions M={tx_antennas} N={rx_antennas} P={modes}"),
            });
        }
        let test_numerator = r.u32()?;
        let test_denominator = r.u32()?;
        if test_denominator == 0 || test_numerator > test_denominator {
            return Err(Error::Format {
                offset: 24,
                message: format!("invalid test fraction {test_numerator}/{test_denominator}"),
            });
        }
        let train_snr_centi_db = r.i32()?;
        let master_seed = r.u64()?;
        let layout_version = r.u32()?;
        if layout_version != LAYOUT_VERSION {
            return Err(Error::Format {
                offset: HEADER_LEN - 4,
                message: format!("unsupported layout version {layout_version}"),
            });
        }
        let header = DatasetHeader {
            tx_antennas,
            rx_antennas,
            modes,
            samples,
            test_numerator,
            test_denominator,
            train_snr_centi_db,
            master_seed,
            layout_version,
        };

        let expected = header
            .record_bytes()
            .checked_mul(samples as u64)
            .and_then(|b| b.checked_add(HEADER_LEN + 8))
            .ok_or_else(|| Error::Format { offset: 8, message: "dimensions overflow".into() })?;
        if total < expected {
            return Err(Error::Truncated { expected, actual: total });
        }
        if total > expected {
            return Err(Error::Format { offset: expected, message: format!("{} trailing bytes", total - expected) });
        }
        let body = (expected - 8) as usize;
        let stored = u64::from_le_bytes(bytes[body..].try_into().expect("8 bytes"));
        if stored != checksum64(&bytes[..body]) {
            return Err(Error::Format { offset: body as u64, message: "checksum mismatch".into() });
        }

        let mut read_vec = |len: usize| -> Result<Vec<Complex64>> {
            (0..len)
                .map(|_| Ok(Complex64::new(r.finite_f32()? as f64, r.finite_f32()? as f64)))
                .collect()
        };
        let mut records = Vec::with_capacity(samples);
        for i in 0..samples {
            let h_es = read_vec(header.es_len())?;
            let h_pre = read_vec(header.pre_len())?;
            records.push(Sample { h_es, h_pre, seed: seed::derive(master_seed, stream::SAMPLE, i as u64) });
        }
        Dataset::new(header, records)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn checksum(&self) -> u64 {
        checksum64(&self.to_bytes())
    }
}

/// `(train, test)` index sets, each sorted.
pub fn split_indices(count: usize, test_size: usize, master_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut seed::rng(seed::derive(master_seed, stream::SPLIT, 0)));
    let mut test = order[..test_size].to_vec();
    let mut train = order[test_size..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

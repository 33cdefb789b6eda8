//! Experiment orchestration: configuration, the NMSE metric, training and
//! evaluation of a single setup, and sweeps over SNR, antenna count and mode
//! count.

pub mod config;
pub mod metrics;
pub mod sweep;

pub use config::{ExperimentConfig, ModelKind};
pub use metrics::{nmse, nmse_batch, to_db};
pub use sweep::{run_antenna_sweep, run_mode_sweep, run_snr_sweep, SweepAxis, SweepResult, SweepRow};

use crate::dataset::{Dataset, Pipeline};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{train, ComplexNetwork, RealNetwork, TrainReport};
use crate::seed::{self, stream};

/// A configuration with its pipeline and dataset.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub pipeline: Pipeline,
    pub dataset: Dataset,
}

impl Experiment {
    /// Calibrates the pipeline and generates the dataset.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        let pipeline = Pipeline::new(config)?;
        let dataset = pipeline.build_dataset(config)?;
        Ok(Self { config: config.clone(), pipeline, dataset })
    }

    /// Pairs a stored dataset with the configuration that produced it.
    pub fn with_dataset(config: &ExperimentConfig, dataset: Dataset) -> Result<Self> {
        let h = &dataset.header;
        let expected = (config.tx_antennas, config.rx_antennas, config.modes, config.samples, config.seed);
        if (h.tx_antennas, h.rx_antennas, h.modes, h.samples, h.master_seed) != expected
            || (h.test_numerator, h.test_denominator) != (config.test_numerator, config.test_denominator)
        {
            return Err(Error::config(format!(
                "dataset (M={}, N={}, P={}, S={}, seed={}) was not generated from this configuration",
                h.tx_antennas, h.rx_antennas, h.modes, h.samples, h.master_seed
            )));
        }
        if h.train_snr_db() != config.train_snr_db {
            return Err(Error::config(format!(
                "dataset train SNR {} dB differs from configured {} dB",
                h.train_snr_db(),
                config.train_snr_db
            )));
        }
        let pipeline = Pipeline::new(config)?;
        Ok(Self { config: config.clone(), pipeline, dataset })
    }

    /// Trains a fresh model on the training split; the test split at the
    /// training SNR is tracked per epoch. Both model kinds share the init and
    /// shuffle seeds.
    pub fn train(&self, kind: ModelKind) -> Result<(Checkpoint, TrainReport)> {
        let c = &self.config;
        if c.modes < 2 {
            return Err(Error::invalid("a single mode leaves nothing to extrapolate"));
        }
        let (x, t) = self.dataset.batches(self.dataset.train_indices())?;
        let (vx, vt) = self.dataset.batches(self.dataset.test_indices())?;
        let init = seed::derive(c.seed, stream::INIT, 0);
        let tc = c.train_config(seed::derive(c.seed, stream::SHUFFLE, 0));
        match kind {
            ModelKind::Prnet => {
                let mut net = ComplexNetwork::new(&c.prnet_dims(), init)?;
                let report = train(&mut net, &x, &t, Some((&vx, &vt)), &tc)?;
                Ok((Checkpoint::Complex(net), report))
            }
            ModelKind::Dnn => {
                let mut net = RealNetwork::for_complex(c.input_len(), &c.baseline_widths(), c.output_len(), init)?;
                let report = train(&mut net, &x, &t, Some((&vx, &vt)), &tc)?;
                Ok((Checkpoint::Real(net), report))
            }
            ModelKind::Both => Err(Error::invalid("train one model kind at a time")),
        }
    }

    /// Test-split NMSE (linear) with inputs re-estimated at `snr_db`.
    pub fn evaluate(&self, model: &Checkpoint, snr_db: f64) -> Result<f64> {
        if model.input_len() != self.config.input_len() || model.output_len() != self.config.output_len() {
            return Err(Error::config(format!(
                "model maps {} -> {} but the configuration needs {} -> {}",
                model.input_len(),
                model.output_len(),
                self.config.input_len(),
                self.config.output_len()
            )));
        }
        let test = self.dataset.test_indices();
        let inputs = self.pipeline.inputs_at(&self.dataset.seeds(test), snr_db)?;
        let (_, targets) = self.dataset.batches(test)?;
        nmse_batch(&targets, &model.predict(&inputs)?)
    }
}

/// Kind of a stored model.
pub fn checkpoint_kind(model: &Checkpoint) -> ModelKind {
    match model {
        Checkpoint::Complex(_) => ModelKind::Prnet,
        Checkpoint::Real(_) => ModelKind::Dnn,
    }
}

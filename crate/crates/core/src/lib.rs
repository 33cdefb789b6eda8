//! Channel acquisition for pattern-reconfigurable MIMO arrays.
//!
//! The crate covers the whole data path of a grouped-pilot extrapolation
//! experiment:
//!
//! - [`channel`]: clustered multipath channels whose rays are weighted by a
//!   per-mode radiation pattern gain.
//! - [`estimation`]: antenna grouping, the mixed-mode composite channel,
//!   unitary pilots and LMMSE / LS estimation.
//! - [`nn`]: a complex-valued feedforward network with split ReLU, a real
//!   baseline, ADAM and a shared trainer.
//! - [`dataset`]: sample construction, vector layout and the binary dataset
//!   format.
//! - [`experiment`]: configuration, the NMSE metric and SNR / antenna / mode
//!   sweeps.

pub mod channel;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod nn;
pub mod seed;

mod binio;
mod checksum;

pub use num_complex::Complex64;

pub use channel::{ArrayGeometry, ChannelTensor, PathSet, PatternGainModel};
pub use dataset::{Dataset, DatasetHeader, Pipeline, Sample, VectorLayout};
pub use error::{Error, Result};
pub use estimation::{
    ChannelCovariance, CompositeEstimate, EstimatorKind, GroupMap, LmmseEstimator, PilotMatrix,
};
pub use experiment::{ExperimentConfig, ModelKind, SweepAxis, SweepResult};
pub use nn::{
    AdamState, ComplexBatch, ComplexNetwork, RealNetwork, Regressor, TrainConfig, TrainReport,
};

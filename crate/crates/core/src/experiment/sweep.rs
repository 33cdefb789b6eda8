use std::fmt::Write as _;

use rayon::prelude::*;

use super::{checkpoint_kind, to_db, Experiment, ExperimentConfig, ModelKind};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Snr,
    Antennas,
    Modes,
}

impl SweepAxis {
    /// CSV name of the axis column.
    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::Snr => "snr_db",
            SweepAxis::Antennas => "antennas",
            SweepAxis::Modes => "modes",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "snr" | "snr_db" => Ok(SweepAxis::Snr),
            "antennas" => Ok(SweepAxis::Antennas),
            "modes" => Ok(SweepAxis::Modes),
            other => Err(Error::config(format!("unknown sweep axis {other:?}; expected snr, antennas or modes"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub model: ModelKind,
    pub nmse_linear: f64,
    pub test_samples: usize,
}

impl SweepRow {
    pub fn nmse_db(&self) -> f64 {
        to_db(self.nmse_linear)
    }
}

/// One row per axis value per model.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub config_checksum: u64,
}

impl SweepResult {
    /// `<axis>,nmse_linear,nmse_db,model`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},nmse_linear,nmse_db,model\n", self.axis.column());
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.value, r.nmse_linear, r.nmse_db(), r.model.name()).unwrap();
        }
        out
    }

    /// Per-row sample counts and the config checksum, which the CSV omits.
    pub fn sidecar(&self) -> String {
        let mut out = format!("config_checksum = \"{:016x}\"\ntest_samples = [", self.config_checksum);
        let counts: Vec<String> = self.rows.iter().map(|r| r.test_samples.to_string()).collect();
        out.push_str(&counts.join(", "));
        out.push_str("]\n");
        out
    }

    pub fn from_csv(csv: &str, sidecar: &str) -> Result<Self> {
        let mut lines = csv.lines();
        let header = lines.next().ok_or_else(|| Error::config("empty CSV"))?;
        let axis_name = header
            .strip_suffix(",nmse_linear,nmse_db,model")
            .ok_or_else(|| Error::config(format!("unexpected CSV header {header:?}")))?;
        let axis = SweepAxis::parse(axis_name)?;

        let side: toml::Table = toml::from_str(sidecar).map_err(|e| Error::config(e.to_string()))?;
        let checksum = side
            .get("config_checksum")
            .and_then(|v| v.as_str())
            .and_then(|s| u64::from_str_radix(s, 16).ok())
            .ok_or_else(|| Error::config("sidecar lacks config_checksum"))?;
        let counts: Vec<usize> = side
            .get("test_samples")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::config("sidecar lacks test_samples"))?
            .iter()
            .map(|v| v.as_integer().and_then(|i| usize::try_from(i).ok()))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::config("test_samples must be nonnegative integers"))?;

        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let bad = || Error::config(format!("CSV row {}: {line:?}", i + 1));
            let fields: Vec<&str> = line.split(',').collect();
            let [value, linear, db, model] = fields[..] else { return Err(bad()) };
            let value: f64 = value.parse().map_err(|_| bad())?;
            let nmse_linear: f64 = linear.parse().map_err(|_| bad())?;
            let db: f64 = db.parse().map_err(|_| bad())?;
            if !(nmse_linear >= 0.0) || db.to_bits() != to_db(nmse_linear).to_bits() {
                return Err(bad());
            }
            let test_samples = *counts.get(i).ok_or_else(bad)?;
            rows.push(SweepRow { value, model: ModelKind::parse(model)?, nmse_linear, test_samples });
        }
        if rows.len() != counts.len() {
            return Err(Error::config(format!("{} CSV rows but {} sample counts", rows.len(), counts.len())));
        }
        Ok(Self { axis, rows, config_checksum: checksum })
    }

    /// Rows of one model in axis order.
    pub fn series(&self, model: ModelKind) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.model == model).collect()
    }
}

/// Models for an SNR sweep: the stored one if `model_file` is set, otherwise
/// freshly trained ones.
fn snr_models(exp: &Experiment) -> Result<Vec<(ModelKind, Checkpoint)>> {
    let c = &exp.config;
    if let Some(path) = &c.model_file {
        let model = Checkpoint::read(path)?;
        return Ok(vec![(checkpoint_kind(&model), model)]);
    }
    if c.epochs == 0 {
        return Err(Error::config("no model_file given and training is disabled (epochs = 0)"));
    }
    c.model
        .members()
        .par_iter()
        .map(|&kind| Ok((kind, exp.train(kind)?.0)))
        .collect()
}

/// Trains once at the training SNR and evaluates the test split with inputs
/// re-estimated at every `snr_db` value.
pub fn run_snr_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    if config.snr_db.is_empty() {
        return Err(Error::config("snr_db is empty"));
    }
    let exp = Experiment::prepare(config)?;
    let models = snr_models(&exp)?;
    sweep_snr_with(&exp, &models)
}

/// SNR sweep of given models on a prepared experiment.
pub fn sweep_snr_with(exp: &Experiment, models: &[(ModelKind, Checkpoint)]) -> Result<SweepResult> {
    let test_samples = exp.dataset.test_indices().len();
    let mut rows = Vec::new();
    for (kind, model) in models {
        for &snr in &exp.config.snr_db {
            let nmse_linear = exp.evaluate(model, snr)?;
            rows.push(SweepRow { value: snr, model: *kind, nmse_linear, test_samples });
        }
    }
    Ok(SweepResult { axis: SweepAxis::Snr, rows, config_checksum: exp.config.checksum() })
}

/// One fresh experiment per point, evaluated at `eval_snr_db`.
fn sweep_points(config: &ExperimentConfig, axis: SweepAxis, points: Vec<(f64, ExperimentConfig)>) -> Result<SweepResult> {
    if config.epochs == 0 {
        return Err(Error::config("antenna and mode sweeps train fresh models; epochs must be > 0"));
    }
    let jobs: Vec<(usize, ModelKind)> =
        (0..points.len()).flat_map(|i| config.model.members().iter().map(move |&k| (i, k))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, kind)| {
            let (value, cfg) = &points[i];
            let exp = Experiment::prepare(cfg)?;
            let (model, _) = exp.train(kind)?;
            Ok(SweepRow {
                value: *value,
                model: kind,
                nmse_linear: exp.evaluate(&model, cfg.eval_snr_db)?,
                test_samples: exp.dataset.test_indices().len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { axis, rows, config_checksum: config.checksum() })
}

/// A fresh dataset and model per transmit antenna count; hidden widths are
/// kept and the input/output layers follow `M`.
pub fn run_antenna_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    if config.antennas.is_empty() {
        return Err(Error::config("antennas is empty"));
    }
    let mut points = Vec::new();
    for &m in &config.antennas {
        if m < config.modes {
            return Err(Error::invalid(format!("M = {m} < P = {}", config.modes)));
        }
        let cfg = ExperimentConfig { tx_antennas: m, baseline_hidden: config.baseline_hidden.clone(), ..config.clone() };
        cfg.validate()?;
        points.push((m as f64, cfg));
    }
    sweep_points(config, SweepAxis::Antennas, points)
}

/// A fresh pattern model, dataset and network per mode count.
pub fn run_mode_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    if config.mode_counts.is_empty() {
        return Err(Error::config("mode_counts is empty"));
    }
    let mut points = Vec::new();
    for &p in &config.mode_counts {
        if p < 2 {
            return Err(Error::invalid(format!("P = {p} leaves nothing to extrapolate")));
        }
        if p > config.tx_antennas {
            return Err(Error::invalid(format!("P = {p} > M = {}", config.tx_antennas)));
        }
        let cfg = ExperimentConfig { modes: p, ..config.clone() };
        cfg.validate()?;
        points.push((p as f64, cfg));
    }
    sweep_points(config, SweepAxis::Modes, points)
}

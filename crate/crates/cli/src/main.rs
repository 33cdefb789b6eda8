//! Command-line front end: dataset generation, training, evaluation, sweeps
//! and file inspection.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use prnet_core::experiment::{checkpoint_kind, sweep, to_db, Experiment};
use prnet_core::nn::checkpoint::Checkpoint;
use prnet_core::seed::{self, stream};
use prnet_core::{Dataset, ExperimentConfig, ModelKind, SweepAxis, SweepResult};

#[derive(Parser)]
#[command(name = "prnet", version, about = "Grouped-pilot channel extrapolation for pattern-reconfigurable MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset file.
    Generate(Common),
    /// Train models on a dataset (built from the config when none is given).
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Test-split NMSE of a stored model.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long = "model-file")]
        model_file: Option<PathBuf>,
    },
    /// Sweep SNR, antenna count or mode count.
    Sweep {
        axis: Axis,
        #[command(flatten)]
        common: Common,
    },
    /// Print the header of a dataset, checkpoint or config file.
    Inspect { path: PathBuf },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "prnet-out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// Comma-separated transmit antenna counts.
    #[arg(long, value_delimiter = ',')]
    antennas: Option<Vec<usize>>,
    /// Comma-separated mode counts.
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Start from the full-size defaults instead of the desk-scale ones.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Prnet,
    Dnn,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Snr,
    Antennas,
    Modes,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let base = if self.paper_scale { ExperimentConfig::paper_scale() } else { ExperimentConfig::desk_scale() };
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_toml_over(&text, &base).with_context(|| format!("in {}", path.display()))?
            }
            None => base,
        };
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(m) = self.model {
            config.model = match m {
                ModelArg::Prnet => ModelKind::Prnet,
                ModelArg::Dnn => ModelKind::Dnn,
                ModelArg::Both => ModelKind::Both,
            };
        }
        if let Some(v) = &self.snr {
            config.snr_db = v.clone();
        }
        if let Some(v) = &self.antennas {
            config.antennas = v.clone();
        }
        if let Some(v) = &self.modes {
            config.mode_counts = v.clone();
        }
        if let Some(e) = self.epochs {
            config.epochs = e;
        }
        config.validate()?;
        Ok(config)
    }

    /// Creates the output directory and records the config and seeds in it.
    fn prepare_output(&self, config: &ExperimentConfig) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        config.save(self.out.join("config.toml"))?;
        let s = config.seed;
        let seeds = format!(
            "master = {s}\ngain_model = {}\nsplit = {}\ninit = {}\nshuffle = {}\n",
            seed::derive(s, stream::GAIN_MODEL, 0),
            seed::derive(s, stream::SPLIT, 0),
            seed::derive(s, stream::INIT, 0),
            seed::derive(s, stream::SHUFFLE, 0),
        );
        fs::write(self.out.join("seeds.toml"), seeds)?;
        Ok(())
    }
}

fn experiment(config: &ExperimentConfig, dataset: Option<&Path>) -> Result<Experiment> {
    Ok(match dataset {
        Some(path) => {
            let data = Dataset::read(path).with_context(|| format!("reading {}", path.display()))?;
            Experiment::with_dataset(config, data)?
        }
        None => Experiment::prepare(config)?,
    })
}

fn model_file_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Dnn => "dnn.prnr",
        _ => "prnet.prnw",
    }
}

fn generate(common: &Common) -> Result<()> {
    let config = common.resolve()?;
    common.prepare_output(&config)?;
    let exp = Experiment::prepare(&config)?;
    let path = common.out.join("dataset.prnc");
    exp.dataset.write(&path)?;
    println!(
        "wrote {} ({} samples, {} test) checksum {:016x}",
        path.display(),
        exp.dataset.samples.len(),
        exp.dataset.test_indices().len(),
        exp.dataset.checksum()
    );
    Ok(())
}

fn train(common: &Common, dataset: Option<&Path>) -> Result<()> {
    let config = common.resolve()?;
    if config.epochs == 0 {
        bail!("epochs = 0: nothing to train");
    }
    common.prepare_output(&config)?;
    let exp = experiment(&config, dataset)?;
    let mut metrics = String::from("model,parameters,nmse_linear,nmse_db\n");
    for &kind in config.model.members() {
        let (model, report) = exp.train(kind)?;
        let path = common.out.join(model_file_name(kind));
        model.write(&path)?;
        fs::write(common.out.join(format!("{}_train.csv", kind.name())), report.to_csv())?;
        let nmse = exp.evaluate(&model, config.train_snr_db)?;
        metrics.push_str(&format!("{},{},{},{}\n", kind.name(), model.real_parameter_count(), nmse, to_db(nmse)));
        let seconds: f64 = report.epoch_seconds.iter().sum();
        println!(
            "{}: {} parameters, {} epochs in {seconds:.1} s, test NMSE {:.2} dB at {} dB -> {}",
            kind.name(),
            model.real_parameter_count(),
            report.epochs(),
            to_db(nmse),
            config.train_snr_db,
            path.display()
        );
    }
    fs::write(common.out.join("train_metrics.csv"), metrics)?;
    Ok(())
}

fn evaluate(common: &Common, dataset: Option<&Path>, model_file: Option<&Path>) -> Result<()> {
    let mut config = common.resolve()?;
    let path = match (model_file, &config.model_file) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => bail!("no model given; pass --model-file or set model_file in the config"),
    };
    let model = Checkpoint::read(&path).with_context(|| format!("reading {}", path.display()))?;
    if common.snr.is_none() {
        config.snr_db = vec![config.eval_snr_db];
    }
    common.prepare_output(&config)?;
    let exp = experiment(&config, dataset)?;
    let kind = checkpoint_kind(&model);
    let result = sweep::sweep_snr_with(&exp, &[(kind, model)])?;
    for row in &result.rows {
        println!("{} at {} dB: NMSE {:.4} dB (linear {:e})", kind.name(), row.value, row.nmse_db(), row.nmse_linear);
    }
    write_result(&common.out, "evaluation", &result)
}

fn write_result(out: &Path, stem: &str, result: &SweepResult) -> Result<()> {
    fs::write(out.join(format!("{stem}.csv")), result.to_csv())?;
    fs::write(out.join(format!("{stem}.toml")), result.sidecar())?;
    Ok(())
}

fn run_sweep(axis: Axis, common: &Common) -> Result<()> {
    let config = common.resolve()?;
    common.prepare_output(&config)?;
    let result = match axis {
        Axis::Snr => sweep::run_snr_sweep(&config)?,
        Axis::Antennas => sweep::run_antenna_sweep(&config)?,
        Axis::Modes => sweep::run_mode_sweep(&config)?,
    };
    let stem = format!(
        "sweep_{}",
        match result.axis {
            SweepAxis::Snr => "snr",
            SweepAxis::Antennas => "antennas",
            SweepAxis::Modes => "modes",
        }
    );
    write_result(&common.out, &stem, &result)?;
    print!("{}", result.to_csv());
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match bytes.get(..4) {
        Some(b"PRNC") => {
            let d = Dataset::from_bytes(&bytes)?;
            let h = &d.header;
            println!("kind: dataset");
            println!("tx_antennas: {}\nrx_antennas: {}\nmodes: {}", h.tx_antennas, h.rx_antennas, h.modes);
            println!("samples: {} ({} train, {} test)", h.samples, d.train_indices().len(), d.test_indices().len());
            println!("test_fraction: {}/{}", h.test_numerator, h.test_denominator);
            println!("train_snr_db: {}", h.train_snr_db());
            println!("master_seed: {}\nlayout_version: {}", h.master_seed, h.layout_version);
            println!("record: h_es {} + h_pre {} complex values", h.es_len(), h.pre_len());
            println!("checksum: {:016x}", d.checksum());
        }
        Some(b"PRNW") | Some(b"PRNR") => {
            let model = Checkpoint::from_bytes(&bytes)?;
            let (kind, scale) = match &model {
                Checkpoint::Complex(n) => ("complex network", prnet_core::Regressor::input_scale(n)),
                Checkpoint::Real(n) => ("real network", prnet_core::Regressor::input_scale(n)),
            };
            println!("kind: {kind}");
            println!("dims: {:?}", model.dims());
            println!("real_parameters: {}", model.real_parameter_count());
            println!("input_scale: {scale}");
        }
        _ => {
            let text = String::from_utf8(bytes).context("not a dataset, checkpoint or config file")?;
            let config = ExperimentConfig::from_toml(&text)?;
            let (complex, real) = config.parameter_counts();
            println!("kind: config");
            println!("prnet_dims: {:?}\nbaseline_dims: {:?}", config.prnet_dims(), config.baseline_dims());
            println!("parameters: prnet {complex}, dnn {real} (ratio {:.3})", real as f64 / complex as f64);
            println!("checksum: {:016x}", config.checksum());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(common) => generate(common),
        Command::Train { common, dataset } => train(common, dataset.as_deref()),
        Command::Evaluate { common, dataset, model_file } => evaluate(common, dataset.as_deref(), model_file.as_deref()),
        Command::Sweep { axis, common } => run_sweep(*axis, common),
        Command::Inspect { path } => inspect(path),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

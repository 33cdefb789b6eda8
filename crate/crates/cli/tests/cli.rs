use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use prnet_core::SweepResult;

const TINY: &str = "\
tx_antennas = 8
rx_antennas = 2
modes = 2
samples = 120
calibration_samples = 150
hidden = [16, 16]
epochs = 10
";

fn prnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prnet")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = setup();
    assert_eq!(prnet(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(prnet(&["generate", "--no-such-flag"], dir.path()).status.code(), Some(2));
    assert_eq!(prnet(&["sweep", "sideways"], dir.path()).status.code(), Some(2));
    assert_eq!(prnet(&["train", "--model", "cnn"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = setup();
    let o = prnet(&["evaluate", "--config", "tiny.toml", "--out", "e"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no model"));

    fs::write(dir.path().join("bad.toml"), "modes = 0\n").unwrap();
    assert_eq!(prnet(&["generate", "--config", "bad.toml"], dir.path()).status.code(), Some(1));
    assert_eq!(prnet(&["inspect", "missing.prnc"], dir.path()).status.code(), Some(1));
    let o = prnet(&["sweep", "modes", "--config", "tiny.toml", "--modes", "1", "--out", "m"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generate_is_reproducible() {
    let dir = setup();
    for out in ["a", "b"] {
        let o = prnet(&["generate", "--config", "tiny.toml", "--seed", "5", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a/dataset.prnc")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/dataset.prnc")).unwrap());
    assert!(prnet(&["generate", "--config", "tiny.toml", "--seed", "6", "--out", "c"], dir.path()).status.success());
    assert_ne!(a, fs::read(dir.path().join("c/dataset.prnc")).unwrap());

    let stored = fs::read_to_string(dir.path().join("a/config.toml")).unwrap();
    assert!(stored.contains("seed = 5"));
    assert!(dir.path().join("a/seeds.toml").exists());
}

#[test]
fn train_and_evaluate_rerun_bit_exactly_from_stored_config() {
    let dir = setup();
    let gen = prnet(&["generate", "--config", "tiny.toml", "--out", "g"], dir.path());
    assert!(gen.status.success());
    let first = prnet(&["train", "--config", "tiny.toml", "--dataset", "g/dataset.prnc", "--out", "r1"], dir.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    // Second run only sees the stored config.
    let second = prnet(&["train", "--config", "r1/config.toml", "--out", "r2"], dir.path());
    assert!(second.status.success());
    for file in ["prnet.prnw", "prnet_train.csv", "train_metrics.csv", "config.toml", "seeds.toml"] {
        assert_eq!(
            fs::read(dir.path().join("r1").join(file)).unwrap(),
            fs::read(dir.path().join("r2").join(file)).unwrap(),
            "{file}"
        );
    }
    assert_eq!(fs::read_to_string(dir.path().join("r1/prnet_train.csv")).unwrap().lines().count(), 11);

    let mut metrics = Vec::new();
    for out in ["e1", "e2"] {
        let o = prnet(&["evaluate", "--config", "r1/config.toml", "--model-file", "r1/prnet.prnw", "--out", out], dir.path());
        assert!(o.status.success());
        assert!(stdout(&o).contains("dB"));
        let csv = fs::read_to_string(dir.path().join(out).join("evaluation.csv")).unwrap();
        let side = fs::read_to_string(dir.path().join(out).join("evaluation.toml")).unwrap();
        metrics.push(SweepResult::from_csv(&csv, &side).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
    let row = &metrics[0].rows[0];
    assert_eq!(row.value, 30.0);
    assert!(row.nmse_linear > 0.0 && row.nmse_linear.is_finite());
}

#[test]
fn snr_sweep_writes_declared_csv() {
    let dir = setup();
    let o = prnet(&["sweep", "snr", "--config", "tiny.toml", "--snr", "0,15,30", "--model", "both", "--out", "s"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("s/sweep_snr.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "snr_db,nmse_linear,nmse_db,model");
    assert_eq!(stdout(&o), csv);
    let side = fs::read_to_string(dir.path().join("s/sweep_snr.toml")).unwrap();
    let result = SweepResult::from_csv(&csv, &side).unwrap();
    assert_eq!(result.rows.len(), 6);
    let config = prnet_core::ExperimentConfig::load(dir.path().join("s/config.toml")).unwrap();
    assert_eq!(result.config_checksum, config.checksum());
}

#[test]
fn antenna_sweep_rejects_duplicates() {
    let dir = setup();
    let o = prnet(&["sweep", "antennas", "--config", "tiny.toml", "--antennas", "4,4", "--out", "a"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate"));
}

#[test]
fn inspect_reports_headers_and_rejects_corruption() {
    let dir = setup();
    assert!(prnet(&["generate", "--config", "tiny.toml", "--out", "g"], dir.path()).status.success());
    let o = prnet(&["inspect", "g/dataset.prnc"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("kind: dataset") && text.contains("samples: 120 (72 train, 48 test)"), "{text}");

    let o = prnet(&["inspect", "tiny.toml"], dir.path());
    assert!(stdout(&o).contains("prnet_dims: [16, 16, 16, 16]"));

    let bytes = fs::read(dir.path().join("g/dataset.prnc")).unwrap();
    fs::write(dir.path().join("short.prnc"), &bytes[..bytes.len() - 40]).unwrap();
    let o = prnet(&["inspect", "short.prnc"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr).into_owned();
    assert!(err.contains(&bytes.len().to_string()) && err.contains(&(bytes.len() - 40).to_string()), "{err}");
}

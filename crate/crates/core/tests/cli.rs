//! End-to-end tests of the command-line binary: pipeline completeness,
//! determinism from the master seed, resumability, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gatemon::circuit::{Circuit, Sample};
use gatemon::experiment::{
    load_checkpoints, read_jsonl, read_loss_trace_csv, CALIBRATION_FILE, CIRCUITS_FILE,
    CURVES_FILE, DISTANCES_FILE, LOSS_TRACE_FILE, RATES_COMPARISON_FILE, RATES_FILE, SAMPLES_FILE,
};
use gatemon::metrics::{
    read_curves_csv, read_distances_csv, read_rates_csv, CalibrationMatrix,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gatemon"))
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        "n_circuits = 4\nshots = 64\ncheckpoints = [2, 4]\n\n\
         [estimator]\nmax_iters = 2\nmin_iters = 1\n",
    )
    .unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn run_all_emits_every_file_and_all_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
        "run-all",
    ]);
    assert_success(&out);

    for file in [
        CIRCUITS_FILE,
        SAMPLES_FILE,
        LOSS_TRACE_FILE,
        CURVES_FILE,
        DISTANCES_FILE,
        RATES_FILE,
        CALIBRATION_FILE,
        RATES_COMPARISON_FILE,
    ] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }

    // Everything parses back through the module readers.
    let circuits: Vec<Circuit> = read_jsonl(&out_dir.join(CIRCUITS_FILE)).unwrap();
    assert_eq!(circuits.len(), 4);
    let samples: Vec<Sample> = read_jsonl(&out_dir.join(SAMPLES_FILE)).unwrap();
    assert_eq!(samples.len(), 4);
    for sample in &samples {
        assert_eq!(sample.counts.values().sum::<u64>(), 64);
    }
    let checkpoints = load_checkpoints(&out_dir).unwrap();
    assert_eq!(checkpoints.len(), 2);
    for file in &checkpoints {
        for (_, chan) in file.gateset.iter() {
            chan.validate_cptp(1e-9).unwrap();
        }
    }
    assert!(!read_loss_trace_csv(&out_dir.join(LOSS_TRACE_FILE))
        .unwrap()
        .is_empty());
    assert!(!read_curves_csv(&out_dir.join(CURVES_FILE)).unwrap().is_empty());
    let distances = read_distances_csv(&out_dir.join(DISTANCES_FILE)).unwrap();
    // Truth model supplied by run-all: ideal- and truth-referenced rows.
    assert!(distances
        .iter()
        .any(|r| format!("{:?}", r.metric).contains("True")));
    assert_eq!(read_rates_csv(&out_dir.join(RATES_FILE)).unwrap().len(), 15);
    let cm = CalibrationMatrix::from_csv_path(&out_dir.join(CALIBRATION_FILE)).unwrap();
    cm.validate().unwrap();
    assert_eq!(
        read_rates_csv(&out_dir.join(RATES_COMPARISON_FILE))
            .unwrap()
            .len(),
        25
    );
}

#[test]
fn pipeline_is_deterministic_in_the_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = run(&[
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            out_dir.to_str().unwrap(),
            "--master-seed",
            "42",
            "--deterministic",
            "run-all",
        ]);
        assert_success(&out);
        bytes.push((
            fs::read(out_dir.join(CIRCUITS_FILE)).unwrap(),
            fs::read(out_dir.join(SAMPLES_FILE)).unwrap(),
            fs::read(out_dir.join(DISTANCES_FILE)).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1], "same master seed, same files");

    let out_dir = dir.path().join("c");
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--master-seed",
        "43",
        "gen-circuits",
    ]);
    assert_success(&out);
    assert_ne!(
        bytes[0].0,
        fs::read(out_dir.join(CIRCUITS_FILE)).unwrap(),
        "different master seed, different circuits"
    );
}

#[test]
fn zero_circuits_writes_an_empty_file_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--n-circuits",
        "0",
        "gen-circuits",
    ]);
    assert_success(&out);
    assert_eq!(fs::read(out_dir.join(CIRCUITS_FILE)).unwrap().len(), 0);
}

#[test]
fn estimate_resume_skips_completed_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_dir = dir.path().join("out");
    let base = [
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ];
    for cmd in [vec!["gen-circuits"], vec!["sample"], vec!["estimate"]] {
        let mut args = base.to_vec();
        args.extend(cmd);
        assert_success(&run(&args));
    }
    let first = fs::read(out_dir.join("checkpoints/checkpoint_00004.json")).unwrap();

    let mut args = base.to_vec();
    args.extend(["estimate", "--resume"]);
    let out = run(&args);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(
        stdout.matches("resumed").count(),
        2,
        "both checkpoints resumed: {stdout}"
    );
    let second = fs::read(out_dir.join("checkpoints/checkpoint_00004.json")).unwrap();
    assert_eq!(first, second, "resume leaves checkpoint files untouched");
}

#[test]
fn validation_problems_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    // Checkpoint schedule beyond the circuit budget.
    let config = dir.path().join("bad.toml");
    fs::write(&config, "n_circuits = 4\ncheckpoints = [2, 4096]\n").unwrap();
    let out = run(&[
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().join("out").to_str().unwrap(),
        "run-all",
    ]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown configuration key.
    let typo = dir.path().join("typo.toml");
    fs::write(&typo, "n_circuit = 4\n").unwrap();
    let out = run(&["--config", typo.to_str().unwrap(), "gen-circuits"]);
    assert_eq!(out.status.code(), Some(1));

    // Unknown flag.
    let out = run(&["--not-a-flag", "gen-circuits"]);
    assert_eq!(out.status.code(), Some(1));

    // Help is a success.
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn calibrate_runs_standalone_with_an_ideal_gateset() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    // Write an ideal gate set to disk and calibrate from it: the confusion
    // matrix must be exactly the identity and all rates zero.
    let device = gatemon::circuit::Device::default_five_qubit();
    let ideal = gatemon::circuit::GateSet::ideal(&device);
    let gs_path = dir.path().join("ideal.json");
    gatemon::experiment::write_json(&gs_path, &ideal).unwrap();
    let out = run(&[
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--shots",
        "32",
        "calibrate",
        "--gateset",
        gs_path.to_str().unwrap(),
    ]);
    assert_success(&out);
    let cm = CalibrationMatrix::from_csv_path(&out_dir.join(CALIBRATION_FILE)).unwrap();
    cm.validate().unwrap();
    for (x, row) in cm.frequencies.iter().enumerate() {
        for (y, &f) in row.iter().enumerate() {
            assert_eq!(f, if x == y { 1.0 } else { 0.0 });
        }
    }
    for row in read_rates_csv(&out_dir.join(RATES_COMPARISON_FILE)).unwrap() {
        assert!(row.value.abs() < 1e-12, "{:?}: {}", row.metric, row.value);
    }
}

//! End-to-end experiment pipeline: run configuration, deterministic seed
//! derivation, atomic file I/O, and the stages the command-line tool chains
//! together — circuit generation, outcome sampling, windowed estimation with
//! checkpoint resume, evaluation reports, and readout calibration.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::circuit::{random_circuit, Circuit, Device, GateSet, Sample};
use crate::error::{Error, Result};
use crate::estimator::{fit, EstimatorConfig, EstimatorState, Record};
use crate::metrics::{
    calibration_matrix, distance_report, error_rate_table, error_rates_estimated,
    layerwise_curves, write_curves_csv, write_distances_csv, write_rates_csv, RateMetric, RateRow,
};
use crate::noise::{true_gateset, NoiseTable};
use crate::sdp::DiamondOptions;
use crate::simulator::{circuit_probabilities, sample_outcomes, CompiledGateSet};

/// File name of the circuit list inside a run directory.
pub const CIRCUITS_FILE: &str = "circuits.jsonl";
/// File name of the sampled outcomes inside a run directory.
pub const SAMPLES_FILE: &str = "samples.jsonl";
/// Subdirectory holding one gate-set file per checkpoint.
pub const CHECKPOINT_DIR: &str = "checkpoints";
/// File name of the per-iteration loss table.
pub const LOSS_TRACE_FILE: &str = "loss_trace.csv";
/// File name of the layerwise prediction-inaccuracy table.
pub const CURVES_FILE: &str = "curves.csv";
/// File name of the per-gate channel-distance table.
pub const DISTANCES_FILE: &str = "distances.csv";
/// File name of the estimated readout-rate table.
pub const RATES_FILE: &str = "rates.csv";
/// File name of the measured confusion matrix.
pub const CALIBRATION_FILE: &str = "calibration.csv";
/// File name of the measured-versus-estimated readout-rate table.
pub const RATES_COMPARISON_FILE: &str = "rates_comparison.csv";

// ---------------------------------------------------------------------------
// Seed derivation
// ---------------------------------------------------------------------------

/// The pipeline stages that consume randomness. Each derives its own seed
/// from the master seed so stages can rerun independently without
/// perturbing one another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Random circuit generation.
    Circuits,
    /// Measurement-outcome sampling of the generated circuits.
    Sampling,
    /// Cold-start perturbation of the estimator.
    Estimation,
    /// Readout-calibration sampling.
    Calibration,
}

impl Stage {
    fn tag(self) -> u64 {
        let name: &[u8; 8] = match self {
            Stage::Circuits => b"circuits",
            Stage::Sampling => b"sampling",
            Stage::Estimation => b"estimate",
            Stage::Calibration => b"calibrat",
        };
        u64::from_be_bytes(*name)
    }
}

/// The 64-bit finalizer of the splitmix64 generator: a bijective avalanche
/// mix whose output passes standard statistical batteries. Used to spread
/// closely spaced master seeds into unrelated stage seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one pipeline stage: the master seed mixed with a stage tag.
pub fn stage_seed(master_seed: u64, stage: Stage) -> u64 {
    splitmix64(splitmix64(master_seed) ^ stage.tag())
}

/// Generator for one circuit within a stage: every circuit id gets its own
/// stream of the counter-based generator, so circuits can be processed in
/// any order (or in parallel) with identical results.
pub fn circuit_rng(stage_seed: u64, circuit_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(stage_seed);
    rng.set_stream(circuit_id);
    rng
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// A full experiment description: device, truth model source, data volume,
/// checkpoint schedule, estimator knobs, and seeding. Serialized as TOML;
/// omitted fields fall back to the full-scale profile (the type default).
/// The command-line tool instead layers a file and flag overrides on top of
/// a chosen base profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Processor layout the circuits are generated for.
    pub device: Device,
    /// Path to a noise-parameter table for the truth model; the built-in
    /// table when absent.
    pub noise_table: Option<PathBuf>,
    /// Number of random circuits to generate and sample.
    pub n_circuits: usize,
    /// Shots per circuit.
    pub shots: u64,
    /// Record counts at which the estimator writes a fitted gate set.
    pub checkpoints: Vec<usize>,
    /// Fitting-loop knobs. The pipeline derives `estimator.seed` from the
    /// master seed; a value set here only matters for direct `fit` calls.
    pub estimator: EstimatorConfig,
    /// Master seed all stage seeds derive from.
    pub master_seed: u64,
    /// Directory all pipeline outputs are written into.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::paper()
    }
}

impl ExperimentConfig {
    /// Small profile sized for a laptop run: 128 circuits at 1024 shots with
    /// checkpoints at 2, 8, 32, and 128 records.
    pub fn desk() -> Self {
        ExperimentConfig {
            device: Device::default_five_qubit(),
            noise_table: None,
            n_circuits: 128,
            shots: 1024,
            checkpoints: vec![2, 8, 32, 128],
            estimator: EstimatorConfig::default(),
            master_seed: 2024,
            output_dir: PathBuf::from("runs/desk"),
        }
    }

    /// Full profile: 1024 circuits at 8192 shots with checkpoints at every
    /// power of two from 2 through 1024.
    pub fn paper() -> Self {
        ExperimentConfig {
            n_circuits: 1024,
            shots: 8192,
            checkpoints: (1..=10).map(|k| 1usize << k).collect(),
            output_dir: PathBuf::from("runs/full"),
            ..ExperimentConfig::desk()
        }
    }

    /// Parses a TOML run description; omitted fields take the type defaults.
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: ExperimentConfig = toml::from_str(&text)?;
        Ok(config)
    }

    /// Serializes the run description as TOML.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::validation(format!("encoding config: {e}")))
    }

    /// Checks internal consistency for a full pipeline run: a valid device,
    /// at least one shot, every checkpoint within the circuit budget, and
    /// valid estimator knobs. Stages that need less (circuit generation
    /// alone, for instance) check their own inputs instead.
    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.estimator.validate()?;
        if self.shots == 0 {
            return Err(Error::validation("shots must be positive"));
        }
        if self.checkpoints.is_empty() {
            return Err(Error::validation("checkpoint schedule is empty"));
        }
        for &i in &self.checkpoints {
            if i == 0 {
                return Err(Error::validation("checkpoint at 0 records"));
            }
            if i > self.n_circuits {
                return Err(Error::validation(format!(
                    "checkpoint at {i} records exceeds the {}-circuit budget",
                    self.n_circuits
                )));
            }
        }
        Ok(())
    }

    /// The truth-model gate set: built from the configured noise-table file,
    /// or from the built-in table when none is configured.
    pub fn truth(&self) -> Result<GateSet> {
        let table = match &self.noise_table {
            Some(path) => NoiseTable::from_csv_path(path)?,
            None => NoiseTable::builtin(),
        };
        true_gateset(&table, &self.device)
    }

    /// The checkpoint schedule, sorted and deduplicated.
    pub fn schedule(&self) -> Vec<usize> {
        let mut schedule = self.checkpoints.clone();
        schedule.sort_unstable();
        schedule.dedup();
        schedule
    }
}

/// A partial run description: every field optional, for layering a TOML
/// file (and then flag overrides) on top of a base profile. Unknown keys
/// are rejected so typos surface instead of being ignored.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub device: Option<Device>,
    pub noise_table: Option<PathBuf>,
    pub n_circuits: Option<usize>,
    pub shots: Option<u64>,
    pub checkpoints: Option<Vec<usize>>,
    pub estimator: Option<EstimatorConfig>,
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ConfigPatch {
    /// Parses a TOML file into a patch.
    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let patch: ConfigPatch = toml::from_str(&text)?;
        Ok(patch)
    }

    /// Applies the patch's set fields onto a base configuration.
    pub fn apply_to(self, base: &mut ExperimentConfig) {
        if let Some(device) = self.device {
            base.device = device;
        }
        if let Some(noise_table) = self.noise_table {
            base.noise_table = Some(noise_table);
        }
        if let Some(n_circuits) = self.n_circuits {
            base.n_circuits = n_circuits;
        }
        if let Some(shots) = self.shots {
            base.shots = shots;
        }
        if let Some(checkpoints) = self.checkpoints {
            base.checkpoints = checkpoints;
        }
        if let Some(estimator) = self.estimator {
            base.estimator = estimator;
        }
        if let Some(master_seed) = self.master_seed {
            base.master_seed = master_seed;
        }
        if let Some(output_dir) = self.output_dir {
            base.output_dir = output_dir;
        }
    }
}

// ---------------------------------------------------------------------------
// Atomic file I/O
// ---------------------------------------------------------------------------

/// Writes a file through a same-directory temporary and a rename, so readers
/// never observe a half-written file and interrupted runs leave the previous
/// version intact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::validation(format!("{} has no file name", path.display())))?;
    let tmp = parent.join(format!(
        ".{}.tmp-{}-{nanos}",
        file_name.to_string_lossy(),
        process::id()
    ));
    let write_result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        Ok(())
    })();
    if let Err(e) = write_result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(tmp.display().to_string(), e));
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path.display().to_string(), e)
    })
}

/// Writes one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    atomic_write(path, &buf)
}

/// Reads a file of one JSON document per line, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file =
        fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::validation(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Writes a value as pretty-printed JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    atomic_write(path, &buf)
}

/// Reads a JSON value.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file =
        fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let value = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?;
    Ok(value)
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// One saved estimation checkpoint: the fitted gate set after consuming a
/// prefix of the record stream, plus the fit diagnostics needed to resume
/// and to reconstruct the loss trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile {
    /// Number of records consumed when the checkpoint was written.
    pub records_consumed: usize,
    /// Iterations the fit ran.
    pub iterations: usize,
    /// Whether the fit stopped on its convergence rule rather than the
    /// iteration cap.
    pub converged: bool,
    /// Loss after the final iteration.
    pub final_loss: f64,
    /// Loss before each iteration, in order.
    pub loss_trace: Vec<f64>,
    /// The fitted gate set.
    pub gateset: GateSet,
}

/// File name of the checkpoint written after `records_consumed` records.
pub fn checkpoint_filename(records_consumed: usize) -> String {
    format!("checkpoint_{records_consumed:05}.json")
}

/// One row of the loss-trace table: fit window size, iteration index, loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossRow {
    /// Records consumed by the fit the row belongs to.
    pub i: usize,
    /// Iteration within that fit, starting at 1.
    pub iter: usize,
    /// Loss before the iteration's update.
    pub loss: f64,
}

/// Writes the loss-trace table as CSV with columns `i,iter,loss`.
pub fn write_loss_trace_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        for row in rows {
            writer.serialize(row)?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    atomic_write(path, &buf)
}

/// Reads the loss-trace table back.
pub fn read_loss_trace_csv(path: &Path) -> Result<Vec<LossRow>> {
    let file =
        fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

/// Generates the run's random circuits. Each circuit draws from its own
/// generator stream, so the list is stable under reordering and
/// parallelism.
pub fn generate_circuits(device: &Device, n_circuits: usize, seed: u64) -> Result<Vec<Circuit>> {
    device.validate()?;
    let circuits: Vec<Circuit> = (0..n_circuits)
        .into_par_iter()
        .map(|id| {
            let mut rng = circuit_rng(seed, id as u64);
            random_circuit(device, &mut rng)
        })
        .collect();
    Ok(circuits)
}

/// Samples measurement outcomes for every circuit under a gate set. The
/// sample at index `k` carries `circuit_id == k`.
pub fn sample_records(
    gateset: &GateSet,
    circuits: &[Circuit],
    shots: u64,
    seed: u64,
) -> Result<Vec<Sample>> {
    if shots == 0 {
        return Err(Error::validation("shots must be positive"));
    }
    let compiled = CompiledGateSet::new(gateset);
    circuits
        .par_iter()
        .enumerate()
        .map(|(id, circuit)| {
            let probs = circuit_probabilities(&compiled, circuit)?;
            let mut rng = circuit_rng(seed, id as u64);
            let counts = sample_outcomes(&probs, shots, &mut rng)?;
            Ok(Sample {
                circuit_id: id,
                shots,
                counts,
            })
        })
        .collect()
}

/// Pairs a circuit list with its sample list into estimation records,
/// checking that sample `k` refers to circuit `k`.
pub fn records_from(circuits: Vec<Circuit>, samples: Vec<Sample>) -> Result<Vec<Record>> {
    if circuits.len() != samples.len() {
        return Err(Error::validation(format!(
            "{} circuits but {} samples",
            circuits.len(),
            samples.len()
        )));
    }
    circuits
        .into_iter()
        .zip(samples)
        .enumerate()
        .map(|(k, (circuit, sample))| {
            if sample.circuit_id != k {
                return Err(Error::validation(format!(
                    "sample at position {k} carries circuit_id {}",
                    sample.circuit_id
                )));
            }
            sample.validate(&circuit)?;
            Ok(Record { circuit, sample })
        })
        .collect()
}

/// Summary of one checkpoint produced by `run_estimation`.
#[derive(Debug, Clone)]
pub struct CheckpointSummary {
    /// Records consumed.
    pub records_consumed: usize,
    /// Path of the checkpoint file.
    pub path: PathBuf,
    /// Iterations the fit ran; 0 when the checkpoint was loaded from disk.
    pub iterations: usize,
    /// Loss after the fit's final iteration.
    pub final_loss: f64,
    /// Whether the checkpoint was loaded from an existing file instead of
    /// being fitted in this call.
    pub resumed: bool,
}

/// Runs the windowed estimation schedule, writing one checkpoint file per
/// schedule entry into `out_dir/checkpoints/` and the combined loss trace
/// into `out_dir/loss_trace.csv`.
///
/// Each fit warm-starts from the previous checkpoint's gate set. With
/// `resume` set, schedule entries whose checkpoint file already exists are
/// loaded instead of refitted — matching files are trusted, and the warm
/// chain continues from them — so an interrupted run repeats no completed
/// work.
pub fn run_estimation(
    device: &Device,
    records: &[Record],
    config: &EstimatorConfig,
    schedule: &[usize],
    out_dir: &Path,
    resume: bool,
) -> Result<Vec<CheckpointSummary>> {
    let mut sorted = schedule.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() {
        return Err(Error::validation("checkpoint schedule is empty"));
    }
    if let Some(&last) = sorted.last() {
        if last > records.len() {
            return Err(Error::validation(format!(
                "schedule reaches {last} records but only {} are available",
                records.len()
            )));
        }
    }
    if sorted.first() == Some(&0) {
        return Err(Error::validation("checkpoint at 0 records"));
    }
    let checkpoint_dir = out_dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&checkpoint_dir)
        .map_err(|e| Error::io(checkpoint_dir.display().to_string(), e))?;

    let mut warm: Option<EstimatorState> = None;
    let mut summaries = Vec::new();
    let mut loss_rows: Vec<LossRow> = Vec::new();
    for &i in &sorted {
        let path = checkpoint_dir.join(checkpoint_filename(i));
        if resume && path.exists() {
            let file: CheckpointFile = read_json(&path)?;
            if file.records_consumed != i {
                return Err(Error::validation(format!(
                    "{} says {} records consumed, expected {i}",
                    path.display(),
                    file.records_consumed
                )));
            }
            loss_rows.extend(file.loss_trace.iter().enumerate().map(|(k, &loss)| LossRow {
                i,
                iter: k + 1,
                loss,
            }));
            warm = Some(EstimatorState::from_gateset(&file.gateset)?);
            summaries.push(CheckpointSummary {
                records_consumed: i,
                path,
                iterations: 0,
                final_loss: file.final_loss,
                resumed: true,
            });
            continue;
        }
        let report = fit(device, &records[..i], config, warm.as_ref())?;
        let file = CheckpointFile {
            records_consumed: i,
            iterations: report.iterations,
            converged: report.converged,
            final_loss: report.final_loss.total,
            loss_trace: report.loss_trace.clone(),
            gateset: report.gateset,
        };
        write_json(&path, &file)?;
        loss_rows.extend(file.loss_trace.iter().enumerate().map(|(k, &loss)| LossRow {
            i,
            iter: k + 1,
            loss,
        }));
        summaries.push(CheckpointSummary {
            records_consumed: i,
            path,
            iterations: report.iterations,
            final_loss: file.final_loss,
            resumed: false,
        });
        warm = Some(report.state);
    }
    write_loss_trace_csv(&out_dir.join(LOSS_TRACE_FILE), &loss_rows)?;
    Ok(summaries)
}

/// Loads every checkpoint file in `out_dir/checkpoints/`, sorted by records
/// consumed.
pub fn load_checkpoints(out_dir: &Path) -> Result<Vec<CheckpointFile>> {
    let dir = out_dir.join(CHECKPOINT_DIR);
    let entries =
        fs::read_dir(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = entry.path();
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if !name.starts_with("checkpoint_") || !name.ends_with(".json") {
            continue;
        }
        let file: CheckpointFile = read_json(&path)?;
        files.push(file);
    }
    if files.is_empty() {
        return Err(Error::validation(format!(
            "no checkpoint files under {}",
            dir.display()
        )));
    }
    files.sort_by_key(|f| f.records_consumed);
    for pair in files.windows(2) {
        if pair[0].records_consumed == pair[1].records_consumed {
            return Err(Error::validation(format!(
                "duplicate checkpoint at {} records",
                pair[0].records_consumed
            )));
        }
    }
    Ok(files)
}

/// Produces the evaluation reports from saved checkpoints: the layerwise
/// prediction-inaccuracy curves (`curves.csv`), the per-gate channel
/// distances (`distances.csv`, against the ideal set and — when a truth set
/// is given — against it), and the final checkpoint's estimated readout
/// rates (`rates.csv`).
pub fn evaluate_outputs(
    checkpoints: &[CheckpointFile],
    records: &[Record],
    truth: Option<&GateSet>,
    out_dir: &Path,
) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(Error::validation("no checkpoints to evaluate"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let pairs: Vec<(usize, &GateSet)> = checkpoints
        .iter()
        .map(|f| (f.records_consumed, &f.gateset))
        .collect();

    let curves = layerwise_curves(&pairs, records)?;
    write_curves_csv(&out_dir.join(CURVES_FILE), &curves)?;

    let distances = distance_report(&pairs, truth, &DiamondOptions::default())?;
    write_distances_csv(&out_dir.join(DISTANCES_FILE), &distances)?;

    let last = &checkpoints[checkpoints.len() - 1].gateset;
    let mut rate_rows = Vec::new();
    for qubit in 0..last.n_qubits {
        let est = error_rates_estimated(last, qubit)?;
        rate_rows.push(RateRow {
            qubit,
            metric: RateMetric::E01Est,
            value: est.e01,
        });
        rate_rows.push(RateRow {
            qubit,
            metric: RateMetric::E10Est,
            value: est.e10,
        });
        rate_rows.push(RateRow {
            qubit,
            metric: RateMetric::E10EstAcc,
            value: est.e10_acc,
        });
    }
    write_rates_csv(&out_dir.join(RATES_FILE), &rate_rows)?;
    Ok(())
}

/// Runs the readout-calibration experiment: samples the 32 preparation
/// circuits under `sample_from`, writes the confusion matrix
/// (`calibration.csv`), and writes the measured-versus-estimated rate table
/// (`rates_comparison.csv`) using `estimated` as the model side.
pub fn run_calibration(
    sample_from: &GateSet,
    estimated: &GateSet,
    shots: u64,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    if shots == 0 {
        return Err(Error::validation("shots must be positive"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let cm = calibration_matrix(sample_from, shots, &mut rng)?;
    cm.to_csv_path(&out_dir.join(CALIBRATION_FILE))?;
    let rows = error_rate_table(&cm, estimated)?;
    write_rates_csv(&out_dir.join(RATES_COMPARISON_FILE), &rows)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Convenience wrappers used by the command-line tool
// ---------------------------------------------------------------------------

/// Generates and writes the run's circuits to `circuits.jsonl`. Zero
/// circuits is allowed and produces an empty file.
pub fn stage_generate(config: &ExperimentConfig) -> Result<Vec<Circuit>> {
    let seed = stage_seed(config.master_seed, Stage::Circuits);
    let circuits = generate_circuits(&config.device, config.n_circuits, seed)?;
    write_jsonl(&config.output_dir.join(CIRCUITS_FILE), &circuits)?;
    Ok(circuits)
}

/// Samples a gate set on the run's circuits and writes `samples.jsonl`.
pub fn stage_sample(
    config: &ExperimentConfig,
    from: &GateSet,
    circuits: &[Circuit],
) -> Result<Vec<Sample>> {
    let seed = stage_seed(config.master_seed, Stage::Sampling);
    let samples = sample_records(from, circuits, config.shots, seed)?;
    write_jsonl(&config.output_dir.join(SAMPLES_FILE), &samples)?;
    Ok(samples)
}

/// Reads `circuits.jsonl` and `samples.jsonl` from the run directory and
/// pairs them into estimation records.
pub fn load_records(config: &ExperimentConfig) -> Result<Vec<Record>> {
    let circuits: Vec<Circuit> = read_jsonl(&config.output_dir.join(CIRCUITS_FILE))?;
    for circuit in &circuits {
        circuit.validate(&config.device)?;
    }
    let samples: Vec<Sample> = read_jsonl(&config.output_dir.join(SAMPLES_FILE))?;
    records_from(circuits, samples)
}

/// Runs the estimation schedule on the run directory's records.
pub fn stage_estimate(config: &ExperimentConfig, resume: bool) -> Result<Vec<CheckpointSummary>> {
    config.validate()?;
    let records = load_records(config)?;
    let mut est_config = config.estimator.clone();
    est_config.seed = stage_seed(config.master_seed, Stage::Estimation);
    run_estimation(
        &config.device,
        &records,
        &est_config,
        &config.schedule(),
        &config.output_dir,
        resume,
    )
}

/// Evaluates the run directory's checkpoints, adding truth-referenced
/// distance rows when a truth gate set is supplied.
pub fn stage_evaluate(config: &ExperimentConfig, truth: Option<&GateSet>) -> Result<()> {
    let checkpoints = load_checkpoints(&config.output_dir)?;
    let records = load_records(config)?;
    evaluate_outputs(&checkpoints, &records, truth, &config.output_dir)
}

/// Runs the calibration experiment on the run directory: outcomes sampled
/// from `sample_from`, rate estimates read off `estimated`.
pub fn stage_calibrate(
    config: &ExperimentConfig,
    sample_from: &GateSet,
    estimated: &GateSet,
) -> Result<()> {
    let seed = stage_seed(config.master_seed, Stage::Calibration);
    run_calibration(sample_from, estimated, config.shots, seed, &config.output_dir)
}

/// The latest fitted gate set in the run directory, when any checkpoint
/// exists.
pub fn latest_checkpoint_gateset(out_dir: &Path) -> Option<GateSet> {
    load_checkpoints(out_dir)
        .ok()
        .and_then(|mut files| files.pop())
        .map(|file| file.gateset)
}

/// Pretty single-line description of a checkpoint summary for progress
/// output.
pub fn summary_line(s: &CheckpointSummary) -> String {
    if s.resumed {
        format!(
            "checkpoint {:5} records: resumed from {}, loss {:.6e}",
            s.records_consumed,
            s.path.display(),
            s.final_loss
        )
    } else {
        format!(
            "checkpoint {:5} records: fitted in {} iterations, loss {:.6e}",
            s.records_consumed, s.iterations, s.final_loss
        )
    }
}

/// Buffered writer helper for streaming progress output.
pub fn progress_writer() -> BufWriter<std::io::Stdout> {
    BufWriter::new(std::io::stdout())
}

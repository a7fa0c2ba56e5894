//! Command-line front end for the gate-set reconstruction pipeline.
//!
//! One binary with subcommands covering the full synthetic study: generate
//! random circuits, sample measurement outcomes from a noisy gate set, fit
//! gate sets on growing data prefixes with resumable checkpoints, write the
//! evaluation tables, and run the readout-calibration comparison. A master
//! seed makes the entire pipeline reproducible from one integer.
//!
//! Exit codes: 0 on success, 1 for validation problems (bad flags, files,
//! configs, circuits), 2 for numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gatemon::circuit::GateSet;
use gatemon::error::{Error, Result};
use gatemon::experiment::{
    latest_checkpoint_gateset, load_records, read_json, stage_calibrate, stage_estimate,
    stage_evaluate, stage_generate, stage_sample, summary_line, ConfigPatch, ExperimentConfig,
    CALIBRATION_FILE, CIRCUITS_FILE, CURVES_FILE, DISTANCES_FILE, RATES_COMPARISON_FILE,
    RATES_FILE, SAMPLES_FILE,
};

/// Name of the environment variable that sets the worker-thread count.
const THREADS_ENV: &str = "GATEMON_THREADS";

#[derive(Parser)]
#[command(
    name = "gatemon",
    version,
    about = "Reconstruct a processor's noisy gate set from circuit execution logs",
    after_help = "Configuration layering: a base profile (--profile), then the --config TOML \
                  file, then individual flags. GATEMON_THREADS or --threads caps the worker \
                  pool; --deterministic forces a single worker."
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run description layered over the profile
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Base profile the configuration starts from
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,

    /// Number of random circuits to generate and sample
    #[arg(long, global = true, value_name = "N")]
    n_circuits: Option<usize>,

    /// Shots per circuit
    #[arg(long, global = true, value_name = "K")]
    shots: Option<u64>,

    /// Master seed every stage seed derives from
    #[arg(long, global = true, value_name = "SEED")]
    master_seed: Option<u64>,

    /// Directory the pipeline reads and writes
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Checkpoint schedule as record counts
    #[arg(long, global = true, value_name = "N", value_delimiter = ',')]
    checkpoints: Option<Vec<usize>>,

    /// Noise-parameter CSV for the truth model (built-in table when absent)
    #[arg(long, global = true, value_name = "FILE")]
    noise_table: Option<PathBuf>,

    /// Worker-thread cap (overrides GATEMON_THREADS)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Run single-threaded for bit-reproducible output ordering
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// 128 circuits x 1024 shots, checkpoints 2,8,32,128
    Desk,
    /// 1024 circuits x 8192 shots, checkpoints 2,4,...,1024
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the run's random circuits (circuits.jsonl)
    GenCircuits,

    /// Sample measurement outcomes for the run's circuits (samples.jsonl)
    Sample {
        /// Gate set to sample from, as a gate-set JSON file; the truth
        /// model when absent
        #[arg(long, value_name = "FILE")]
        gateset: Option<PathBuf>,
    },

    /// Fit gate sets on growing record prefixes (checkpoints/, loss_trace.csv)
    Estimate {
        /// Skip schedule entries whose checkpoint file already exists
        #[arg(long)]
        resume: bool,
    },

    /// Write the metric tables for saved checkpoints (curves.csv,
    /// distances.csv, rates.csv)
    Evaluate {
        /// Add distance rows against this gate-set JSON file
        #[arg(long, value_name = "FILE", conflicts_with = "against_truth")]
        truth: Option<PathBuf>,

        /// Add distance rows against the configured truth model
        #[arg(long)]
        against_truth: bool,
    },

    /// Run the readout-calibration experiment (calibration.csv,
    /// rates_comparison.csv)
    Calibrate {
        /// Gate set the calibration outcomes are sampled from; the truth
        /// model when absent
        #[arg(long, value_name = "FILE")]
        gateset: Option<PathBuf>,

        /// Gate set the model-side rates are read off; the sampled set
        /// when absent
        #[arg(long, value_name = "FILE")]
        estimated: Option<PathBuf>,
    },

    /// Run the whole pipeline: generate, sample, estimate, evaluate,
    /// calibrate
    RunAll {
        /// Skip schedule entries whose checkpoint file already exists
        #[arg(long)]
        resume: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            // Help and version are successful outcomes; everything else is
            // a validation problem.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads(&cli.common)?;
    let config = build_config(&cli.common)?;
    match cli.command {
        Command::GenCircuits => cmd_gen_circuits(&config),
        Command::Sample { gateset } => cmd_sample(&config, gateset.as_deref()),
        Command::Estimate { resume } => cmd_estimate(&config, resume),
        Command::Evaluate {
            truth,
            against_truth,
        } => {
            let truth_set = match (truth, against_truth) {
                (Some(path), _) => Some(read_json::<GateSet>(&path)?),
                (None, true) => Some(config.truth()?),
                (None, false) => None,
            };
            cmd_evaluate(&config, truth_set.as_ref())
        }
        Command::Calibrate { gateset, estimated } => {
            cmd_calibrate(&config, gateset.as_deref(), estimated.as_deref())
        }
        Command::RunAll { resume } => cmd_run_all(&config, resume),
    }
}

/// Builds the effective configuration: profile base, then the TOML file,
/// then individual flags.
fn build_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match common.profile {
        Profile::Desk => ExperimentConfig::desk(),
        Profile::Paper => ExperimentConfig::paper(),
    };
    if let Some(path) = &common.config {
        ConfigPatch::from_toml_path(path)?.apply_to(&mut config);
    }
    if let Some(n) = common.n_circuits {
        config.n_circuits = n;
    }
    if let Some(k) = common.shots {
        config.shots = k;
    }
    if let Some(seed) = common.master_seed {
        config.master_seed = seed;
    }
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(schedule) = &common.checkpoints {
        config.checkpoints = schedule.clone();
    }
    if let Some(table) = &common.noise_table {
        config.noise_table = Some(table.clone());
    }
    Ok(config)
}

/// Caps the worker pool: --deterministic forces one thread, otherwise
/// --threads, otherwise GATEMON_THREADS, otherwise the library default.
fn init_threads(common: &CommonArgs) -> Result<()> {
    let n = if common.deterministic {
        Some(1)
    } else if common.threads.is_some() {
        common.threads
    } else {
        match std::env::var(THREADS_ENV) {
            Ok(value) => Some(value.parse().map_err(|_| {
                Error::validation(format!("{THREADS_ENV}={value} is not a thread count"))
            })?),
            Err(_) => None,
        }
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::validation("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::validation(format!("building thread pool: {e}")))?;
    }
    Ok(())
}

fn cmd_gen_circuits(config: &ExperimentConfig) -> Result<()> {
    config.device.validate()?;
    let circuits = stage_generate(config)?;
    println!(
        "wrote {} circuits to {}",
        circuits.len(),
        config.output_dir.join(CIRCUITS_FILE).display()
    );
    Ok(())
}

fn cmd_sample(config: &ExperimentConfig, gateset: Option<&std::path::Path>) -> Result<()> {
    if config.shots == 0 {
        return Err(Error::validation("shots must be positive"));
    }
    let from = match gateset {
        Some(path) => read_json::<GateSet>(path)?,
        None => config.truth()?,
    };
    let circuits = gatemon::experiment::read_jsonl::<gatemon::circuit::Circuit>(
        &config.output_dir.join(CIRCUITS_FILE),
    )?;
    for circuit in &circuits {
        circuit.validate(&config.device)?;
    }
    let samples = stage_sample(config, &from, &circuits)?;
    println!(
        "wrote {} samples ({} shots each) to {}",
        samples.len(),
        config.shots,
        config.output_dir.join(SAMPLES_FILE).display()
    );
    Ok(())
}

fn cmd_estimate(config: &ExperimentConfig, resume: bool) -> Result<()> {
    config.validate()?;
    let summaries = stage_estimate(config, resume)?;
    for s in &summaries {
        println!("{}", summary_line(s));
    }
    Ok(())
}

fn cmd_evaluate(config: &ExperimentConfig, truth: Option<&GateSet>) -> Result<()> {
    stage_evaluate(config, truth)?;
    for file in [CURVES_FILE, DISTANCES_FILE, RATES_FILE] {
        println!("wrote {}", config.output_dir.join(file).display());
    }
    Ok(())
}

fn cmd_calibrate(
    config: &ExperimentConfig,
    gateset: Option<&std::path::Path>,
    estimated: Option<&std::path::Path>,
) -> Result<()> {
    if config.shots == 0 {
        return Err(Error::validation("shots must be positive"));
    }
    let sample_from = match gateset {
        Some(path) => read_json::<GateSet>(path)?,
        None => config.truth()?,
    };
    let estimated = match estimated {
        Some(path) => read_json::<GateSet>(path)?,
        None => sample_from.clone(),
    };
    stage_calibrate(config, &sample_from, &estimated)?;
    for file in [CALIBRATION_FILE, RATES_COMPARISON_FILE] {
        println!("wrote {}", config.output_dir.join(file).display());
    }
    Ok(())
}

fn cmd_run_all(config: &ExperimentConfig, resume: bool) -> Result<()> {
    config.validate()?;
    let truth = config.truth()?;

    let circuits = stage_generate(config)?;
    println!("generated {} circuits", circuits.len());

    stage_sample(config, &truth, &circuits)?;
    println!("sampled {} shots per circuit", config.shots);

    let summaries = stage_estimate(config, resume)?;
    for s in &summaries {
        println!("{}", summary_line(s));
    }

    stage_evaluate(config, Some(&truth))?;
    println!("evaluation tables written");

    // Calibration outcomes come from the truth model; the model-side rates
    // come from the latest fit so the table compares measurement against
    // reconstruction.
    let estimated = latest_checkpoint_gateset(&config.output_dir)
        .ok_or_else(|| Error::validation("no checkpoint to calibrate against"))?;
    stage_calibrate(config, &truth, &estimated)?;
    println!("calibration tables written");

    // Everything the pipeline wrote parses back through the module
    // readers, so downstream tooling can rely on the files.
    load_records(config)?;
    Ok(())
}

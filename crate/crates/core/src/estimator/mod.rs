//! Gate-set estimation: windowed maximum-likelihood fitting of every
//! non-preparation operation's process matrix, parameterized through
//! stacked-Kraus isometries and optimized with a Riemannian Adam loop.

pub mod gradient;
pub mod radam;
pub mod stiefel;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::channel::Channel;
use crate::circuit::{Device, GateKey, GateSet, Label};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

pub use gradient::{kraus_rank, loss_and_gradient, loss_value, LossBreakdown, Record};
pub use radam::RAdamConfig;

/// Knobs of the fitting loop. Defaults are the values used by the
/// command-line pipeline.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Regularizer weight for single-qubit operations.
    pub lambda_single: f64,
    /// Regularizer weight for two-qubit operations.
    pub lambda_two: f64,
    /// Riemannian Adam settings.
    pub optimizer: RAdamConfig,
    /// Hard iteration cap per fit.
    pub max_iters: usize,
    /// Iterations that must elapse before the stagnation rule may stop the
    /// fit. Adam passes through a warmup plateau while its second moment
    /// adapts; stopping inside it leaves the fit far from the optimum.
    pub min_iters: usize,
    /// Number of most recent records the loss is evaluated on.
    pub window_size: usize,
    /// Scale of the random tangent perturbation applied to the ideal
    /// starting point on a cold start.
    pub init_perturbation: f64,
    /// Relative loss-improvement threshold below which an iteration counts
    /// as stagnant.
    pub convergence_tol: f64,
    /// Number of consecutive stagnant iterations that ends the fit.
    pub patience: usize,
    /// Riemannian gradient-norm threshold that ends the fit on its own.
    pub grad_tol: f64,
    /// Seed of the cold-start perturbation.
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lambda_single: 100.0,
            lambda_two: 200.0,
            optimizer: RAdamConfig::default(),
            max_iters: 2000,
            min_iters: 200,
            window_size: 128,
            init_perturbation: 1e-3,
            convergence_tol: 1e-7,
            patience: 50,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_single", self.lambda_single),
            ("lambda_two", self.lambda_two),
            ("init_perturbation", self.init_perturbation),
            ("convergence_tol", self.convergence_tol),
            ("grad_tol", self.grad_tol),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::validation("max_iters must be positive"));
        }
        if self.window_size == 0 {
            return Err(Error::validation("window_size must be positive"));
        }
        self.optimizer.validate()
    }
}

/// Optimizer position: one stacked-Kraus isometry per fitted operation.
/// Carrying this between fits warm-starts the next one.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub isometries: BTreeMap<GateKey, ComplexMatrix>,
}

impl EstimatorState {
    /// Ideal starting point for a device: each fitted operation at its
    /// noiseless channel, embedded in the full-rank parameterization.
    pub fn ideal(device: &Device) -> EstimatorState {
        let mut isometries = BTreeMap::new();
        for (label, target) in device.supported_keys() {
            if label == Label::P {
                continue;
            }
            let u = label
                .ideal_unitary()
                .expect("every non-preparation label has an ideal unitary");
            isometries.insert((label, target), stiefel::ideal_isometry(&u, kraus_rank(label)));
        }
        EstimatorState { isometries }
    }

    /// Rebuilds an optimizer position from a stored gate set: each fitted
    /// operation's Kraus family, padded to the full-rank parameterization.
    /// Inverse of `to_gateset` up to Kraus-family gauge, which the loss
    /// does not see.
    pub fn from_gateset(gs: &GateSet) -> Result<EstimatorState> {
        let mut isometries = BTreeMap::new();
        for (&(label, target), chan) in gs.iter() {
            if label == Label::P {
                continue;
            }
            let rank = kraus_rank(label);
            if chan.kraus().len() > rank {
                return Err(Error::validation(format!(
                    "{label} on {target} has {} Kraus operators, above the rank-{rank} parameterization",
                    chan.kraus().len()
                )));
            }
            isometries.insert((label, target), stiefel::stack_kraus(chan.kraus(), rank)?);
        }
        Ok(EstimatorState { isometries })
    }

    /// The gate set the state describes: fitted operations from their Kraus
    /// blocks, preparation as the ideal reset.
    pub fn to_gateset(&self, device: &Device) -> Result<GateSet> {
        let mut gs = GateSet::new(device.n_qubits);
        for (label, target) in device.supported_keys() {
            if label == Label::P {
                gs.insert(label, target, Channel::reset_to_zero(2))?;
                continue;
            }
            let v = self.isometries.get(&(label, target)).ok_or_else(|| {
                Error::validation(format!("state is missing {label} on {target}"))
            })?;
            let kraus = stiefel::kraus_blocks(v);
            gs.insert(label, target, Channel::from_kraus(kraus)?)?;
        }
        Ok(gs)
    }

    fn validate_for(&self, device: &Device) -> Result<()> {
        for (label, target) in device.supported_keys() {
            if label == Label::P {
                continue;
            }
            let v = self.isometries.get(&(label, target)).ok_or_else(|| {
                Error::validation(format!("warm start is missing {label} on {target}"))
            })?;
            let d = if label.is_two_qubit() { 4 } else { 2 };
            let rank = kraus_rank(label);
            if v.shape() != (rank * d, d) {
                return Err(Error::validation(format!(
                    "warm start for {label} on {target} has shape {:?}, expected ({}, {d})",
                    v.shape(),
                    rank * d
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub gateset: GateSet,
    pub state: EstimatorState,
    pub iterations: usize,
    pub converged: bool,
    pub loss_trace: Vec<f64>,
    pub final_loss: LossBreakdown,
}

/// Fits the gate set to the most recent `window_size` records. A warm
/// start carries the previous fit's isometries (re-orthonormalized) with
/// fresh optimizer moments; a cold start perturbs the ideal gate set.
/// Returns the best iterate visited (by total loss), so refitting from a
/// converged state can never report a worse loss than it started with even
/// though the optimizer's warmup steps briefly leave the optimum.
pub fn fit(
    device: &Device,
    records: &[Record],
    config: &EstimatorConfig,
    warm: Option<&EstimatorState>,
) -> Result<FitReport> {
    device.validate()?;
    config.validate()?;
    for record in records {
        record.circuit.validate(device)?;
        record.sample.validate(&record.circuit)?;
    }
    let start = records.len().saturating_sub(config.window_size);
    let window = &records[start..];

    let mut isometries = match warm {
        Some(state) => {
            state.validate_for(device)?;
            // Re-orthonormalize: numerical drift from a long previous run
            // must not compound across checkpoints.
            state
                .isometries
                .iter()
                .map(|(&key, v)| (key, stiefel::retract(v, &ComplexMatrix::zeros(v.nrows(), v.ncols()))))
                .collect::<BTreeMap<_, _>>()
        }
        None => {
            let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
            EstimatorState::ideal(device)
                .isometries
                .into_iter()
                .map(|(key, v)| {
                    let xi = stiefel::random_tangent(&mut rng, &v, config.init_perturbation);
                    (key, stiefel::retract(&v, &xi))
                })
                .collect()
        }
    };

    let mut moments: BTreeMap<GateKey, radam::RAdamState> = isometries
        .iter()
        .map(|(&key, v)| (key, radam::RAdamState::new(v.nrows(), v.ncols())))
        .collect();

    let mut loss_trace = Vec::with_capacity(config.max_iters);
    let mut best = f64::INFINITY;
    let mut best_seen = f64::INFINITY;
    let mut best_breakdown = LossBreakdown::default();
    let mut best_isometries = isometries.clone();
    let mut stagnant = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    for step_index in 1..=config.max_iters {
        let (loss, grads) = gradient::loss_and_gradient(
            device,
            &isometries,
            window,
            config.lambda_single,
            config.lambda_two,
        )?;
        loss_trace.push(loss.total);
        iterations = step_index;
        if loss.total < best_seen {
            best_seen = loss.total;
            best_breakdown = loss;
            best_isometries.clone_from(&isometries);
        }

        let mut grad_norm_sq = 0.0f64;
        for (key, v) in isometries.iter_mut() {
            let state = moments.get_mut(key).expect("moment keys match");
            grad_norm_sq += radam::step(&config.optimizer, step_index, v, state, &grads[key]);
        }

        if grad_norm_sq.sqrt() < config.grad_tol {
            converged = true;
            break;
        }
        if best - loss.total < config.convergence_tol * (1.0 + best.abs()) {
            stagnant += 1;
            if stagnant >= config.patience && step_index >= config.min_iters {
                converged = true;
                break;
            }
        } else {
            stagnant = 0;
        }
        best = best.min(loss.total);
    }

    // The loop leaves `isometries` one step past the last evaluated loss;
    // keep whichever of that endpoint and the best evaluated iterate wins.
    let final_candidate = gradient::loss_value(
        device,
        &isometries,
        window,
        config.lambda_single,
        config.lambda_two,
    )?;
    let (final_loss, state) = if final_candidate.total <= best_seen {
        (final_candidate, EstimatorState { isometries })
    } else {
        (best_breakdown, EstimatorState { isometries: best_isometries })
    };
    let gateset = state.to_gateset(device)?;
    Ok(FitReport {
        gateset,
        state,
        iterations,
        converged,
        loss_trace,
        final_loss,
    })
}

/// One entry of a monitoring run.
#[derive(Debug, Clone)]
pub struct CheckpointFit {
    /// Number of records consumed up to this checkpoint.
    pub n_records: usize,
    pub report: FitReport,
}

/// Replays a growing record log: at each checkpoint the fit sees all
/// records so far (windowed) and warm-starts from the previous checkpoint.
pub fn monitoring_run(
    device: &Device,
    records: &[Record],
    checkpoints: &[usize],
    config: &EstimatorConfig,
) -> Result<Vec<CheckpointFit>> {
    let mut sorted = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.first() == Some(&0) {
        return Err(Error::validation("checkpoints must be positive record counts"));
    }
    if let Some(&last) = sorted.last() {
        if last > records.len() {
            return Err(Error::validation(format!(
                "checkpoint {last} exceeds the {} available records",
                records.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(sorted.len());
    let mut warm: Option<EstimatorState> = None;
    for &count in &sorted {
        let report = fit(device, &records[..count], config, warm.as_ref())?;
        warm = Some(report.state.clone());
        out.push(CheckpointFit {
            n_records: count,
            report,
        });
    }
    Ok(out)
}

//! Evaluation quantities for reconstructed gate sets: prediction
//! inaccuracy against sampled counts, per-gate distance reports, the
//! basis-state calibration routine, and readout error rates.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::circuit::{
    bitstring_to_index, index_to_bitstring, Circuit, GateSet, Label, Op, Sample, Target,
};
use crate::error::{Error, Result};
use crate::estimator::Record;
use crate::linalg::trace_norm_hermitian;
use crate::sdp::{diamond_distance, DiamondOptions};
use crate::simulator::{circuit_probabilities, sample_outcomes, CompiledGateSet, MAX_QUBITS};

// ---------------------------------------------------------------------------
// Prediction inaccuracy
// ---------------------------------------------------------------------------

/// L1 distance between the model's outcome distribution and the observed
/// frequencies: sum over all 2^m strings of |P(s) - f(s)|, in [0, 2].
pub fn prediction_inaccuracy(gs: &GateSet, circuit: &Circuit, sample: &Sample) -> Result<f64> {
    let compiled = CompiledGateSet::new(gs);
    prediction_inaccuracy_compiled(&compiled, circuit, sample)
}

/// Same, reusing an already-compiled gate set (the hot path when many
/// circuits are evaluated against one gate set).
pub fn prediction_inaccuracy_compiled(
    compiled: &CompiledGateSet,
    circuit: &Circuit,
    sample: &Sample,
) -> Result<f64> {
    let m = circuit.measured_qubits().len();
    if m > MAX_QUBITS {
        return Err(Error::validation(format!(
            "cannot enumerate 2^{m} outcomes (cap 2^{MAX_QUBITS})"
        )));
    }
    let probs = circuit_probabilities(compiled, circuit)?;
    prediction_inaccuracy_from_probs(&probs, sample)
}

/// The L1 distance given an explicit model distribution over all 2^m
/// outcomes of the sample's measured register.
pub fn prediction_inaccuracy_from_probs(probs: &[f64], sample: &Sample) -> Result<f64> {
    if !probs.len().is_power_of_two() {
        return Err(Error::validation(
            "model distribution length must be a power of two",
        ));
    }
    let m = probs.len().trailing_zeros() as usize;
    if sample.shots == 0 {
        return Err(Error::validation("sample has zero shots"));
    }
    let mut freqs = vec![0.0f64; probs.len()];
    for (s, &count) in &sample.counts {
        if s.len() != m {
            return Err(Error::validation(format!(
                "outcome '{s}' does not match the {m}-bit register"
            )));
        }
        freqs[bitstring_to_index(s)?] += count as f64 / sample.shots as f64;
    }
    Ok(probs
        .iter()
        .zip(freqs.iter())
        .map(|(p, f)| (p - f).abs())
        .sum())
}

// ---------------------------------------------------------------------------
// Layerwise curves
// ---------------------------------------------------------------------------

/// Which side of the checkpoint's train/test split a record falls on:
/// records already consumed by the fit are "train", later ones "test".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One row of the layerwise prediction-inaccuracy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    /// Checkpoint: number of records the fit had consumed.
    pub i: usize,
    pub n_layers: usize,
    pub split: Split,
    pub mean_delta: f64,
    pub count: usize,
}

/// Mean prediction inaccuracy per (layer count, split) for each checkpoint
/// gate set. `checkpoints` pairs the record count consumed by each fit
/// with the fitted gate set. Groups with no circuits are omitted.
pub fn layerwise_curves(
    checkpoints: &[(usize, &GateSet)],
    records: &[Record],
) -> Result<Vec<CurveRow>> {
    let mut rows = Vec::new();
    for &(consumed, gs) in checkpoints {
        let compiled = CompiledGateSet::new(gs);
        let deltas: Vec<f64> = records
            .par_iter()
            .map(|r| prediction_inaccuracy_compiled(&compiled, &r.circuit, &r.sample))
            .collect::<Result<Vec<_>>>()?;
        let mut groups: BTreeMap<(usize, Split), (f64, usize)> = BTreeMap::new();
        for (j, (record, delta)) in records.iter().zip(deltas).enumerate() {
            let split = if j < consumed { Split::Train } else { Split::Test };
            let entry = groups.entry((record.circuit.n_layers, split)).or_insert((0.0, 0));
            entry.0 += delta;
            entry.1 += 1;
        }
        for ((n_layers, split), (sum, count)) in groups {
            rows.push(CurveRow {
                i: consumed,
                n_layers,
                split,
                mean_delta: sum / count as f64,
                count,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Distance report
// ---------------------------------------------------------------------------

/// POVM distance between two single-qubit measurement channels: the trace
/// norm of the difference of their outcome-0 effects.
pub fn povm_l1_distance(a: &Channel, b: &Channel) -> Result<f64> {
    if a.dim() != 2 || b.dim() != 2 {
        return Err(Error::validation(
            "POVM distance is defined for single-qubit channels",
        ));
    }
    let ea = a.povm_effect(0)?;
    let eb = b.povm_effect(0)?;
    trace_norm_hermitian(&(&ea.matrix - &eb.matrix))
}

/// Distance metrics reported per fitted operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    DiamondToIdeal,
    DiamondToTrue,
    ChoiFrobeniusToIdeal,
    ChoiFrobeniusToTrue,
    PovmL1ToIdeal,
    PovmL1ToTrue,
}

/// One row of the distances table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    /// Checkpoint: number of records the fit had consumed.
    pub i: usize,
    pub label: String,
    pub target: String,
    pub metric: DistanceMetric,
    pub value: f64,
}

/// Distances of every fitted operation to its noiseless ideal and, when a
/// reference gate set is supplied, to the reference. POVM rows appear for
/// measurement channels only.
pub fn distance_report(
    checkpoints: &[(usize, &GateSet)],
    reference: Option<&GateSet>,
    opts: &DiamondOptions,
) -> Result<Vec<DistanceRow>> {
    let mut rows = Vec::new();
    for &(consumed, gs) in checkpoints {
        let keys: Vec<(Label, Target)> = gs
            .iter()
            .map(|(&key, _)| key)
            .filter(|(label, _)| *label != Label::P)
            .collect();
        let per_key: Vec<Vec<DistanceRow>> = keys
            .par_iter()
            .map(|&(label, target)| {
                let est = gs.get(label, target)?;
                let ideal = Channel::from_unitary(
                    &label
                        .ideal_unitary()
                        .expect("non-preparation labels have ideal unitaries"),
                )?;
                let mut out = Vec::new();
                let mut push = |metric: DistanceMetric, value: f64| -> Result<()> {
                    let bounded_by_two = matches!(
                        metric,
                        DistanceMetric::DiamondToIdeal | DistanceMetric::DiamondToTrue
                    );
                    if !value.is_finite() || value < 0.0 || (bounded_by_two && value > 2.0 + 1e-9)
                    {
                        return Err(Error::numerical(format!(
                            "distance {metric:?} for {label} on {target} out of range: {value}"
                        )));
                    }
                    out.push(DistanceRow {
                        i: consumed,
                        label: label.as_str().to_string(),
                        target: target.to_text(),
                        metric,
                        value,
                    });
                    Ok(())
                };
                push(
                    DistanceMetric::DiamondToIdeal,
                    diamond_distance(est, &ideal, opts)?.value,
                )?;
                push(
                    DistanceMetric::ChoiFrobeniusToIdeal,
                    (est.choi() - ideal.choi()).norm(),
                )?;
                if label == Label::M {
                    push(DistanceMetric::PovmL1ToIdeal, povm_l1_distance(est, &ideal)?)?;
                }
                if let Some(truth) = reference {
                    let true_chan = truth.get(label, target)?;
                    push(
                        DistanceMetric::DiamondToTrue,
                        diamond_distance(est, true_chan, opts)?.value,
                    )?;
                    push(
                        DistanceMetric::ChoiFrobeniusToTrue,
                        (est.choi() - true_chan.choi()).norm(),
                    )?;
                    if label == Label::M {
                        push(
                            DistanceMetric::PovmL1ToTrue,
                            povm_l1_distance(est, true_chan)?,
                        )?;
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.extend(per_key.into_iter().flatten());
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Number of qubits of the calibration routine's device.
pub const CALIBRATION_QUBITS: usize = 5;

/// Frequencies from preparing and measuring each computational basis
/// state: rows are the prepared state, columns the observed string.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMatrix {
    /// 32 rows of 32 frequencies each.
    pub frequencies: Vec<Vec<f64>>,
}

impl CalibrationMatrix {
    pub fn dim() -> usize {
        1 << CALIBRATION_QUBITS
    }

    /// Entry bounds and row normalization.
    pub fn validate(&self) -> Result<()> {
        let dim = Self::dim();
        if self.frequencies.len() != dim {
            return Err(Error::validation(format!(
                "calibration matrix must have {dim} rows, got {}",
                self.frequencies.len()
            )));
        }
        for (x, row) in self.frequencies.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::validation(format!(
                    "calibration row {x} must have {dim} entries, got {}",
                    row.len()
                )));
            }
            let mut total = 0.0;
            for &v in row {
                if !(0.0..=1.0 + 1e-12).contains(&v) {
                    return Err(Error::validation(format!(
                        "calibration frequency out of range in row {x}: {v}"
                    )));
                }
                total += v;
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::validation(format!(
                    "calibration row {x} sums to {total}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Writes the matrix as CSV: a header of the 32 observed bit strings,
    /// then one frequency row per prepared state in index order.
    pub fn to_csv_path(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let dim = Self::dim();
        let mut writer = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..dim)
            .map(|s| index_to_bitstring(s, CALIBRATION_QUBITS))
            .collect();
        writer.write_record(&header)?;
        for row in &self.frequencies {
            writer.write_record(row.iter().map(|v| v.to_string()))?;
        }
        writer
            .flush()
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn from_csv_path(path: &Path) -> Result<CalibrationMatrix> {
        let dim = Self::dim();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let header = reader.headers()?.clone();
        for (s, field) in header.iter().enumerate() {
            let expected = index_to_bitstring(s, CALIBRATION_QUBITS);
            if field != expected {
                return Err(Error::validation(format!(
                    "calibration header column {s} is '{field}', expected '{expected}'"
                )));
            }
        }
        let mut frequencies = Vec::with_capacity(dim);
        for record in reader.records() {
            let record = record?;
            let row: Vec<f64> = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|_| {
                        Error::validation(format!("bad calibration entry '{field}'"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            frequencies.push(row);
        }
        let cm = CalibrationMatrix { frequencies };
        cm.validate()?;
        Ok(cm)
    }
}

/// The circuit that prepares basis state `x` and measures every qubit:
/// resets on all qubits, a bit flip wherever `x` has a one, then readout.
pub fn calibration_circuit(x: usize) -> Circuit {
    let n = CALIBRATION_QUBITS;
    let mut ops = Vec::new();
    for q in 0..n {
        ops.push(Op::new(Label::P, Target::Q(q)));
    }
    for q in 0..n {
        if (x >> q) & 1 == 1 {
            ops.push(Op::new(Label::X, Target::Q(q)));
        }
    }
    for q in 0..n {
        ops.push(Op::new(Label::M, Target::Q(q)));
    }
    Circuit {
        n,
        ops,
        n_layers: 0,
    }
}

/// Runs the 32-state calibration routine against a gate set: samples
/// `shots` outcomes per prepared basis state and records the frequencies.
pub fn calibration_matrix<R: Rng>(
    gs: &GateSet,
    shots: u64,
    rng: &mut R,
) -> Result<CalibrationMatrix> {
    if gs.n_qubits != CALIBRATION_QUBITS {
        return Err(Error::validation(format!(
            "calibration runs on {CALIBRATION_QUBITS} qubits, gate set has {}",
            gs.n_qubits
        )));
    }
    if shots == 0 {
        return Err(Error::validation("calibration needs at least one shot"));
    }
    let dim = CalibrationMatrix::dim();
    let compiled = CompiledGateSet::new(gs);
    let mut frequencies = Vec::with_capacity(dim);
    for x in 0..dim {
        let circuit = calibration_circuit(x);
        let probs = circuit_probabilities(&compiled, &circuit)?;
        let counts = sample_outcomes(&probs, shots, rng)?;
        let mut row = vec![0.0f64; dim];
        for (s, &count) in &counts {
            row[bitstring_to_index(s)?] = count as f64 / shots as f64;
        }
        frequencies.push(row);
    }
    let cm = CalibrationMatrix { frequencies };
    cm.validate()?;
    Ok(cm)
}

// ---------------------------------------------------------------------------
// Readout error rates
// ---------------------------------------------------------------------------

/// Readout error rates of one qubit extracted from a calibration matrix by
/// marginal averaging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentalRates {
    /// Prepared 0, observed 1.
    pub e01: f64,
    /// Prepared 1, observed 0.
    pub e10: f64,
}

/// Extracts per-qubit experimental rates: e_{x->y}(t) averages, over all
/// 16 rows whose prepared bit at t equals x, the observed frequency of bit
/// y at t.
pub fn error_rates_from_calibration(cm: &CalibrationMatrix) -> Result<Vec<ExperimentalRates>> {
    cm.validate()?;
    let dim = CalibrationMatrix::dim();
    let mut rates = Vec::with_capacity(CALIBRATION_QUBITS);
    for t in 0..CALIBRATION_QUBITS {
        let mut sums = [0.0f64; 2]; // indexed by prepared bit
        for (x, row) in cm.frequencies.iter().enumerate() {
            let prepared = (x >> t) & 1;
            let flipped: f64 = row
                .iter()
                .enumerate()
                .filter(|(s, _)| (s >> t) & 1 != prepared)
                .map(|(_, &v)| v)
                .sum();
            sums[prepared] += flipped;
        }
        let half = (dim / 2) as f64;
        rates.push(ExperimentalRates {
            e01: sums[0] / half,
            e10: sums[1] / half,
        });
    }
    Ok(rates)
}

/// Readout error rates of one qubit implied by an estimated gate set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedRates {
    /// Prob. of observing 1 on an ideally prepared 0.
    pub e01: f64,
    /// Prob. of observing 0 on an ideally prepared 1.
    pub e10: f64,
    /// Prob. of observing 0 after the estimated bit flip acts on a
    /// prepared 0 — the variant comparable to the calibration routine,
    /// which reaches the 1 state through the (noisy) flip.
    pub e10_acc: f64,
}

/// Rates implied by the estimated measurement channel at `qubit` (and its
/// estimated bit-flip gate for the accurate 1->0 variant).
pub fn error_rates_estimated(gs: &GateSet, qubit: usize) -> Result<EstimatedRates> {
    let m_chan = gs.get(Label::M, Target::Q(qubit))?;
    let e0 = m_chan.povm_effect(0)?.matrix;
    let e1 = m_chan.povm_effect(1)?.matrix;
    let e01 = e1[(0, 0)].re;
    let e10 = e0[(1, 1)].re;
    let x_chan = gs.get(Label::X, Target::Q(qubit))?;
    let mut zero = crate::linalg::ComplexMatrix::zeros(2, 2);
    zero[(0, 0)] = crate::linalg::c(1.0, 0.0);
    let flipped = x_chan.apply(&zero)?;
    let e10_acc = (&flipped * &e0).trace().re;
    for (name, v) in [("e01", e01), ("e10", e10), ("e10_acc", e10_acc)] {
        if !(-1e-9..=1.0 + 1e-9).contains(&v) {
            return Err(Error::numerical(format!(
                "estimated rate {name} for qubit {qubit} out of range: {v}"
            )));
        }
    }
    Ok(EstimatedRates {
        e01: e01.clamp(0.0, 1.0),
        e10: e10.clamp(0.0, 1.0),
        e10_acc: e10_acc.clamp(0.0, 1.0),
    })
}

/// Row naming for the rates table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMetric {
    E01Exp,
    E10Exp,
    E01Est,
    E10Est,
    E10EstAcc,
}

/// One row of the rates table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub qubit: usize,
    pub metric: RateMetric,
    pub value: f64,
}

/// The side-by-side rates table: experimental rates from a calibration
/// matrix next to the rates implied by an estimated gate set.
pub fn error_rate_table(cm: &CalibrationMatrix, gs_est: &GateSet) -> Result<Vec<RateRow>> {
    let experimental = error_rates_from_calibration(cm)?;
    let mut rows = Vec::new();
    for (qubit, exp) in experimental.iter().enumerate() {
        let est = error_rates_estimated(gs_est, qubit)?;
        for (metric, value) in [
            (RateMetric::E01Exp, exp.e01),
            (RateMetric::E10Exp, exp.e10),
            (RateMetric::E01Est, est.e01),
            (RateMetric::E10Est, est.e10),
            (RateMetric::E10EstAcc, est.e10_acc),
        ] {
            rows.push(RateRow {
                qubit,
                metric,
                value,
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CSV round trips
// ---------------------------------------------------------------------------

fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

fn read_rows_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    reader
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_curves_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    write_rows_csv(path, rows)
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<CurveRow>> {
    read_rows_csv(path)
}

pub fn write_distances_csv(path: &Path, rows: &[DistanceRow]) -> Result<()> {
    write_rows_csv(path, rows)
}

pub fn read_distances_csv(path: &Path) -> Result<Vec<DistanceRow>> {
    read_rows_csv(path)
}

pub fn write_rates_csv(path: &Path, rows: &[RateRow]) -> Result<()> {
    write_rows_csv(path, rows)
}

pub fn read_rates_csv(path: &Path) -> Result<Vec<RateRow>> {
    read_rows_csv(path)
}

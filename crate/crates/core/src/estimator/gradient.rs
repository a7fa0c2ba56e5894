//! Loss and gradient for windowed maximum-likelihood gate-set fitting.
//!
//! The loss over a window of records is
//!
//!     L = sum_j sum_s n_{js} (-log max(P_{js}, floor))
//!       + sum_g lambda_g || C(Phi_g) - C(ideal_g) ||_F^2
//!
//! with P_{js} the outcome probabilities of circuit j under the candidate
//! gate set. The gradient with respect to each stacked-Kraus isometry is
//! computed with one forward pass (storing intermediate states) and one
//! backward pass per circuit: the backward observable starts from
//! W = sum_s w_s |s><s| with w_s = -n_s / P_s and is pulled through the
//! adjoint channels, and each operation's Kraus gradient is extracted from
//! the pair (sigma_k, rho_{k-1}) through a contraction over non-target
//! indices whose cost does not depend on the Kraus count.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::kraus_to_choi;
use crate::circuit::{bitstring_to_index, Circuit, Device, GateKey, Label, Sample, Target};
use crate::error::{Error, Result};
use crate::linalg::{c, vec_row_major, ComplexMatrix};
use crate::simulator::{apply_superop_grouped, channel_superop, index_groups, LIKELIHOOD_FLOOR};

use super::stiefel::kraus_blocks;

/// One executed circuit with its measured counts.
#[derive(Debug, Clone)]
pub struct Record {
    pub circuit: Circuit,
    pub sample: Sample,
}

/// Loss decomposition.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub data_term: f64,
    pub regularizer: f64,
}

/// Kraus ranks carried by the parameterization: full rank d^2.
pub fn kraus_rank(label: Label) -> usize {
    if label.is_two_qubit() {
        16
    } else {
        4
    }
}

/// Fixed per-evaluation context: superoperators of the candidate gates,
/// their adjoints, index groups per target, and regularizer data.
struct Engine {
    n: usize,
    kraus: BTreeMap<GateKey, Vec<ComplexMatrix>>,
    superops: BTreeMap<GateKey, ComplexMatrix>,
    adjoints: BTreeMap<GateKey, ComplexMatrix>,
    prep: ComplexMatrix,
    prep_adjoint: ComplexMatrix,
    groups: BTreeMap<Target, Vec<Vec<usize>>>,
    lambdas: BTreeMap<GateKey, f64>,
    ideal_chois: BTreeMap<GateKey, ComplexMatrix>,
}

impl Engine {
    fn new(
        device: &Device,
        isometries: &BTreeMap<GateKey, ComplexMatrix>,
        lambda_single: f64,
        lambda_two: f64,
    ) -> Result<Engine> {
        let n = device.n_qubits;
        let mut kraus = BTreeMap::new();
        let mut superops = BTreeMap::new();
        let mut adjoints = BTreeMap::new();
        let mut lambdas = BTreeMap::new();
        let mut ideal_chois = BTreeMap::new();
        for (&key, v) in isometries {
            let (label, target) = key;
            let d = if label.is_two_qubit() { 4 } else { 2 };
            let rank = kraus_rank(label);
            if v.shape() != (rank * d, d) {
                return Err(Error::validation(format!(
                    "isometry for {label} on {target} has shape {:?}, expected ({}, {d})",
                    v.shape(),
                    rank * d
                )));
            }
            let blocks = kraus_blocks(v);
            let mut s = ComplexMatrix::zeros(d * d, d * d);
            for k in &blocks {
                s += crate::linalg::kron(k, &k.map(|z| z.conj()));
            }
            adjoints.insert(key, s.adjoint());
            superops.insert(key, s);
            kraus.insert(key, blocks);
            lambdas.insert(key, if label.is_two_qubit() { lambda_two } else { lambda_single });
            let u = label
                .ideal_unitary()
                .ok_or_else(|| Error::validation("preparations are not fit parameters"))?;
            ideal_chois.insert(key, kraus_to_choi(&[u]));
        }
        let mut groups = BTreeMap::new();
        for q in 0..n {
            groups.insert(Target::Q(q), index_groups(n, &[q]));
        }
        for &(a, b) in &device.couplings {
            groups.insert(Target::Pair(a, b), index_groups(n, &[a, b]));
        }
        let prep_chan = crate::channel::Channel::reset_to_zero(2);
        let prep = channel_superop(&prep_chan);
        let prep_adjoint = prep.adjoint();
        Ok(Engine {
            n,
            kraus,
            superops,
            adjoints,
            prep,
            prep_adjoint,
            groups,
            lambdas,
            ideal_chois,
        })
    }

    fn op_superop(&self, label: Label, target: Target) -> Result<&ComplexMatrix> {
        if label == Label::P {
            return Ok(&self.prep);
        }
        self.superops.get(&(label, target)).ok_or_else(|| {
            Error::validation(format!("no fit parameter for {label} on {target}"))
        })
    }

    fn op_adjoint(&self, label: Label, target: Target) -> Result<&ComplexMatrix> {
        if label == Label::P {
            return Ok(&self.prep_adjoint);
        }
        self.adjoints.get(&(label, target)).ok_or_else(|| {
            Error::validation(format!("no fit parameter for {label} on {target}"))
        })
    }

    fn op_groups(&self, target: Target) -> Result<&Vec<Vec<usize>>> {
        self.groups
            .get(&target)
            .ok_or_else(|| Error::validation(format!("target {target} is not on the device")))
    }

    /// Data term of one record, and optionally the per-gate gradient
    /// contributions.
    fn record_terms(
        &self,
        record: &Record,
        with_gradient: bool,
    ) -> Result<(f64, BTreeMap<GateKey, ComplexMatrix>)> {
        let circuit = &record.circuit;
        if circuit.n != self.n {
            return Err(Error::validation(format!(
                "circuit on {} qubits, fit on {}",
                circuit.n, self.n
            )));
        }
        let dim = 1usize << self.n;
        let measured = circuit.measured_qubits();
        if measured.is_empty() {
            return Err(Error::validation("record's circuit measures no qubits"));
        }
        let m = measured.len();

        // Forward pass, keeping every intermediate state when the backward
        // pass will need them.
        let mut state = ComplexMatrix::zeros(dim, dim);
        state[(0, 0)] = c(1.0, 0.0);
        let mut states: Vec<ComplexMatrix> = Vec::new();
        if with_gradient {
            states.reserve(circuit.ops.len());
        }
        for op in &circuit.ops {
            if with_gradient {
                states.push(state.clone());
            }
            let d = 1usize << op.target.arity();
            let superop = self.op_superop(op.label, op.target)?;
            let groups = self.op_groups(op.target)?;
            state = apply_superop_grouped(&state, superop, groups, d);
        }

        // Outcome probabilities over the measured qubits.
        let mut probs = vec![0.0f64; 1 << m];
        for g in 0..dim {
            let mut local = 0usize;
            for (i, &q) in measured.iter().enumerate() {
                local |= ((g >> q) & 1) << i;
            }
            probs[local] += state[(g, g)].re;
        }

        let mut data_term = 0.0f64;
        let mut weights = vec![0.0f64; 1 << m];
        for (s, &count) in &record.sample.counts {
            if s.len() != m {
                return Err(Error::validation(format!(
                    "outcome '{s}' does not match {m} measured qubits"
                )));
            }
            let idx = bitstring_to_index(s)?;
            let p = probs[idx];
            data_term -= count as f64 * p.max(LIKELIHOOD_FLOOR).ln();
            if p > LIKELIHOOD_FLOOR {
                weights[idx] = -(count as f64) / p;
            }
        }

        let mut grads: BTreeMap<GateKey, ComplexMatrix> = BTreeMap::new();
        if !with_gradient {
            return Ok((data_term, grads));
        }

        // Backward observable: diagonal in the computational basis.
        let mut sigma = ComplexMatrix::zeros(dim, dim);
        for g in 0..dim {
            let mut local = 0usize;
            for (i, &q) in measured.iter().enumerate() {
                local |= ((g >> q) & 1) << i;
            }
            sigma[(g, g)] = c(weights[local], 0.0);
        }

        for (k, op) in circuit.ops.iter().enumerate().rev() {
            let d = 1usize << op.target.arity();
            let groups = self.op_groups(op.target)?;
            if op.label != Label::P {
                let key = (op.label, op.target);
                let kraus = &self.kraus[&key];
                let w = w_tensor(&sigma, &states[k], groups, d);
                let rank = kraus.len();
                let grad = grads
                    .entry(key)
                    .or_insert_with(|| ComplexMatrix::zeros(rank * d, d));
                for (mi, km) in kraus.iter().enumerate() {
                    for i in 0..d {
                        for j in 0..d {
                            let mut acc = Complex64::default();
                            for x in 0..d {
                                for y in 0..d {
                                    acc += km[(x, y)] * w[((x * d + y) * d + i) * d + j];
                                }
                            }
                            grad[(mi * d + i, j)] += 2.0 * acc;
                        }
                    }
                }
            }
            let adjoint = self.op_adjoint(op.label, op.target)?;
            sigma = apply_superop_grouped(&sigma, adjoint, groups, d);
        }
        Ok((data_term, grads))
    }

    /// Regularizer value and (optionally) its gradient contributions.
    fn regularizer_terms(
        &self,
        with_gradient: bool,
    ) -> (f64, BTreeMap<GateKey, ComplexMatrix>) {
        let mut value = 0.0f64;
        let mut grads = BTreeMap::new();
        for (&key, kraus) in &self.kraus {
            let lambda = self.lambdas[&key];
            let delta = kraus_to_choi(kraus) - &self.ideal_chois[&key];
            value += lambda * delta.iter().map(Complex64::norm_sqr).sum::<f64>();
            if !with_gradient {
                continue;
            }
            let d = kraus[0].nrows();
            let rank = kraus.len();
            let mut grad = ComplexMatrix::zeros(rank * d, d);
            for (mi, km) in kraus.iter().enumerate() {
                let w = vec_row_major(km);
                // d/dK of lambda ||C - C0||^2 through C = sum vec(K) vec(K)^+:
                // gradient on vec(K) is 4 lambda (C - C0) vec(K).
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = Complex64::default();
                        for (col, &wv) in w.iter().enumerate() {
                            acc += delta[(i * d + j, col)] * wv;
                        }
                        grad[(mi * d + i, j)] = 4.0 * lambda * acc;
                    }
                }
            }
            grads.insert(key, grad);
        }
        (value, grads)
    }
}

/// The contraction W[x,y;i,j] = sum_{r,b} sigma[(i,r),(x,b)] rho[(y,b),(j,r)]
/// over non-target indices, laid out as a flat d^4 vector indexed
/// ((x d + y) d + i) d + j. The gate gradient follows as
/// G_m[i,j] = 2 sum_{x,y} K_m[x,y] W[x,y;i,j].
fn w_tensor(
    sigma: &ComplexMatrix,
    rho_prev: &ComplexMatrix,
    groups: &[Vec<usize>],
    d: usize,
) -> Vec<Complex64> {
    let mut w = vec![Complex64::default(); d * d * d * d];
    for rg in groups {
        for bg in groups {
            for i in 0..d {
                for x in 0..d {
                    let s = sigma[(rg[i], bg[x])];
                    if s.re == 0.0 && s.im == 0.0 {
                        continue;
                    }
                    for y in 0..d {
                        let base = (x * d + y) * d + i;
                        for j in 0..d {
                            w[base * d + j] += s * rho_prev[(bg[y], rg[j])];
                        }
                    }
                }
            }
        }
    }
    w
}

/// Evaluates the full loss and its Euclidean gradient per gate (convention
/// dL = Re Tr(G^dagger dV)). Records are processed independently and folded
/// in order, so the result does not depend on the thread count.
pub fn loss_and_gradient(
    device: &Device,
    isometries: &BTreeMap<GateKey, ComplexMatrix>,
    records: &[Record],
    lambda_single: f64,
    lambda_two: f64,
) -> Result<(LossBreakdown, BTreeMap<GateKey, ComplexMatrix>)> {
    let engine = Engine::new(device, isometries, lambda_single, lambda_two)?;
    let per_record: Vec<(f64, BTreeMap<GateKey, ComplexMatrix>)> = records
        .par_iter()
        .map(|r| engine.record_terms(r, true))
        .collect::<Result<Vec<_>>>()?;

    let mut data_term = 0.0f64;
    let mut grads: BTreeMap<GateKey, ComplexMatrix> = BTreeMap::new();
    for (&key, v) in isometries {
        grads.insert(key, ComplexMatrix::zeros(v.nrows(), v.ncols()));
    }
    for (term, record_grads) in per_record {
        data_term += term;
        for (key, g) in record_grads {
            *grads.get_mut(&key).expect("gradient keys match isometries") += g;
        }
    }
    let (reg, reg_grads) = engine.regularizer_terms(true);
    for (key, g) in reg_grads {
        *grads.get_mut(&key).expect("gradient keys match isometries") += g;
    }
    Ok((
        LossBreakdown {
            total: data_term + reg,
            data_term,
            regularizer: reg,
        },
        grads,
    ))
}

/// Loss only (used for convergence reporting and derivative checks).
pub fn loss_value(
    device: &Device,
    isometries: &BTreeMap<GateKey, ComplexMatrix>,
    records: &[Record],
    lambda_single: f64,
    lambda_two: f64,
) -> Result<LossBreakdown> {
    let engine = Engine::new(device, isometries, lambda_single, lambda_two)?;
    let data_term: f64 = records
        .par_iter()
        .map(|r| engine.record_terms(r, false).map(|(t, _)| t))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    let (reg, _) = engine.regularizer_terms(false);
    Ok(LossBreakdown {
        total: data_term + reg,
        data_term,
        regularizer: reg,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::circuit::{random_circuit, Op};
    use crate::estimator::stiefel::{ideal_isometry, random_tangent, retract};
    use crate::simulator::{circuit_probabilities, sample_outcomes, CompiledGateSet};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    pub(crate) fn ideal_isometries(device: &Device) -> BTreeMap<GateKey, ComplexMatrix> {
        let mut map = BTreeMap::new();
        for (label, target) in device.supported_keys() {
            if label == Label::P {
                continue;
            }
            let u = label.ideal_unitary().unwrap();
            map.insert((label, target), ideal_isometry(&u, kraus_rank(label)));
        }
        map
    }

    pub(crate) fn perturbed_isometries(
        device: &Device,
        scale: f64,
        rng: &mut ChaCha12Rng,
    ) -> BTreeMap<GateKey, ComplexMatrix> {
        ideal_isometries(device)
            .into_iter()
            .map(|(key, v)| {
                let xi = random_tangent(rng, &v, scale);
                (key, retract(&v, &xi))
            })
            .collect()
    }

    pub(crate) fn sampled_records(
        device: &Device,
        gs: &crate::circuit::GateSet,
        n_circuits: usize,
        shots: u64,
        rng: &mut ChaCha12Rng,
    ) -> Vec<Record> {
        let compiled = CompiledGateSet::new(gs);
        (0..n_circuits)
            .map(|id| {
                let circuit = random_circuit(device, rng);
                let probs = circuit_probabilities(&compiled, &circuit).unwrap();
                let counts = sample_outcomes(&probs, shots, rng).unwrap();
                Record {
                    circuit,
                    sample: Sample {
                        circuit_id: id,
                        shots,
                        counts,
                    },
                }
            })
            .collect()
    }

    /// Derivative check on one real/imag coordinate pair of one isometry.
    fn check_entry(
        device: &Device,
        isometries: &BTreeMap<GateKey, ComplexMatrix>,
        records: &[Record],
        key: GateKey,
        row: usize,
        col: usize,
    ) {
        let (_, grads) = loss_and_gradient(device, isometries, records, 100.0, 200.0).unwrap();
        let g = grads[&key][(row, col)];
        let h = 1e-6;
        let eval = |dre: f64, dim: f64| -> f64 {
            let mut pert = isometries.clone();
            let entry = pert.get_mut(&key).unwrap();
            entry[(row, col)] += c(dre, dim);
            loss_value(device, &pert, records, 100.0, 200.0).unwrap().total
        };
        let fd_re = (eval(h, 0.0) - eval(-h, 0.0)) / (2.0 * h);
        let fd_im = (eval(0.0, h) - eval(0.0, -h)) / (2.0 * h);
        let scale = g.norm().max(1e-3);
        assert!(
            (fd_re - g.re).abs() / scale < 1e-5,
            "{:?}({row},{col}) re: adjoint {} vs fd {fd_re}",
            key,
            g.re
        );
        assert!(
            (fd_im - g.im).abs() / scale < 1e-5,
            "{:?}({row},{col}) im: adjoint {} vs fd {fd_im}",
            key,
            g.im
        );
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let device = Device::default_five_qubit();
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let truth =
            crate::noise::true_gateset(&crate::noise::NoiseTable::builtin(), &device).unwrap();
        let records = sampled_records(&device, &truth, 3, 512, &mut rng);
        let isometries = perturbed_isometries(&device, 0.05, &mut rng);
        // A single-qubit gate, the measurement channel, and the two-qubit
        // gate each get spot checks.
        check_entry(&device, &isometries, &records, (Label::X, Target::Q(2)), 3, 1);
        check_entry(&device, &isometries, &records, (Label::M, Target::Q(0)), 0, 0);
        check_entry(&device, &isometries, &records, (Label::Sx, Target::Q(4)), 6, 0);
        check_entry(
            &device,
            &isometries,
            &records,
            (Label::Cx, Target::Pair(3, 4)),
            17,
            2,
        );
    }

    #[test]
    fn regularizer_gradient_matches_finite_differences() {
        let device = Device::default_five_qubit();
        let mut rng = ChaCha12Rng::seed_from_u64(72);
        let isometries = perturbed_isometries(&device, 0.1, &mut rng);
        // No records: pure regularizer.
        check_entry(&device, &isometries, &[], (Label::Rz, Target::Q(1)), 5, 1);
        check_entry(
            &device,
            &isometries,
            &[],
            (Label::Cx, Target::Pair(0, 1)),
            40,
            3,
        );
    }

    #[test]
    fn loss_is_minimal_near_the_data_generating_gateset() {
        // Sampling from the true gate set, the data term evaluated at the
        // truth must beat the data term at a visibly wrong gate set.
        let device = Device::default_five_qubit();
        let mut rng = ChaCha12Rng::seed_from_u64(73);
        let table = crate::noise::NoiseTable::builtin();
        let truth = crate::noise::true_gateset(&table, &device).unwrap();
        let records = sampled_records(&device, &truth, 20, 2048, &mut rng);

        let truth_isometries: BTreeMap<GateKey, ComplexMatrix> = truth
            .iter()
            .filter(|((label, _), _)| *label != Label::P)
            .map(|(&key, chan)| {
                let v = crate::estimator::stiefel::stack_kraus(
                    chan.kraus(),
                    kraus_rank(key.0),
                )
                .unwrap();
                (key, v)
            })
            .collect();
        let ideal = ideal_isometries(&device);
        let at_truth = loss_value(&device, &truth_isometries, &records, 0.0, 0.0).unwrap();
        let at_ideal = loss_value(&device, &ideal, &records, 0.0, 0.0).unwrap();
        assert!(
            at_truth.data_term < at_ideal.data_term,
            "truth {} vs ideal {}",
            at_truth.data_term,
            at_ideal.data_term
        );
    }

    #[test]
    fn forward_probabilities_match_the_simulator() {
        let device = Device::default_five_qubit();
        let mut rng = ChaCha12Rng::seed_from_u64(74);
        let table = crate::noise::NoiseTable::builtin();
        let truth = crate::noise::true_gateset(&table, &device).unwrap();
        let circuit = random_circuit(&device, &mut rng);
        let compiled = CompiledGateSet::new(&truth);
        let probs = circuit_probabilities(&compiled, &circuit).unwrap();

        // Express the truth through isometries and evaluate the data term
        // of a single-count sample for each outcome; the implied
        // probability must match the simulator.
        let isometries: BTreeMap<GateKey, ComplexMatrix> = truth
            .iter()
            .filter(|((label, _), _)| *label != Label::P)
            .map(|(&key, chan)| {
                (
                    key,
                    crate::estimator::stiefel::stack_kraus(chan.kraus(), kraus_rank(key.0))
                        .unwrap(),
                )
            })
            .collect();
        for (idx, &p) in probs.iter().enumerate().take(8) {
            if p < 1e-12 {
                continue;
            }
            let s = crate::circuit::index_to_bitstring(idx, 5);
            let mut counts = std::collections::BTreeMap::new();
            counts.insert(s, 1u64);
            let record = Record {
                circuit: circuit.clone(),
                sample: Sample {
                    circuit_id: 0,
                    shots: 1,
                    counts,
                },
            };
            let loss = loss_value(&device, &isometries, &[record], 0.0, 0.0).unwrap();
            assert!(
                (loss.data_term - (-p.ln())).abs() < 1e-9,
                "outcome {idx}: loss {} vs -ln p {}",
                loss.data_term,
                -p.ln()
            );
        }
    }

    #[test]
    fn records_fold_identically_regardless_of_partitioning() {
        let device = Device::default_five_qubit();
        let mut rng = ChaCha12Rng::seed_from_u64(75);
        let table = crate::noise::NoiseTable::builtin();
        let truth = crate::noise::true_gateset(&table, &device).unwrap();
        let records = sampled_records(&device, &truth, 6, 256, &mut rng);
        let isometries = perturbed_isometries(&device, 0.03, &mut rng);
        let (all, grads_all) =
            loss_and_gradient(&device, &isometries, &records, 100.0, 200.0).unwrap();
        // Summing two halves reproduces the data term and gradients exactly
        // up to the regularizer, which is data independent.
        let (a, grads_a) =
            loss_and_gradient(&device, &isometries, &records[..3], 100.0, 200.0).unwrap();
        let (b, grads_b) =
            loss_and_gradient(&device, &isometries, &records[3..], 100.0, 200.0).unwrap();
        assert!((all.data_term - (a.data_term + b.data_term)).abs() < 1e-9);
        // Each evaluation adds the regularizer gradient once, so combining
        // the halves double counts it; subtract the no-data gradient.
        let (_, reg_only) =
            loss_and_gradient(&device, &isometries, &[], 100.0, 200.0).unwrap();
        for (key, g) in &grads_all {
            let expected = &grads_a[key] + &grads_b[key] - &reg_only[key];
            assert!(
                crate::linalg::max_abs(&(g - &expected)) < 1e-9,
                "{key:?}"
            );
        }
    }

    #[test]
    fn prep_only_circuit_has_zero_gate_gradient() {
        // A circuit of preparations and measurements with counts matching
        // the deterministic outcome: P(00000) = 1, so weights = -shots and
        // the only gradient flow is through the measurement channels.
        let device = Device::default_five_qubit();
        let isometries = ideal_isometries(&device);
        let mut ops = Vec::new();
        for q in 0..5 {
            ops.push(Op::new(Label::P, Target::Q(q)));
        }
        for q in 0..5 {
            ops.push(Op::new(Label::M, Target::Q(q)));
        }
        let circuit = Circuit { n: 5, ops, n_layers: 0 };
        let mut counts = std::collections::BTreeMap::new();
        counts.insert("00000".to_string(), 100u64);
        let record = Record {
            circuit,
            sample: Sample {
                circuit_id: 0,
                shots: 100,
                counts,
            },
        };
        let (loss, grads) =
            loss_and_gradient(&device, &isometries, &[record], 0.0, 0.0).unwrap();
        assert!(loss.total.abs() < 1e-9);
        for ((label, target), g) in &grads {
            if *label != Label::M {
                assert!(
                    crate::linalg::max_abs(g) < 1e-9,
                    "{label} on {target} has unexpected gradient"
                );
            }
        }
    }
}

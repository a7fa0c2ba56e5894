//! Dense density-matrix simulation of native-gate circuits.
//!
//! States live on n <= 12 qubits with qubit i on bit i of the basis index.
//! Channels act through their superoperator form S = sum_m kron(K_m,
//! conj(K_m)), applied to the local (row, column) index pair of the target
//! qubits; the cost per operation is 4^(n - k) * d^4 with d = 2^k local
//! dimension, independent of the Kraus count.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::Channel;
use crate::circuit::{bitstring_to_index, index_to_bitstring, Circuit, GateKey, GateSet, Target};
use crate::error::{Error, Result};
use crate::linalg::{kron, ComplexMatrix};

/// Dense simulation is capped at this qubit count.
pub const MAX_QUBITS: usize = 12;

/// Probabilities below this floor enter log-likelihoods as the floor.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// The superoperator of a channel: S[(a d + b), (j d + k)] =
/// sum_m K_m[a, j] conj(K_m[b, k]), so that vec(Phi[rho]) = S vec(rho)
/// in row-major vectorization.
pub fn channel_superop(chan: &Channel) -> ComplexMatrix {
    let d = chan.dim();
    let mut s = ComplexMatrix::zeros(d * d, d * d);
    for k in chan.kraus() {
        s += kron(k, &k.map(|z| z.conj()));
    }
    s
}

/// The superoperator of the adjoint map Phi^dagger[obs] = sum_m K_m^dagger
/// obs K_m, equal to the conjugate transpose of [`channel_superop`].
pub fn channel_superop_adjoint(chan: &Channel) -> ComplexMatrix {
    channel_superop(chan).adjoint()
}

fn validate_targets(n: usize, targets: &[usize]) -> Result<()> {
    if targets.is_empty() || targets.len() > n {
        return Err(Error::validation(format!(
            "operation targets {} of {n} qubits",
            targets.len()
        )));
    }
    for (i, &q) in targets.iter().enumerate() {
        if q >= n {
            return Err(Error::validation(format!("target qubit {q} outside 0..{n}")));
        }
        if targets[..i].contains(&q) {
            return Err(Error::validation(format!("repeated target qubit {q}")));
        }
    }
    Ok(())
}

/// Basis-index groups for a local operation: entry r of the result lists the
/// 2^k global indices whose non-target bits spell r and whose target bits
/// run through all local values, with targets[0] on the most significant
/// local bit.
pub(crate) fn index_groups(n: usize, targets: &[usize]) -> Vec<Vec<usize>> {
    let k = targets.len();
    let d = 1usize << k;
    let rest: Vec<usize> = (0..n).filter(|q| !targets.contains(q)).collect();
    let mut groups = Vec::with_capacity(1 << rest.len());
    for r in 0..(1usize << rest.len()) {
        let mut base = 0usize;
        for (i, &pos) in rest.iter().enumerate() {
            base |= ((r >> i) & 1) << pos;
        }
        let mut group = Vec::with_capacity(d);
        for l in 0..d {
            let mut g = base;
            for (i, &pos) in targets.iter().enumerate() {
                g |= ((l >> (k - 1 - i)) & 1) << pos;
            }
            group.push(g);
        }
        groups.push(group);
    }
    groups
}

/// Applies a local superoperator through precomputed index groups (see
/// [`index_groups`]); `d` is the local dimension.
pub(crate) fn apply_superop_grouped(
    mat: &ComplexMatrix,
    superop: &ComplexMatrix,
    groups: &[Vec<usize>],
    d: usize,
) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(mat.nrows(), mat.ncols());
    let mut buf_in = vec![Complex64::default(); d * d];
    for rows in groups {
        for cols in groups {
            for a in 0..d {
                for b in 0..d {
                    buf_in[a * d + b] = mat[(rows[a], cols[b])];
                }
            }
            for a in 0..d {
                for b in 0..d {
                    let mut acc = Complex64::default();
                    let s_row = a * d + b;
                    for (idx, value) in buf_in.iter().enumerate() {
                        acc += superop[(s_row, idx)] * value;
                    }
                    out[(rows[a], cols[b])] = acc;
                }
            }
        }
    }
    out
}

/// A density matrix on n qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// |0...0><0...0| on n qubits.
    pub fn zero_state(n: usize) -> Result<DensityMatrix> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::validation(format!(
                "qubit count {n} outside 1..={MAX_QUBITS}"
            )));
        }
        let dim = 1usize << n;
        let mut mat = ComplexMatrix::zeros(dim, dim);
        mat[(0, 0)] = Complex64::new(1.0, 0.0);
        Ok(DensityMatrix { n, mat })
    }

    pub fn from_matrix(n: usize, mat: ComplexMatrix) -> Result<DensityMatrix> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::validation(format!(
                "qubit count {n} outside 1..={MAX_QUBITS}"
            )));
        }
        let dim = 1usize << n;
        if mat.shape() != (dim, dim) {
            return Err(Error::validation(format!(
                "matrix shape {:?} does not match {n} qubits",
                mat.shape()
            )));
        }
        Ok(DensityMatrix { n, mat })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    /// Applies a local superoperator (see [`channel_superop`]) to the target
    /// qubits, targets[0] on the most significant local bit.
    pub fn apply_superop(&mut self, superop: &ComplexMatrix, targets: &[usize]) -> Result<()> {
        validate_targets(self.n, targets)?;
        let d = 1usize << targets.len();
        if superop.shape() != (d * d, d * d) {
            return Err(Error::validation(format!(
                "superoperator shape {:?} does not match {} target qubit(s)",
                superop.shape(),
                targets.len()
            )));
        }
        let groups = index_groups(self.n, targets);
        self.mat = apply_superop_grouped(&self.mat, superop, &groups, d);
        Ok(())
    }

    /// Applies a channel to the target qubits.
    pub fn apply_channel(&mut self, chan: &Channel, targets: &[usize]) -> Result<()> {
        let d = 1usize << targets.len();
        if chan.dim() != d {
            return Err(Error::validation(format!(
                "channel dimension {} does not match {} target qubit(s)",
                chan.dim(),
                targets.len()
            )));
        }
        self.apply_superop(&channel_superop(chan), targets)
    }

    /// Outcome probabilities over the listed qubits (ascending, distinct):
    /// the diagonal marginal, with negative round-off clamped to zero.
    /// Entry b of the result is the probability that qubit measured[i]
    /// reads bit i of b.
    pub fn probabilities(&self, measured: &[usize]) -> Result<Vec<f64>> {
        validate_targets(self.n, measured)?;
        if !measured.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::validation("measured qubits must be ascending"));
        }
        let m = measured.len();
        let mut probs = vec![0.0f64; 1 << m];
        for g in 0..(1usize << self.n) {
            let mut local = 0usize;
            for (i, &q) in measured.iter().enumerate() {
                local |= ((g >> q) & 1) << i;
            }
            probs[local] += self.mat[(g, g)].re;
        }
        for p in &mut probs {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        Ok(probs)
    }
}

/// A gate set with precomputed superoperators for fast repeated simulation.
#[derive(Debug, Clone)]
pub struct CompiledGateSet {
    pub n_qubits: usize,
    superops: BTreeMap<GateKey, ComplexMatrix>,
}

impl CompiledGateSet {
    pub fn new(gs: &GateSet) -> CompiledGateSet {
        let superops = gs
            .iter()
            .map(|(key, chan)| (*key, channel_superop(chan)))
            .collect();
        CompiledGateSet {
            n_qubits: gs.n_qubits,
            superops,
        }
    }

    pub fn superop(&self, key: &GateKey) -> Result<&ComplexMatrix> {
        self.superops.get(key).ok_or_else(|| {
            Error::validation(format!("gate set has no entry for {} on {}", key.0, key.1))
        })
    }
}

fn target_qubits(target: Target) -> Vec<usize> {
    match target {
        Target::Q(q) => vec![q],
        Target::Pair(a, b) => vec![a, b],
    }
}

/// Runs a circuit from |0...0> and returns the final state. Measurement
/// labels apply their pre-readout channel; the caller extracts outcome
/// probabilities afterwards.
pub fn run_circuit(compiled: &CompiledGateSet, circuit: &Circuit) -> Result<DensityMatrix> {
    if circuit.n != compiled.n_qubits {
        return Err(Error::validation(format!(
            "circuit on {} qubits, gate set on {}",
            circuit.n, compiled.n_qubits
        )));
    }
    let mut rho = DensityMatrix::zero_state(circuit.n)?;
    for op in &circuit.ops {
        let superop = compiled.superop(&(op.label, op.target))?;
        rho.apply_superop(superop, &target_qubits(op.target))?;
    }
    Ok(rho)
}

/// Outcome probabilities of a circuit over its measured qubits.
pub fn circuit_probabilities(compiled: &CompiledGateSet, circuit: &Circuit) -> Result<Vec<f64>> {
    let rho = run_circuit(compiled, circuit)?;
    let measured = circuit.measured_qubits();
    if measured.is_empty() {
        return Err(Error::validation("circuit measures no qubits"));
    }
    rho.probabilities(&measured)
}

/// Draws counts from an outcome distribution, one shot at a time. Each shot
/// draws its bits in outcome-string order from the conditional distribution
/// given the bits already fixed, consuming exactly m uniform variates, so
/// the stream position after sampling depends only on (shots, m).
pub fn sample_outcomes<R: Rng>(
    probs: &[f64],
    shots: u64,
    rng: &mut R,
) -> Result<BTreeMap<String, u64>> {
    if probs.is_empty() || !probs.len().is_power_of_two() {
        return Err(Error::validation("probability vector length must be 2^m"));
    }
    let m = probs.len().trailing_zeros() as usize;
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::validation("probabilities must be finite and >= 0"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::numerical(format!(
            "outcome probabilities sum to {total}, expected 1"
        )));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for _ in 0..shots {
        let mut prefix_mask = 0usize;
        let mut prefix_bits = 0usize;
        for bit in 0..m {
            let mut rest = 0.0f64;
            let mut ones = 0.0f64;
            for (idx, &p) in probs.iter().enumerate() {
                if idx & prefix_mask == prefix_bits {
                    rest += p;
                    if idx >> bit & 1 == 1 {
                        ones += p;
                    }
                }
            }
            let p1 = if rest > 0.0 { ones / rest } else { 0.0 };
            let u: f64 = rng.gen();
            prefix_mask |= 1 << bit;
            if u < p1 {
                prefix_bits |= 1 << bit;
            }
        }
        *counts.entry(index_to_bitstring(prefix_bits, m)).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Log-likelihood of observed counts under an outcome distribution, with
/// probabilities floored at [`LIKELIHOOD_FLOOR`].
pub fn log_likelihood(probs: &[f64], counts: &BTreeMap<String, u64>) -> Result<f64> {
    if probs.is_empty() || !probs.len().is_power_of_two() {
        return Err(Error::validation("probability vector length must be 2^m"));
    }
    let m = probs.len().trailing_zeros() as usize;
    let mut ll = 0.0f64;
    for (s, &count) in counts {
        if s.len() != m {
            return Err(Error::validation(format!(
                "outcome '{s}' length {} does not match {m} bits",
                s.len()
            )));
        }
        let idx = bitstring_to_index(s)?;
        ll += count as f64 * probs[idx].max(LIKELIHOOD_FLOOR).ln();
    }
    Ok(ll)
}

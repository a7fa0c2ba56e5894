//! Noise channel constructors and the per-gate noise parameter table.
//!
//! Every noisy gate is built from four primitives applied to the ideal
//! unitary U of the gate: a rotation-angle smear of U itself (strength nu),
//! a depolarizing channel (probability p), phase damping (strength gamma),
//! and amplitude damping (strength mu), composed as
//!
//!     noisy(U) = amp(mu) . phase(gamma) . dep(p) . smear(nu; U)
//!
//! with per-qubit tensor copies of the three local primitives for the
//! two-qubit gate. Preparation is ideal; readout error is carried entirely
//! by the measurement channel (label M, idealizing to the identity).

use std::io::Read as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::circuit::{Device, GateKey, GateSet, Label, Target};
use crate::error::{Error, Result};
use crate::linalg::{
    c, pauli_matrices, unitarity_residual, unitary_eigen, vec_row_major, ComplexMatrix,
};

// ---------------------------------------------------------------------------
// Primitive channels
// ---------------------------------------------------------------------------

fn require_probability(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || !value.is_finite() {
        return Err(Error::validation(format!(
            "{name} must lie in [0, 1], got {value}"
        )));
    }
    Ok(())
}

/// Amplitude damping: |1> decays to |0> with probability `strength`.
pub fn amplitude_damping(strength: f64) -> Result<Channel> {
    require_probability("amplitude damping strength", strength)?;
    let k0 = ComplexMatrix::from_row_slice(
        2,
        2,
        &[
            c(1.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c((1.0 - strength).sqrt(), 0.0),
        ],
    );
    let k1 = ComplexMatrix::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(strength.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0)],
    );
    Channel::from_kraus(vec![k0, k1])
}

/// Phase damping: off-diagonal elements shrink by sqrt(1 - strength).
pub fn phase_damping(strength: f64) -> Result<Channel> {
    require_probability("phase damping strength", strength)?;
    let k0 = ComplexMatrix::from_row_slice(
        2,
        2,
        &[
            c(1.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c((1.0 - strength).sqrt(), 0.0),
        ],
    );
    let k1 = ComplexMatrix::from_row_slice(
        2,
        2,
        &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(strength.sqrt(), 0.0)],
    );
    Channel::from_kraus(vec![k0, k1])
}

/// Depolarizing channel rho -> (1-p) rho + p Tr[rho] 1/d on one or two
/// qubits, in Pauli Kraus form.
pub fn depolarizing(p: f64, dim: usize) -> Result<Channel> {
    require_probability("depolarizing probability", p)?;
    let n_qubits = match dim {
        2 => 1,
        4 => 2,
        _ => {
            return Err(Error::validation(format!(
                "depolarizing supports dimensions 2 and 4, got {dim}"
            )))
        }
    };
    let d2 = (dim * dim) as f64;
    let paulis = pauli_matrices(n_qubits);
    let kraus = paulis
        .into_iter()
        .enumerate()
        .map(|(i, pauli)| {
            let weight = if i == 0 {
                (1.0 - p * (d2 - 1.0) / d2).sqrt()
            } else {
                (p / d2).sqrt()
            };
            pauli * c(weight, 0.0)
        })
        .collect();
    Channel::from_kraus(kraus)
}

/// A unitary applied with a Gaussian-smeared rotation angle: writing
/// U = V diag(exp(i theta_c)) V^dagger with theta in (-pi, pi], the channel
/// averages U(tau) = V diag(exp(i theta_c tau)) V^dagger over
/// tau ~ Normal(1, nu^2). In the eigenbasis the coherence between
/// eigenvectors c and d picks up the factor
/// exp(i (theta_c - theta_d)) exp(-nu^2 (theta_c - theta_d)^2 / 2),
/// which leaves the channel completely positive for every nu >= 0.
pub fn smoothed_unitary(nu: f64, u: &ComplexMatrix) -> Result<Channel> {
    if !nu.is_finite() || nu < 0.0 {
        return Err(Error::validation(format!(
            "rotation smear width must be >= 0, got {nu}"
        )));
    }
    if unitarity_residual(u) > 1e-9 {
        return Err(Error::validation("rotation smear needs a unitary input"));
    }
    if nu == 0.0 {
        return Channel::from_unitary(u);
    }
    let d = u.nrows();
    let (thetas, vectors) = unitary_eigen(u)?;
    let mut z = ComplexMatrix::zeros(d * d, d);
    for col in 0..d {
        let vc = vectors.column(col).clone_owned();
        let outer = &vc * vc.adjoint();
        let vcol = vec_row_major(&outer);
        for (row, value) in vcol.into_iter().enumerate() {
            z[(row, col)] = value;
        }
    }
    let mut g = ComplexMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let delta = thetas[a] - thetas[b];
            g[(a, b)] = Complex64::from_polar((-0.5 * nu * nu * delta * delta).exp(), delta);
        }
    }
    let choi = &z * g * z.adjoint();
    Channel::from_choi(&choi)
}

// ---------------------------------------------------------------------------
// Noise parameters and composite gates
// ---------------------------------------------------------------------------

/// Strengths of the four noise primitives attached to one gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Rotation smear width.
    pub nu: f64,
    /// Depolarizing probability.
    pub p: f64,
    /// Amplitude damping strength.
    pub mu: f64,
    /// Phase damping strength.
    pub gamma: f64,
}

impl NoiseParams {
    pub const NOISELESS: NoiseParams = NoiseParams {
        nu: 0.0,
        p: 0.0,
        mu: 0.0,
        gamma: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !self.nu.is_finite() || self.nu < 0.0 {
            return Err(Error::validation(format!(
                "rotation smear width must be >= 0, got {}",
                self.nu
            )));
        }
        require_probability("depolarizing probability", self.p)?;
        require_probability("amplitude damping strength", self.mu)?;
        require_probability("phase damping strength", self.gamma)?;
        Ok(())
    }

    /// The local decay-and-scramble part: amp(mu) . phase(gamma) . dep(p)
    /// on one qubit.
    fn local_after_gate(&self) -> Result<Channel> {
        let dep = depolarizing(self.p, 2)?;
        let phase = phase_damping(self.gamma)?;
        let amp = amplitude_damping(self.mu)?;
        Channel::compose(&amp, &Channel::compose(&phase, &dep)?)
    }
}

/// The noisy channel for a single-qubit gate label under `params`.
/// `M` idealizes to the identity, so its noisy form is pure decay.
pub fn build_noisy_single(label: Label, params: &NoiseParams) -> Result<Channel> {
    params.validate()?;
    let u = label.ideal_unitary().ok_or_else(|| {
        Error::validation(format!("{label} has no unitary to attach noise to"))
    })?;
    if u.nrows() != 2 {
        return Err(Error::validation(format!("{label} is not a single-qubit gate")));
    }
    let smear = smoothed_unitary(params.nu, &u)?;
    let noisy = Channel::compose(&params.local_after_gate()?, &smear)?;
    noisy.canonical()
}

/// The noisy channel for the two-qubit gate: angle smear of the full CX
/// unitary, followed by independent per-qubit copies of the local noise.
pub fn build_noisy_cx(params: &NoiseParams) -> Result<Channel> {
    params.validate()?;
    let u = Label::Cx.ideal_unitary().expect("CX has a unitary");
    let smear = smoothed_unitary(params.nu, &u)?;
    let local = params.local_after_gate()?;
    let local_pair = Channel::tensor(&local, &local)?;
    let noisy = Channel::compose(&local_pair, &smear)?;
    noisy.canonical()
}

/// The noisy channel for any gate set key under `params`.
pub fn build_noisy(label: Label, params: &NoiseParams) -> Result<Channel> {
    match label {
        Label::Cx => build_noisy_cx(params),
        Label::P => Err(Error::validation("preparation carries no noise parameters")),
        _ => build_noisy_single(label, params),
    }
}

// ---------------------------------------------------------------------------
// Noise table
// ---------------------------------------------------------------------------

/// One row of the noise table: a gate, its noise strengths, and the
/// reference fidelity the built channel must reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEntry {
    pub label: Label,
    pub target: Target,
    pub params: NoiseParams,
    pub f_ref: f64,
}

/// Per-gate noise strengths for a whole device, keyed by (label, target).
#[derive(Debug, Clone, Default)]
pub struct NoiseTable {
    entries: std::collections::BTreeMap<GateKey, NoiseEntry>,
}

/// Labels that carry damping strengths tied to their qubit: within this
/// family every row on a given qubit must quote the same (mu, gamma) pair,
/// since those describe the qubit rather than the gate. Measurement and CX
/// rows carry their own pairs.
const QUBIT_TIED_LABELS: [Label; 4] = [Label::Id, Label::Rz, Label::X, Label::Sx];

impl NoiseTable {
    /// The built-in 29-row table for the default five-qubit device.
    pub fn builtin() -> NoiseTable {
        NoiseTable::from_csv_reader(BUILTIN_TABLE_CSV.as_bytes())
            .expect("built-in noise table parses")
    }

    pub fn from_csv_path(path: &Path) -> Result<NoiseTable> {
        let mut text = String::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        NoiseTable::from_csv_reader(text.as_bytes())
    }

    /// Parses rows `label,target,nu,p,mu,gamma,f_ref` (header required) and
    /// validates ranges, duplicates, and the qubit-tied damping pairs.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<NoiseTable> {
        #[derive(Deserialize)]
        struct Row {
            label: String,
            target: String,
            nu: f64,
            p: f64,
            mu: f64,
            gamma: f64,
            f_ref: f64,
        }
        let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut table = NoiseTable::default();
        for row in csv_reader.deserialize() {
            let row: Row = row?;
            let label = Label::parse(&row.label)?;
            let target = Target::parse_text(&row.target)?;
            let entry = NoiseEntry {
                label,
                target,
                params: NoiseParams {
                    nu: row.nu,
                    p: row.p,
                    mu: row.mu,
                    gamma: row.gamma,
                },
                f_ref: row.f_ref,
            };
            table.insert(entry)?;
        }
        table.validate()?;
        Ok(table)
    }

    pub fn to_csv_path(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["label", "target", "nu", "p", "mu", "gamma", "f_ref"])?;
        for entry in self.entries.values() {
            writer.write_record([
                entry.label.as_str().to_string(),
                entry.target.to_text(),
                entry.params.nu.to_string(),
                entry.params.p.to_string(),
                entry.params.mu.to_string(),
                entry.params.gamma.to_string(),
                entry.f_ref.to_string(),
            ])?;
        }
        writer.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    pub fn insert(&mut self, entry: NoiseEntry) -> Result<()> {
        if entry.label == Label::P {
            return Err(Error::validation("preparation takes no noise row"));
        }
        if entry.label.is_two_qubit() != matches!(entry.target, Target::Pair(_, _)) {
            return Err(Error::validation(format!(
                "{} target arity mismatch: {}",
                entry.label, entry.target
            )));
        }
        entry.params.validate()?;
        if !(0.0..=1.0).contains(&entry.f_ref) {
            return Err(Error::validation(format!(
                "reference fidelity must lie in [0, 1], got {}",
                entry.f_ref
            )));
        }
        let key = (entry.label, entry.target);
        if self.entries.insert(key, entry).is_some() {
            return Err(Error::validation(format!(
                "duplicate noise row for {} on {}",
                key.0, key.1
            )));
        }
        Ok(())
    }

    /// Cross-row consistency: qubit-tied labels must agree on (mu, gamma)
    /// per qubit.
    pub fn validate(&self) -> Result<()> {
        let mut per_qubit: std::collections::BTreeMap<usize, (f64, f64, Label)> =
            std::collections::BTreeMap::new();
        for entry in self.entries.values() {
            if !QUBIT_TIED_LABELS.contains(&entry.label) {
                continue;
            }
            let q = match entry.target {
                Target::Q(q) => q,
                Target::Pair(_, _) => unreachable!("insert rejects pair targets here"),
            };
            let pair = (entry.params.mu, entry.params.gamma, entry.label);
            if let Some(&(mu, gamma, first)) = per_qubit.get(&q) {
                if mu != entry.params.mu || gamma != entry.params.gamma {
                    return Err(Error::validation(format!(
                        "qubit {q}: {} and {first} quote different damping pairs",
                        entry.label
                    )));
                }
            } else {
                per_qubit.insert(q, pair);
            }
        }
        Ok(())
    }

    pub fn get(&self, label: Label, target: Target) -> Result<&NoiseEntry> {
        self.entries.get(&(label, target)).ok_or_else(|| {
            Error::validation(format!("noise table has no row for {label} on {target}"))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &NoiseEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks there is a row for every device operation except P.
    pub fn require_complete(&self, device: &Device) -> Result<()> {
        for (label, target) in device.supported_keys() {
            if label == Label::P {
                continue;
            }
            if !self.entries.contains_key(&(label, target)) {
                return Err(Error::validation(format!(
                    "noise table is missing {label} on {target}"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the generative gate set for a device from a noise table:
/// ideal preparations plus the noisy channel for every other key.
pub fn true_gateset(table: &NoiseTable, device: &Device) -> Result<GateSet> {
    table.require_complete(device)?;
    let mut gs = GateSet::new(device.n_qubits);
    for (label, target) in device.supported_keys() {
        let chan = if label == Label::P {
            Channel::reset_to_zero(2)
        } else {
            build_noisy(label, &table.get(label, target)?.params)?
        };
        gs.insert(label, target, chan)?;
    }
    Ok(gs)
}

/// The parameter table of the reference device. Columns: gate label, qubit
/// or (control, target) pair, the four noise strengths, and the gate
/// fidelity the built channel must reproduce.
const BUILTIN_TABLE_CSV: &str = include_str!("../data/noise_table.csv");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, kron, max_abs};

    fn fidelity_vs_ideal(chan: &Channel, label: Label) -> f64 {
        chan.gate_fidelity(&label.ideal_unitary().unwrap()).unwrap()
    }

    #[test]
    fn primitive_channels_are_cptp() {
        for s in [0.0, 0.01, 0.3, 1.0] {
            assert!(amplitude_damping(s).unwrap().validate_cptp(1e-10).unwrap().pass);
            assert!(phase_damping(s).unwrap().validate_cptp(1e-10).unwrap().pass);
            assert!(depolarizing(s, 2).unwrap().validate_cptp(1e-10).unwrap().pass);
            assert!(depolarizing(s, 4).unwrap().validate_cptp(1e-10).unwrap().pass);
        }
        assert!(amplitude_damping(-0.1).is_err());
        assert!(depolarizing(1.5, 2).is_err());
        assert!(depolarizing(0.1, 3).is_err());
    }

    #[test]
    fn amplitude_damping_decays_excited_population() {
        let chan = amplitude_damping(0.3).unwrap();
        let excited = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        );
        let out = chan.apply(&excited).unwrap();
        assert!((out[(1, 1)].re - 0.7).abs() < 1e-12);
        assert!((out[(0, 0)].re - 0.3).abs() < 1e-12);
    }

    #[test]
    fn phase_damping_shrinks_coherences_only() {
        let chan = phase_damping(0.36).unwrap();
        let plus = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)],
        );
        let out = chan.apply(&plus).unwrap();
        assert!((out[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((out[(1, 1)].re - 0.5).abs() < 1e-12);
        assert!((out[(0, 1)].re - 0.5 * 0.64f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn depolarizing_fidelity_closed_form() {
        // Against the identity, F = 1 - p (d^2 - 1) / d^2 / ... reduces to
        // 1 - 3p/4 on one qubit and 1 - 15p/16 on two.
        for p in [0.0, 0.001, 0.01, 0.1, 0.5, 1.0] {
            let f1 = depolarizing(p, 2).unwrap().gate_fidelity(&identity(2)).unwrap();
            assert!((f1 - (1.0 - 0.75 * p)).abs() < 1e-12);
            let f2 = depolarizing(p, 4).unwrap().gate_fidelity(&identity(4)).unwrap();
            assert!((f2 - (1.0 - 0.9375 * p)).abs() < 1e-12);
        }
    }

    #[test]
    fn depolarizing_composition_law() {
        // dep(p1) after dep(p2) = dep(p1 + p2 - p1 p2).
        let p1 = 0.07;
        let p2 = 0.21;
        let composed = Channel::compose(
            &depolarizing(p1, 2).unwrap(),
            &depolarizing(p2, 2).unwrap(),
        )
        .unwrap();
        let direct = depolarizing(p1 + p2 - p1 * p2, 2).unwrap();
        assert!(max_abs(&(composed.choi() - direct.choi())) < 1e-12);
    }

    #[test]
    fn damping_channels_commute() {
        let a = amplitude_damping(0.23).unwrap();
        let p = phase_damping(0.41).unwrap();
        let ap = Channel::compose(&a, &p).unwrap();
        let pa = Channel::compose(&p, &a).unwrap();
        assert!(max_abs(&(ap.choi() - pa.choi())) < 1e-12);
    }

    #[test]
    fn smear_at_zero_width_is_the_unitary_channel() {
        for label in [Label::Rz, Label::X, Label::Sx, Label::Cx] {
            let u = label.ideal_unitary().unwrap();
            let smear = smoothed_unitary(0.0, &u).unwrap();
            let pure = Channel::from_unitary(&u).unwrap();
            assert!(max_abs(&(smear.choi() - pure.choi())) < 1e-12);
        }
    }

    #[test]
    fn smear_is_cptp_and_weakens_with_width() {
        for label in [Label::Rz, Label::X, Label::Sx, Label::Cx] {
            let u = label.ideal_unitary().unwrap();
            let mut last_f = 1.0;
            for nu in [0.01, 0.05, 0.1, 0.2, 0.5] {
                let chan = smoothed_unitary(nu, &u).unwrap();
                let report = chan.validate_cptp(1e-8).unwrap();
                assert!(report.pass, "{label} nu={nu}: {report:?}");
                let f = chan.gate_fidelity(&u).unwrap();
                assert!(f <= last_f + 1e-12, "{label} nu={nu}");
                last_f = f;
            }
        }
        // The identity has no angle to smear.
        let chan = smoothed_unitary(0.7, &identity(2)).unwrap();
        assert!(max_abs(&(chan.choi() - Channel::identity(2).choi())) < 1e-12);
    }

    #[test]
    fn smear_closed_form_matches_direct_rz_average() {
        // For RZ = diag(exp(-i pi/8), exp(i pi/8)) the eigenbasis is the
        // computational basis, so the smeared channel scales rho_01 by
        // exp(-i pi/4) exp(-nu^2 (pi/4)^2 / 2) exactly.
        let nu = 0.16;
        let u = Label::Rz.ideal_unitary().unwrap();
        let chan = smoothed_unitary(nu, &u).unwrap();
        let plus = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)],
        );
        let out = chan.apply(&plus).unwrap();
        let delta = -std::f64::consts::FRAC_PI_4;
        let expected = Complex64::from_polar(0.5 * (-0.5 * nu * nu * delta * delta).exp(), delta);
        assert!((out[(0, 1)] - expected).norm() < 1e-12);
    }

    #[test]
    fn composite_single_qubit_gates_are_cptp() {
        let params = NoiseParams {
            nu: 0.11,
            p: 0.033,
            mu: 0.013,
            gamma: 0.01,
        };
        for label in [Label::Id, Label::Rz, Label::X, Label::Sx, Label::M] {
            let chan = build_noisy_single(label, &params).unwrap();
            let report = chan.validate_cptp(1e-8).unwrap();
            assert!(report.pass, "{label}: {report:?}");
            assert_eq!(chan.dim(), 2);
        }
        let cx = build_noisy_cx(&params).unwrap();
        assert!(cx.validate_cptp(1e-8).unwrap().pass);
        assert_eq!(cx.dim(), 4);
    }

    #[test]
    fn noiseless_params_reproduce_ideal_gates() {
        for label in [Label::Id, Label::Rz, Label::X, Label::Sx, Label::M, Label::Cx] {
            let chan = build_noisy(label, &NoiseParams::NOISELESS).unwrap();
            let f = fidelity_vs_ideal(&chan, label);
            assert!((f - 1.0).abs() < 1e-12, "{label}: F = {f}");
        }
    }

    #[test]
    fn cx_local_noise_factorizes() {
        // With nu = 0 the composite is (local x local) . CX, so its Choi
        // must match the explicitly assembled product channel.
        let params = NoiseParams {
            nu: 0.0,
            p: 0.03,
            mu: 0.02,
            gamma: 0.03,
        };
        let built = build_noisy_cx(&params).unwrap();
        let local = Channel::compose(
            &amplitude_damping(params.mu).unwrap(),
            &Channel::compose(
                &phase_damping(params.gamma).unwrap(),
                &depolarizing(params.p, 2).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        let pair = Channel::tensor(&local, &local).unwrap();
        let cx = Channel::from_unitary(&Label::Cx.ideal_unitary().unwrap()).unwrap();
        let expected = Channel::compose(&pair, &cx).unwrap();
        assert!(max_abs(&(built.choi() - expected.choi())) < 1e-10);
    }

    #[test]
    fn builtin_table_is_complete_and_valid() {
        let table = NoiseTable::builtin();
        assert_eq!(table.len(), 29);
        table.require_complete(&Device::default_five_qubit()).unwrap();
        for entry in table.iter() {
            assert!(entry.f_ref > 0.9, "{} on {}", entry.label, entry.target);
        }
    }

    #[test]
    fn builtin_table_fidelities_reproduce_references() {
        // The decisive check on the whole noise construction: every row's
        // built channel must hit its quoted fidelity to the third decimal.
        let table = NoiseTable::builtin();
        for entry in table.iter() {
            let chan = build_noisy(entry.label, &entry.params).unwrap();
            let f = fidelity_vs_ideal(&chan, entry.label);
            assert!(
                (f - entry.f_ref).abs() < 1.5e-3,
                "{} on {}: built {f:.6}, reference {}",
                entry.label,
                entry.target,
                entry.f_ref
            );
        }
    }

    #[test]
    fn table_validation_rejects_bad_rows() {
        let mut table = NoiseTable::default();
        let entry = |label, target, mu: f64, gamma: f64| NoiseEntry {
            label,
            target,
            params: NoiseParams {
                nu: 0.0,
                p: 0.01,
                mu,
                gamma,
            },
            f_ref: 0.98,
        };
        table.insert(entry(Label::Id, Target::Q(0), 0.01, 0.02)).unwrap();
        // Duplicate row.
        assert!(table.insert(entry(Label::Id, Target::Q(0), 0.01, 0.02)).is_err());
        // Qubit-tied damping pair must match across the family.
        table.insert(entry(Label::X, Target::Q(0), 0.03, 0.02)).unwrap();
        assert!(table.validate().is_err());

        // Out-of-range strengths are rejected on insert.
        let mut bad = NoiseEntry {
            label: Label::X,
            target: Target::Q(1),
            params: NoiseParams {
                nu: -0.1,
                p: 0.0,
                mu: 0.0,
                gamma: 0.0,
            },
            f_ref: 0.99,
        };
        assert!(NoiseTable::default().insert(bad.clone()).is_err());
        bad.params.nu = 0.0;
        bad.params.p = 1.2;
        assert!(NoiseTable::default().insert(bad.clone()).is_err());
        bad.params.p = 0.0;
        bad.f_ref = 1.5;
        assert!(NoiseTable::default().insert(bad).is_err());

        // Arity mismatch.
        assert!(NoiseTable::default()
            .insert(NoiseEntry {
                label: Label::Cx,
                target: Target::Q(0),
                params: NoiseParams::NOISELESS,
                f_ref: 0.99,
            })
            .is_err());
    }

    #[test]
    fn csv_round_trip_preserves_the_table() {
        let table = NoiseTable::builtin();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        table.to_csv_path(&path).unwrap();
        let back = NoiseTable::from_csv_path(&path).unwrap();
        assert_eq!(back.len(), table.len());
        for (a, b) in table.iter().zip(back.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn true_gateset_covers_the_device() {
        let device = Device::default_five_qubit();
        let gs = true_gateset(&NoiseTable::builtin(), &device).unwrap();
        gs.require_complete(&device).unwrap();
        // Preparations are ideal resets; everything else is noisy.
        let prep = gs.get(Label::P, Target::Q(0)).unwrap();
        assert!(max_abs(&(prep.choi() - Channel::reset_to_zero(2).choi())) < 1e-12);
        let x2 = gs.get(Label::X, Target::Q(2)).unwrap();
        let f = x2.gate_fidelity(&Label::X.ideal_unitary().unwrap()).unwrap();
        assert!(f < 0.95);
    }

    #[test]
    fn tensor_ordering_matches_kron_convention() {
        // Channel::tensor(a, b) must act as kron(A, B) on kron inputs with
        // the first factor on the most significant index.
        let a = amplitude_damping(0.3).unwrap();
        let b = phase_damping(0.5).unwrap();
        let pair = Channel::tensor(&a, &b).unwrap();
        let rho_a = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.2, 0.0), c(0.1, 0.05), c(0.1, -0.05), c(0.8, 0.0)],
        );
        let rho_b = ComplexMatrix::from_row_slice(
            2,
            2,
            &[c(0.6, 0.0), c(0.2, -0.1), c(0.2, 0.1), c(0.4, 0.0)],
        );
        let joint = pair.apply(&kron(&rho_a, &rho_b)).unwrap();
        let expected = kron(&a.apply(&rho_a).unwrap(), &b.apply(&rho_b).unwrap());
        assert!(max_abs(&(joint - expected)) < 1e-12);
    }
}

//! Device model, circuits, gate sets, and measurement records.
//!
//! Bit order convention: position i of an outcome string refers to qubit i
//! (for partial measurements, to the i-th measured qubit in ascending qubit
//! order), and basis-state indices use qubit i as bit i (qubit 0 least
//! significant). Example: with five qubits, the string "10000" is the state
//! with qubit 0 excited, basis index 1.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::linalg::{c, identity, ComplexMatrix};

// ---------------------------------------------------------------------------
// Gate labels and targets
// ---------------------------------------------------------------------------

/// Native operation labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    /// Ideal preparation of |0>.
    P,
    /// Idle gate.
    Id,
    /// Z rotation by pi/8 on each basis phase.
    Rz,
    /// Bit flip.
    X,
    /// Square root of X.
    Sx,
    /// Controlled X on a directed coupling.
    Cx,
    /// Pre-readout measurement channel.
    M,
}

impl Label {
    pub const ALL: [Label; 7] = [
        Label::P,
        Label::Id,
        Label::Rz,
        Label::X,
        Label::Sx,
        Label::Cx,
        Label::M,
    ];

    /// Uniform choices for random single-qubit sublayers.
    pub const SINGLE_QUBIT_CHOICES: [Label; 4] = [Label::X, Label::Sx, Label::Rz, Label::Id];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::P => "P",
            Label::Id => "ID",
            Label::Rz => "RZ",
            Label::X => "X",
            Label::Sx => "SX",
            Label::Cx => "CX",
            Label::M => "M",
        }
    }

    pub fn parse(s: &str) -> Result<Label> {
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown gate label '{s}'")))
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Label::Cx)
    }

    /// The unitary this label ideally implements. `P` has no unitary (it is
    /// a preparation); `M` idealizes to the identity map before readout.
    pub fn ideal_unitary(&self) -> Option<ComplexMatrix> {
        let u = match self {
            Label::P => return None,
            Label::Id | Label::M => identity(2),
            Label::Rz => {
                let a = std::f64::consts::PI / 8.0;
                ComplexMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Complex64::from_polar(1.0, -a),
                        c(0.0, 0.0),
                        c(0.0, 0.0),
                        Complex64::from_polar(1.0, a),
                    ],
                )
            }
            Label::X => ComplexMatrix::from_row_slice(
                2,
                2,
                &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            ),
            Label::Sx => {
                ComplexMatrix::from_row_slice(
                    2,
                    2,
                    &[c(0.5, 0.5), c(0.5, -0.5), c(0.5, -0.5), c(0.5, 0.5)],
                )
            }
            Label::Cx => ComplexMatrix::from_row_slice(
                4,
                4,
                &[
                    c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
                    c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
                    c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0),
                    c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0),
                ],
            ),
        };
        Some(u)
    }

    /// The channel a flawless device would implement for this label.
    pub fn ideal_channel(&self) -> Channel {
        match self {
            Label::P => Channel::reset_to_zero(2),
            _ => Channel::from_unitary(&self.ideal_unitary().expect("non-P labels have a unitary"))
                .expect("ideal unitaries are unitary"),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Qubit or directed qubit pair an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Q(usize),
    /// (control, target)
    Pair(usize, usize),
}

impl Target {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Target::Q(q) => vec![*q],
            Target::Pair(a, b) => vec![*a, *b],
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Target::Q(_) => 1,
            Target::Pair(_, _) => 2,
        }
    }

    /// Text form used in CSV files: "2" or "(3,4)".
    pub fn to_text(&self) -> String {
        match self {
            Target::Q(q) => q.to_string(),
            Target::Pair(a, b) => format!("({a},{b})"),
        }
    }

    pub fn parse_text(s: &str) -> Result<Target> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(Error::validation(format!("bad pair target '{s}'")));
            }
            let a = parts[0]
                .parse()
                .map_err(|_| Error::validation(format!("bad pair target '{s}'")))?;
            let b = parts[1]
                .parse()
                .map_err(|_| Error::validation(format!("bad pair target '{s}'")))?;
            Ok(Target::Pair(a, b))
        } else {
            let q = s
                .parse()
                .map_err(|_| Error::validation(format!("bad qubit target '{s}'")))?;
            Ok(Target::Q(q))
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Serialized shape of a target: a bare qubit index or a two-element array.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TargetRepr {
    Single(usize),
    Pair([usize; 2]),
}

impl From<Target> for TargetRepr {
    fn from(t: Target) -> Self {
        match t {
            Target::Q(q) => TargetRepr::Single(q),
            Target::Pair(a, b) => TargetRepr::Pair([a, b]),
        }
    }
}

impl From<TargetRepr> for Target {
    fn from(t: TargetRepr) -> Self {
        match t {
            TargetRepr::Single(q) => Target::Q(q),
            TargetRepr::Pair([a, b]) => Target::Pair(a, b),
        }
    }
}

/// Gate set key: a label together with the qubit(s) it acts on.
pub type GateKey = (Label, Target);

// ---------------------------------------------------------------------------
// Device
// ---------------------------------------------------------------------------

/// Processor layout: qubit count, directed CX couplings, and the CX layer
/// patterns the random-circuit generator draws from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Device {
    pub n_qubits: usize,
    pub couplings: Vec<(usize, usize)>,
    pub layer_patterns: Vec<Vec<(usize, usize)>>,
}

impl Device {
    /// The five-qubit device used throughout: directed couplings
    /// 0->1, 1->3, 2->1, 3->4 and three alternating CX layer patterns.
    pub fn default_five_qubit() -> Device {
        Device {
            n_qubits: 5,
            couplings: vec![(0, 1), (1, 3), (2, 1), (3, 4)],
            layer_patterns: vec![vec![(0, 1), (3, 4)], vec![(2, 1), (3, 4)], vec![(1, 3)]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::validation("device needs at least one qubit"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(a, b) in &self.couplings {
            if a >= self.n_qubits || b >= self.n_qubits {
                return Err(Error::validation(format!(
                    "coupling ({a},{b}) out of range for {} qubits",
                    self.n_qubits
                )));
            }
            if a == b {
                return Err(Error::validation(format!("coupling ({a},{b}) is a self-loop")));
            }
            if !seen.insert((a, b)) {
                return Err(Error::validation(format!("duplicate coupling ({a},{b})")));
            }
        }
        for pattern in &self.layer_patterns {
            let mut used = std::collections::BTreeSet::new();
            for pair in pattern {
                if !self.couplings.contains(pair) {
                    return Err(Error::validation(format!(
                        "layer pattern uses unknown coupling ({},{})",
                        pair.0, pair.1
                    )));
                }
                for q in [pair.0, pair.1] {
                    if !used.insert(q) {
                        return Err(Error::validation(
                            "layer pattern reuses a qubit within one sublayer",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every (label, target) pair the device supports.
    pub fn supported_keys(&self) -> Vec<GateKey> {
        let mut keys = Vec::new();
        for q in 0..self.n_qubits {
            for label in [Label::P, Label::Id, Label::Rz, Label::X, Label::Sx, Label::M] {
                keys.push((label, Target::Q(q)));
            }
        }
        for &(a, b) in &self.couplings {
            keys.push((Label::Cx, Target::Pair(a, b)));
        }
        keys.sort();
        keys
    }
}

impl Default for Device {
    fn default() -> Self {
        Device::default_five_qubit()
    }
}

// ---------------------------------------------------------------------------
// Circuits
// ---------------------------------------------------------------------------

/// One native operation inside a circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Op {
    pub label: Label,
    pub target: Target,
}

impl Op {
    pub fn new(label: Label, target: Target) -> Op {
        Op { label, target }
    }
}

impl Serialize for Op {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        (self.label.as_str(), TargetRepr::from(self.target)).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Op {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let (label, target): (String, TargetRepr) = Deserialize::deserialize(deserializer)?;
        let label = Label::parse(&label).map_err(|e| D::Error::custom(e.to_string()))?;
        let target = Target::from(target);
        if label.is_two_qubit() != matches!(target, Target::Pair(_, _)) {
            return Err(D::Error::custom(format!(
                "label {label} does not match target arity {}",
                target.arity()
            )));
        }
        Ok(Op { label, target })
    }
}

/// A circuit in native-gate form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub n: usize,
    pub ops: Vec<Op>,
    pub n_layers: usize,
}

impl Circuit {
    /// Qubits carrying a measurement, ascending. Outcome-string position i
    /// refers to the i-th entry of this list.
    pub fn measured_qubits(&self) -> Vec<usize> {
        let mut qs: Vec<usize> = self
            .ops
            .iter()
            .filter(|op| op.label == Label::M)
            .flat_map(|op| op.target.qubits())
            .collect();
        qs.sort_unstable();
        qs.dedup();
        qs
    }

    /// Structural validation against a device.
    pub fn validate(&self, device: &Device) -> Result<()> {
        if self.n != device.n_qubits {
            return Err(Error::validation(format!(
                "circuit declares {} qubits, device has {}",
                self.n, device.n_qubits
            )));
        }
        let mut prepared = vec![false; self.n];
        let mut measured = vec![false; self.n];
        for (idx, op) in self.ops.iter().enumerate() {
            for q in op.target.qubits() {
                if q >= self.n {
                    return Err(Error::validation(format!(
                        "op {idx} ({}) targets qubit {q} outside 0..{}",
                        op.label, self.n
                    )));
                }
                if measured[q] {
                    return Err(Error::validation(format!(
                        "op {idx} ({}) acts on qubit {q} after its measurement",
                        op.label
                    )));
                }
            }
            match op.label {
                Label::P => {
                    let q = match op.target {
                        Target::Q(q) => q,
                        Target::Pair(_, _) => {
                            return Err(Error::validation("P takes a single qubit"))
                        }
                    };
                    if prepared[q] {
                        return Err(Error::validation(format!("qubit {q} prepared twice")));
                    }
                    prepared[q] = true;
                }
                Label::M => {
                    let q = match op.target {
                        Target::Q(q) => q,
                        Target::Pair(_, _) => {
                            return Err(Error::validation("M takes a single qubit"))
                        }
                    };
                    if !prepared[q] {
                        return Err(Error::validation(format!(
                            "qubit {q} measured before preparation"
                        )));
                    }
                    measured[q] = true;
                }
                Label::Cx => {
                    let pair = match op.target {
                        Target::Pair(a, b) => (a, b),
                        Target::Q(_) => return Err(Error::validation("CX takes a qubit pair")),
                    };
                    if !device.couplings.contains(&pair) {
                        return Err(Error::validation(format!(
                            "CX ({},{}) is not a device coupling",
                            pair.0, pair.1
                        )));
                    }
                    for q in [pair.0, pair.1] {
                        if !prepared[q] {
                            return Err(Error::validation(format!(
                                "qubit {q} used before preparation"
                            )));
                        }
                    }
                }
                _ => {
                    let q = match op.target {
                        Target::Q(q) => q,
                        Target::Pair(_, _) => {
                            return Err(Error::validation(format!("{} takes a single qubit", op.label)))
                        }
                    };
                    if !prepared[q] {
                        return Err(Error::validation(format!(
                            "qubit {q} used before preparation"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Maximum layer count of the random-circuit family (inclusive).
pub const MAX_RANDOM_LAYERS: usize = 10;

/// Draws a random circuit: preparations on all qubits, a uniform number of
/// layers in 0..=10 each made of a uniform single-qubit sublayer (choices
/// X, SX, RZ, ID per qubit, ascending) followed by one of the device's CX
/// patterns (uniform), a final single-qubit sublayer, and measurements on
/// all qubits.
///
/// The draw order — layer count, then per layer the per-qubit labels and the
/// pattern index, then the final sublayer — fixes the RNG stream, so a given
/// generator state always yields the same circuit.
pub fn random_circuit<R: rand::Rng>(device: &Device, rng: &mut R) -> Circuit {
    let n = device.n_qubits;
    let n_layers = rng.gen_range(0..=MAX_RANDOM_LAYERS);
    let mut ops = Vec::new();
    for q in 0..n {
        ops.push(Op::new(Label::P, Target::Q(q)));
    }
    let push_single_sublayer = |ops: &mut Vec<Op>, rng: &mut R| {
        for q in 0..n {
            let label = Label::SINGLE_QUBIT_CHOICES[rng.gen_range(0..Label::SINGLE_QUBIT_CHOICES.len())];
            ops.push(Op::new(label, Target::Q(q)));
        }
    };
    for _ in 0..n_layers {
        push_single_sublayer(&mut ops, rng);
        let pattern = &device.layer_patterns[rng.gen_range(0..device.layer_patterns.len())];
        for &(a, b) in pattern {
            ops.push(Op::new(Label::Cx, Target::Pair(a, b)));
        }
    }
    push_single_sublayer(&mut ops, rng);
    for q in 0..n {
        ops.push(Op::new(Label::M, Target::Q(q)));
    }
    Circuit { n, ops, n_layers }
}

// ---------------------------------------------------------------------------
// Gate sets
// ---------------------------------------------------------------------------

/// A named channel for every operation the device supports.
#[derive(Debug, Clone)]
pub struct GateSet {
    pub n_qubits: usize,
    entries: BTreeMap<GateKey, Channel>,
}

impl GateSet {
    pub fn new(n_qubits: usize) -> GateSet {
        GateSet {
            n_qubits,
            entries: BTreeMap::new(),
        }
    }

    /// The flawless gate set for a device.
    pub fn ideal(device: &Device) -> GateSet {
        let mut gs = GateSet::new(device.n_qubits);
        for (label, target) in device.supported_keys() {
            let chan = if label.is_two_qubit() {
                Channel::from_unitary(&label.ideal_unitary().expect("CX has a unitary"))
                    .expect("ideal CX is unitary")
            } else {
                label.ideal_channel()
            };
            gs.insert(label, target, chan).expect("ideal entries are consistent");
        }
        gs
    }

    pub fn insert(&mut self, label: Label, target: Target, channel: Channel) -> Result<()> {
        let expected_dim = if label.is_two_qubit() { 4 } else { 2 };
        if channel.dim() != expected_dim {
            return Err(Error::validation(format!(
                "{label} expects a dimension-{expected_dim} channel, got {}",
                channel.dim()
            )));
        }
        if label.is_two_qubit() != matches!(target, Target::Pair(_, _)) {
            return Err(Error::validation(format!(
                "{label} target arity mismatch: {target}"
            )));
        }
        for q in target.qubits() {
            if q >= self.n_qubits {
                return Err(Error::validation(format!(
                    "target {target} outside 0..{}",
                    self.n_qubits
                )));
            }
        }
        self.entries.insert((label, target), channel);
        Ok(())
    }

    pub fn get(&self, label: Label, target: Target) -> Result<&Channel> {
        self.entries.get(&(label, target)).ok_or_else(|| {
            Error::validation(format!("gate set has no entry for {label} on {target}"))
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &GateKey> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GateKey, &Channel)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keys subject to estimation: everything except preparations.
    pub fn optimized_keys(&self) -> Vec<GateKey> {
        self.entries
            .keys()
            .copied()
            .filter(|(label, _)| *label != Label::P)
            .collect()
    }

    /// Checks that every operation the device supports has an entry.
    pub fn require_complete(&self, device: &Device) -> Result<()> {
        for (label, target) in device.supported_keys() {
            if !self.entries.contains_key(&(label, target)) {
                return Err(Error::validation(format!(
                    "gate set is missing {label} on {target}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct GateSetEntryJson {
    label: String,
    target: TargetRepr,
    channel: Channel,
}

#[derive(Serialize, Deserialize)]
struct GateSetJson {
    n_qubits: usize,
    entries: Vec<GateSetEntryJson>,
}

impl Serialize for GateSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries = self
            .entries
            .iter()
            .map(|((label, target), channel)| GateSetEntryJson {
                label: label.as_str().to_string(),
                target: TargetRepr::from(*target),
                channel: channel.clone(),
            })
            .collect();
        GateSetJson {
            n_qubits: self.n_qubits,
            entries,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GateSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = GateSetJson::deserialize(deserializer)?;
        let mut gs = GateSet::new(raw.n_qubits);
        for entry in raw.entries {
            let label = Label::parse(&entry.label).map_err(|e| D::Error::custom(e.to_string()))?;
            gs.insert(label, Target::from(entry.target), entry.channel)
                .map_err(|e| D::Error::custom(e.to_string()))?;
        }
        Ok(gs)
    }
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

/// Measured counts for one circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub circuit_id: usize,
    pub shots: u64,
    /// Outcome string -> multiplicity; keys follow the bit order convention.
    pub counts: BTreeMap<String, u64>,
}

impl Sample {
    /// Checks string lengths, characters, and the shot total against a
    /// circuit.
    pub fn validate(&self, circuit: &Circuit) -> Result<()> {
        let m = circuit.measured_qubits().len();
        let mut total = 0u64;
        for (s, &count) in &self.counts {
            if s.len() != m {
                return Err(Error::validation(format!(
                    "outcome '{s}' length {} does not match {m} measured qubits",
                    s.len()
                )));
            }
            if !s.chars().all(|ch| ch == '0' || ch == '1') {
                return Err(Error::validation(format!("outcome '{s}' is not binary")));
            }
            total = total
                .checked_add(count)
                .ok_or_else(|| Error::validation("count overflow"))?;
        }
        if total != self.shots {
            return Err(Error::validation(format!(
                "counts sum to {total} but shots is {}",
                self.shots
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Bit-order utilities
// ---------------------------------------------------------------------------

/// Index of an outcome string: position i is bit i (LSB).
pub fn bitstring_to_index(s: &str) -> Result<usize> {
    if s.len() > usize::BITS as usize - 1 {
        return Err(Error::validation(format!("bit string '{s}' too long")));
    }
    let mut idx = 0usize;
    for (i, ch) in s.chars().enumerate() {
        match ch {
            '0' => {}
            '1' => idx |= 1 << i,
            _ => return Err(Error::validation(format!("bit string '{s}' is not binary"))),
        }
    }
    Ok(idx)
}

/// Inverse of [`bitstring_to_index`] for m bits.
pub fn index_to_bitstring(idx: usize, m: usize) -> String {
    (0..m)
        .map(|i| if idx >> i & 1 == 1 { '1' } else { '0' })
        .collect()
}

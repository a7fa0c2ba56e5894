//! Shared fixtures and independent numerical oracles for the integration
//! suites. The oracles (Gauss–Hermite quadrature, dense superoperator
//! embedding) deliberately use different algorithms than the library so
//! that agreement between the two is meaningful evidence of correctness.

#![allow(dead_code)] // each test target uses its own subset

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use gatemon::circuit::{Device, GateSet, Label, Target};
use gatemon::estimator::{monitoring_run, EstimatorConfig, Record};
use gatemon::experiment::{generate_circuits, records_from, sample_records, stage_seed, Stage};
use gatemon::linalg::{unitary_eigen, vec_row_major, ComplexMatrix};
use gatemon::noise::{true_gateset, NoiseEntry, NoiseParams, NoiseTable};

// ---------------------------------------------------------------------------
// Ground-truth fixtures
// ---------------------------------------------------------------------------

/// The five-qubit device with the built-in true gate set.
pub fn truth() -> &'static (Device, GateSet) {
    static TRUTH: OnceLock<(Device, GateSet)> = OnceLock::new();
    TRUTH.get_or_init(|| {
        let device = Device::default_five_qubit();
        let gs = true_gateset(&NoiseTable::builtin(), &device).expect("built-in table builds");
        (device, gs)
    })
}

/// A three-qubit line device with noise strengths in the same regime as the
/// built-in table; small enough to enumerate outcome distributions exactly
/// while sampling millions of shots quickly.
pub fn three_qubit_fixture() -> (Device, GateSet) {
    let device = Device {
        n_qubits: 3,
        couplings: vec![(0, 1), (1, 2)],
        layer_patterns: vec![vec![(0, 1)], vec![(1, 2)]],
    };
    let mut table = NoiseTable::default();
    // Damping pairs are tied to the qubit for the single-qubit gate family.
    let damping = [(0.010, 0.015), (0.022, 0.012), (0.013, 0.010)];
    let single = [
        (Label::Id, [0.000, 0.000, 0.000], [0.015, 0.010, 0.003]),
        (Label::Rz, [0.010, 0.160, 0.030], [0.012, 0.030, 0.007]),
        (Label::X, [0.012, 0.015, 0.110], [0.012, 0.008, 0.033]),
        (Label::Sx, [0.180, 0.020, 0.010], [0.017, 0.010, 0.005]),
    ];
    for (label, nus, ps) in single {
        for q in 0..3 {
            let (mu, gamma) = damping[q];
            table
                .insert(NoiseEntry {
                    label,
                    target: Target::Q(q),
                    params: NoiseParams { nu: nus[q], p: ps[q], mu, gamma },
                    f_ref: 0.99,
                })
                .expect("single-qubit row");
        }
    }
    let measure = [(0.022, 0.040, 0.050), (0.013, 0.012, 0.015), (0.048, 0.030, 0.035)];
    for (q, (p, mu, gamma)) in measure.into_iter().enumerate() {
        table
            .insert(NoiseEntry {
                label: Label::M,
                target: Target::Q(q),
                params: NoiseParams { nu: 0.0, p, mu, gamma },
                f_ref: 0.95,
            })
            .expect("measurement row");
    }
    for (pair, nu, p) in [((0, 1), 0.05, 0.005), ((1, 2), 0.06, 0.030)] {
        table
            .insert(NoiseEntry {
                label: Label::Cx,
                target: Target::Pair(pair.0, pair.1),
                params: NoiseParams { nu, p, mu: 0.006, gamma: 0.008 },
                f_ref: 0.97,
            })
            .expect("coupler row");
    }
    let gs = true_gateset(&table, &device).expect("three-qubit table builds");
    (device, gs)
}

// ---------------------------------------------------------------------------
// Gauss–Hermite quadrature oracle for the duration-smeared gate channel
// ---------------------------------------------------------------------------

/// Nodes and weights of n-point Gauss–Hermite quadrature (weight e^{-x^2}),
/// computed by the Golub–Welsch method: nodes are the eigenvalues of the
/// Jacobi matrix with off-diagonals sqrt(k/2), weights are sqrt(pi) times
/// the squared first components of the normalized eigenvectors.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let first = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Choi matrix of the duration-smeared gate channel computed by direct
/// 64-node quadrature over the Gaussian duration fluctuation: the channel
/// averages conjugation by U^tau over tau ~ Normal(1, nu^2), so its Choi
/// matrix is the weighted sum of |vec(U^tau)><vec(U^tau)| over the nodes
/// tau_k = 1 + sqrt(2) nu x_k.
pub fn smeared_choi_by_quadrature(nu: f64, u: &ComplexMatrix) -> ComplexMatrix {
    let d = u.nrows();
    let (thetas, vectors) = unitary_eigen(u).expect("unitary eigendecomposition");
    let (nodes, weights) = gauss_hermite(64);
    let norm = std::f64::consts::PI.sqrt();
    let mut choi = ComplexMatrix::zeros(d * d, d * d);
    for (&x, &w) in nodes.iter().zip(&weights) {
        let tau = 1.0 + std::f64::consts::SQRT_2 * nu * x;
        // U^tau = V diag(e^{i theta tau}) V^dagger via the eigendecomposition.
        let mut u_tau = ComplexMatrix::zeros(d, d);
        for (j, &theta) in thetas.iter().enumerate() {
            let col = vectors.column(j);
            let phase = Complex64::from_polar(1.0, theta * tau);
            for a in 0..d {
                for b in 0..d {
                    u_tau[(a, b)] += phase * col[a] * col[b].conj();
                }
            }
        }
        let v = vec_row_major(&u_tau);
        let scale = Complex64::new(w / norm, 0.0);
        for (r, vr) in v.iter().enumerate() {
            for (c, vc) in v.iter().enumerate() {
                choi[(r, c)] += scale * vr * vc.conj();
            }
        }
    }
    choi
}

// ---------------------------------------------------------------------------
// Dense superoperator embedding oracle
// ---------------------------------------------------------------------------

/// Embeds a local superoperator (acting on row-major-vectorized density
/// matrices of the target qubits, targets[0] on the most significant local
/// bit) into the full 4^n-dimensional superoperator by explicit index
/// arithmetic. Global basis index bit q is qubit q.
pub fn embed_superop(local: &ComplexMatrix, targets: &[usize], n: usize) -> ComplexMatrix {
    let k = targets.len();
    let dl = 1usize << k;
    let dg = 1usize << n;
    let local_bits = |global: usize| -> usize {
        let mut l = 0usize;
        for (i, &q) in targets.iter().enumerate() {
            l |= ((global >> q) & 1) << (k - 1 - i);
        }
        l
    };
    let rest_mask: usize = (0..n).filter(|q| !targets.contains(q)).map(|q| 1usize << q).sum();
    let mut out = ComplexMatrix::zeros(dg * dg, dg * dg);
    for a in 0..dg {
        for b in 0..dg {
            let row = a * dg + b;
            for c in 0..dg {
                if (a ^ c) & rest_mask != 0 {
                    continue;
                }
                for d in 0..dg {
                    if (b ^ d) & rest_mask != 0 {
                        continue;
                    }
                    let col = c * dg + d;
                    out[(row, col)] = local[(
                        local_bits(a) * dl + local_bits(b),
                        local_bits(c) * dl + local_bits(d),
                    )];
                }
            }
        }
    }
    out
}

/// Row-major vectorization of a density matrix as a column vector.
pub fn vec_column(m: &ComplexMatrix) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_vec(vec_row_major(m))
}

// ---------------------------------------------------------------------------
// Cached synthetic monitoring runs (shared between acceptance criteria)
// ---------------------------------------------------------------------------

pub const MONITORING_CHECKPOINTS: [usize; 3] = [8, 32, 128];
pub const MONITORING_TRAIN: usize = 128;
pub const MONITORING_HELDOUT: usize = 32;
pub const MONITORING_SHOTS: u64 = 4096;

/// One full synthetic monitoring experiment: records sampled from the true
/// gate set and the checkpoint estimates fitted from growing prefixes.
pub struct SeedRun {
    pub train: Vec<Record>,
    pub heldout: Vec<Record>,
    /// Checkpoint estimates keyed by records consumed.
    pub fits: BTreeMap<usize, GateSet>,
}

/// Computes (or returns the cached) monitoring run for one master seed.
/// Criteria that share a fit must call this instead of refitting.
pub fn seed_run(master_seed: u64) -> Arc<SeedRun> {
    static CACHE: OnceLock<Mutex<BTreeMap<u64, Arc<SeedRun>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut guard = cache.lock().expect("seed-run cache");
    if let Some(run) = guard.get(&master_seed) {
        return Arc::clone(run);
    }
    let (device, truth_gs) = truth();
    let total = MONITORING_TRAIN + MONITORING_HELDOUT;
    let circuits = generate_circuits(device, total, stage_seed(master_seed, Stage::Circuits))
        .expect("circuit generation");
    let samples = sample_records(
        truth_gs,
        &circuits,
        MONITORING_SHOTS,
        stage_seed(master_seed, Stage::Sampling),
    )
    .expect("sampling");
    let mut records = records_from(circuits, samples).expect("records pair up");
    let heldout = records.split_off(MONITORING_TRAIN);
    let config = EstimatorConfig {
        seed: stage_seed(master_seed, Stage::Estimation),
        ..EstimatorConfig::default()
    };
    let fits = monitoring_run(device, &records, &MONITORING_CHECKPOINTS, &config)
        .expect("monitoring run")
        .into_iter()
        .map(|cf| (cf.n_records, cf.report.gateset))
        .collect();
    let run = Arc::new(SeedRun { train: records, heldout, fits });
    guard.insert(master_seed, Arc::clone(&run));
    run
}

/// Arithmetic mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

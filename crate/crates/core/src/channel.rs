//! Quantum channels on small Hilbert spaces.
//!
//! A [`Channel`] is a completely positive trace-preserving (CPTP) map stored
//! as a list of Kraus operators, with the Choi matrix cached on demand. The
//! Kraus form drives simulation; the Choi form drives metrics and
//! serialization.
//!
//! Conventions, fixed once and used everywhere:
//! * Choi matrix on the output (x) input tensor space, output index major:
//!   C[(a,j),(b,k)] = <a| Phi[|j><k|] |b>.
//! * Kraus operators are square d x d; channels here never change dimension.
//! * The canonical Kraus list from a Choi matrix is ordered by descending
//!   eigenvalue.

use num_complex::Complex64;
use once_cell::sync::OnceCell;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{
    c, hermitian_eigen, hermiticity_residual, identity, kron, max_abs, partial_trace_out,
    unvec_row_major, vec_row_major, ComplexMatrix,
};

/// Eigenvalues of a Choi matrix below -PSD_CLIP_TOL are an error; values in
/// [-PSD_CLIP_TOL, 0] are clipped to zero during Kraus extraction.
pub const PSD_CLIP_TOL: f64 = 1e-10;

/// Kraus operators with squared norm below this are dropped from canonical
/// decompositions.
const KRAUS_DROP_TOL: f64 = 1e-12;

/// A CPTP map on a d-dimensional system.
#[derive(Debug, Clone)]
pub struct Channel {
    dim: usize,
    kraus: Vec<ComplexMatrix>,
    choi: OnceCell<ComplexMatrix>,
}

/// Diagnostics from [`Channel::validate_cptp`].
#[derive(Debug, Clone)]
pub struct CptpReport {
    /// Max entrywise deviation of the Choi matrix from Hermiticity.
    pub herm_residual: f64,
    /// Most negative Choi eigenvalue (0 if none are negative).
    pub psd_residual: f64,
    /// Frobenius distance of the output-traced Choi matrix from identity.
    pub tp_residual: f64,
    /// Max entrywise deviation between the cached Choi matrix and the one
    /// rebuilt from the Kraus list.
    pub kraus_choi_residual: f64,
    /// True when all residuals are within the requested tolerance.
    pub pass: bool,
}

/// A single POVM effect (measurement operator).
#[derive(Debug, Clone)]
pub struct PovmEffect {
    pub matrix: ComplexMatrix,
}

impl PovmEffect {
    /// Checks Hermiticity and the spectrum bound 0 <= E <= 1.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if hermiticity_residual(&self.matrix) > tol {
            return Err(Error::numerical("POVM effect is not Hermitian"));
        }
        let (values, _) = hermitian_eigen(&self.matrix)?;
        for v in values {
            if v < -tol || v > 1.0 + tol {
                return Err(Error::numerical(format!(
                    "POVM effect eigenvalue {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Choi matrix from a Kraus list: C = sum_m vec(K_m) vec(K_m)^dagger with
/// row-major vectorization.
pub fn kraus_to_choi(kraus: &[ComplexMatrix]) -> ComplexMatrix {
    let d = kraus[0].nrows();
    let dd = d * d;
    let mut choi = ComplexMatrix::zeros(dd, dd);
    for k in kraus {
        let w = vec_row_major(k);
        for (row, wr) in w.iter().enumerate() {
            for (col, wc) in w.iter().enumerate() {
                choi[(row, col)] += wr * wc.conj();
            }
        }
    }
    choi
}

/// Canonical Kraus list from a Choi matrix.
///
/// Eigenvalues below -tol are rejected, values in [-tol, 0] are clipped, and
/// the operators are returned in descending eigenvalue order.
pub fn choi_to_kraus(choi: &ComplexMatrix, tol: f64) -> Result<Vec<ComplexMatrix>> {
    let dd = choi.nrows();
    let d = (dd as f64).sqrt().round() as usize;
    if d * d != dd || choi.ncols() != dd {
        return Err(Error::validation(
            "Choi matrix must be square with a perfect-square dimension",
        ));
    }
    let scale = max_abs(choi).max(1.0);
    if hermiticity_residual(choi) > 1e-8 * scale {
        return Err(Error::numerical("Choi matrix is not Hermitian"));
    }
    let (values, vectors) = hermitian_eigen(choi)?;
    let mut kraus = Vec::new();
    for k in (0..dd).rev() {
        let lambda = values[k];
        if lambda < -tol * scale {
            return Err(Error::numerical(format!(
                "Choi matrix has a negative eigenvalue {lambda:.3e}"
            )));
        }
        let lambda = lambda.max(0.0);
        if lambda <= KRAUS_DROP_TOL {
            continue;
        }
        let col: Vec<Complex64> = vectors
            .column(k)
            .iter()
            .map(|z| z * c(lambda.sqrt(), 0.0))
            .collect();
        kraus.push(unvec_row_major(&col, d, d));
    }
    if kraus.is_empty() {
        return Err(Error::numerical("Choi matrix has no positive spectrum"));
    }
    Ok(kraus)
}

impl Channel {
    /// Builds a channel from Kraus operators. Shapes must agree and be
    /// square; CPTP is not enforced here (see [`Channel::validate_cptp`]).
    pub fn from_kraus(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::validation("channel needs at least one Kraus operator"));
        }
        let d = kraus[0].nrows();
        for k in &kraus {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::validation("Kraus operators must share a square shape"));
            }
            if k.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::numerical("Kraus operator has non-finite entries"));
            }
        }
        Ok(Channel {
            dim: d,
            kraus,
            choi: OnceCell::new(),
        })
    }

    /// Builds a channel from a Choi matrix by extracting canonical Kraus
    /// operators. The input matrix is kept as the cached Choi form, so a
    /// loaded channel serializes back byte-identically; any spectrum
    /// clipping shows up in [`CptpReport::kraus_choi_residual`].
    pub fn from_choi(choi: &ComplexMatrix) -> Result<Self> {
        let kraus = choi_to_kraus(choi, PSD_CLIP_TOL)?;
        let chan = Channel::from_kraus(kraus)?;
        chan.choi.set(choi.clone()).ok();
        Ok(chan)
    }

    /// Identity channel on dimension d.
    pub fn identity(d: usize) -> Self {
        Channel::from_kraus(vec![identity(d)]).expect("identity Kraus is valid")
    }

    /// Unitary conjugation channel rho -> u rho u^dagger.
    pub fn from_unitary(u: &ComplexMatrix) -> Result<Self> {
        if crate::linalg::unitarity_residual(u) > 1e-9 {
            return Err(Error::validation("matrix is not unitary"));
        }
        Channel::from_kraus(vec![u.clone()])
    }

    /// Reset channel rho -> |0><0| Tr[rho] (ideal preparation).
    pub fn reset_to_zero(d: usize) -> Self {
        let mut kraus = Vec::with_capacity(d);
        for j in 0..d {
            let mut k = ComplexMatrix::zeros(d, d);
            k[(0, j)] = c(1.0, 0.0);
            kraus.push(k);
        }
        Channel::from_kraus(kraus).expect("reset Kraus is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    /// The Choi matrix, computed from the Kraus list on first use.
    pub fn choi(&self) -> &ComplexMatrix {
        self.choi.get_or_init(|| kraus_to_choi(&self.kraus))
    }

    /// Applies the channel to a density matrix of matching dimension.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(Error::validation(format!(
                "channel dimension {} does not match state dimension {}",
                self.dim,
                rho.nrows()
            )));
        }
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        Ok(out)
    }

    /// Heisenberg-picture action on an observable: Phi^dagger[o] =
    /// sum_m K_m^dagger o K_m.
    pub fn adjoint_apply(&self, obs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if obs.nrows() != self.dim || obs.ncols() != self.dim {
            return Err(Error::validation("observable dimension mismatch"));
        }
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for k in &self.kraus {
            out += k.adjoint() * obs * k;
        }
        Ok(out)
    }

    /// Composition (after . before): applies `before` first. Kraus lists
    /// multiply pairwise, so the rank grows; use [`Channel::canonical`] to
    /// compress afterwards.
    pub fn compose(after: &Channel, before: &Channel) -> Result<Channel> {
        if after.dim != before.dim {
            return Err(Error::validation("composed channels must share a dimension"));
        }
        let mut kraus = Vec::with_capacity(after.kraus.len() * before.kraus.len());
        for a in &after.kraus {
            for b in &before.kraus {
                kraus.push(a * b);
            }
        }
        Channel::from_kraus(kraus)
    }

    /// Tensor product acting on the joint space, first factor on the major
    /// index.
    pub fn tensor(a: &Channel, b: &Channel) -> Result<Channel> {
        let mut kraus = Vec::with_capacity(a.kraus.len() * b.kraus.len());
        for ka in &a.kraus {
            for kb in &b.kraus {
                kraus.push(kron(ka, kb));
            }
        }
        Channel::from_kraus(kraus)
    }

    /// Re-extracts a minimal canonical Kraus list (rank at most d^2) through
    /// the Choi matrix.
    pub fn canonical(&self) -> Result<Channel> {
        Channel::from_choi(self.choi())
    }

    /// Process fidelity against an ideal unitary:
    /// F = <Psi_u| C(Phi) |Psi_u> / d^2 with |Psi_u> = (u x 1) sum_j |jj>.
    pub fn gate_fidelity(&self, ideal_unitary: &ComplexMatrix) -> Result<f64> {
        if ideal_unitary.nrows() != self.dim || ideal_unitary.ncols() != self.dim {
            return Err(Error::validation(format!(
                "fidelity needs matching dimensions, channel {} vs unitary {}",
                self.dim,
                ideal_unitary.nrows()
            )));
        }
        // (u x 1) sum_j |jj> has entries u[a, j] at position (a, j): exactly
        // the row-major vectorization of u.
        let psi = vec_row_major(ideal_unitary);
        let choi = self.choi();
        let dd = self.dim * self.dim;
        let mut acc = c(0.0, 0.0);
        for row in 0..dd {
            for col in 0..dd {
                acc += psi[row].conj() * choi[(row, col)] * psi[col];
            }
        }
        if acc.im.abs() > 1e-9 {
            return Err(Error::numerical(format!(
                "fidelity has a non-real value (imaginary part {:.3e})",
                acc.im
            )));
        }
        Ok(acc.re / (dd as f64))
    }

    /// POVM effect of outcome k when this channel precedes an ideal
    /// computational-basis readout: E_k = Phi^dagger[|k><k|].
    pub fn povm_effect(&self, k: usize) -> Result<PovmEffect> {
        if k >= self.dim {
            return Err(Error::validation(format!(
                "outcome {k} out of range for dimension {}",
                self.dim
            )));
        }
        let mut proj = ComplexMatrix::zeros(self.dim, self.dim);
        proj[(k, k)] = c(1.0, 0.0);
        Ok(PovmEffect {
            matrix: self.adjoint_apply(&proj)?,
        })
    }

    /// CPTP diagnostics at the given tolerance.
    pub fn validate_cptp(&self, tol: f64) -> Result<CptpReport> {
        let choi = self.choi();
        let herm_residual = hermiticity_residual(choi);
        let (values, _) = hermitian_eigen(&crate::linalg::hermitian_part(choi))?;
        let psd_residual = values.first().copied().unwrap_or(0.0).min(0.0);
        let traced = partial_trace_out(choi, self.dim, self.dim);
        let tp_residual = (traced - identity(self.dim)).norm();
        let kraus_choi_residual = max_abs(&(choi - kraus_to_choi(&self.kraus)));
        let pass = herm_residual <= tol
            && psd_residual >= -tol
            && tp_residual <= tol
            && kraus_choi_residual <= tol;
        Ok(CptpReport {
            herm_residual,
            psd_residual,
            tp_residual,
            kraus_choi_residual,
            pass,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelJson {
    dim_in: usize,
    choi: Vec<Vec<[f64; 2]>>,
}

impl Serialize for Channel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let choi = self.choi();
        let dd = self.dim * self.dim;
        let rows = (0..dd)
            .map(|r| {
                (0..dd)
                    .map(|col| {
                        let z = choi[(r, col)];
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect();
        ChannelJson {
            dim_in: self.dim,
            choi: rows,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Channel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = ChannelJson::deserialize(deserializer)?;
        let dd = raw.dim_in * raw.dim_in;
        if raw.choi.len() != dd || raw.choi.iter().any(|row| row.len() != dd) {
            return Err(D::Error::custom(format!(
                "Choi matrix must be {dd} x {dd} for dim_in {}",
                raw.dim_in
            )));
        }
        let choi = ComplexMatrix::from_fn(dd, dd, |r, col| {
            let [re, im] = raw.choi[r][col];
            c(re, im)
        });
        Channel::from_choi(&choi).map_err(|e| D::Error::custom(e.to_string()))
    }
}

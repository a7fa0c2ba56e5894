//! Complex Stiefel manifold operations for stacked-Kraus isometries.
//!
//! A channel with r Kraus operators of dimension d is parameterized by the
//! isometry V in C^{(r d) x d} obtained by stacking the Kraus blocks;
//! V^dagger V = 1 is exactly trace preservation. Optimization moves over
//! the manifold of such isometries with the embedded (Euclidean) metric.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_part, max_abs, thin_qr_phase_fixed, ComplexMatrix};

/// Deviation of V from isometry, max |V^dagger V - 1| entrywise.
pub fn isometry_residual(v: &ComplexMatrix) -> f64 {
    let d = v.ncols();
    max_abs(&(v.adjoint() * v - ComplexMatrix::identity(d, d)))
}

/// Stacks the ideal unitary over zero blocks: the isometry whose channel is
/// exactly the unitary channel, with room for `rank` Kraus operators.
pub fn ideal_isometry(u: &ComplexMatrix, rank: usize) -> ComplexMatrix {
    let d = u.ncols();
    let mut v = ComplexMatrix::zeros(rank * d, d);
    v.view_mut((0, 0), (d, d)).copy_from(u);
    v
}

/// Splits a stacked isometry into its Kraus blocks.
pub fn kraus_blocks(v: &ComplexMatrix) -> Vec<ComplexMatrix> {
    let d = v.ncols();
    let rank = v.nrows() / d;
    (0..rank).map(|m| v.rows(m * d, d).into_owned()).collect()
}

/// Stacks Kraus blocks back into the tall matrix form, padding with zero
/// blocks up to `rank` operators.
pub fn stack_kraus(kraus: &[ComplexMatrix], rank: usize) -> Result<ComplexMatrix> {
    if kraus.is_empty() {
        return Err(Error::validation("cannot stack an empty Kraus family"));
    }
    let d = kraus[0].ncols();
    if kraus.len() > rank {
        return Err(Error::validation(format!(
            "{} Kraus operators exceed the stacking rank {rank}",
            kraus.len()
        )));
    }
    let mut v = ComplexMatrix::zeros(rank * d, d);
    for (m, k) in kraus.iter().enumerate() {
        if k.shape() != (d, d) {
            return Err(Error::validation("Kraus operators must share one shape"));
        }
        v.view_mut((m * d, 0), (d, d)).copy_from(k);
    }
    Ok(v)
}

/// Orthogonal projection of an ambient gradient onto the tangent space at V:
/// xi = g - V herm(V^dagger g). Tangent vectors satisfy
/// herm(V^dagger xi) = 0.
pub fn project_tangent(v: &ComplexMatrix, g: &ComplexMatrix) -> ComplexMatrix {
    g - v * hermitian_part(&(v.adjoint() * g))
}

/// QR retraction: the phase-fixed Q factor of V + xi. Satisfies
/// retract(V, 0) = V for isometric V.
pub fn retract(v: &ComplexMatrix, xi: &ComplexMatrix) -> ComplexMatrix {
    let (q, _) = thin_qr_phase_fixed(&(v + xi));
    q
}

/// A random tangent vector at V with entries of the given scale.
pub fn random_tangent<R: rand::Rng>(rng: &mut R, v: &ComplexMatrix, scale: f64) -> ComplexMatrix {
    let g = crate::linalg::random_complex_gaussian(rng, v.nrows(), v.ncols()) * c(scale, 0.0);
    project_tangent(v, &g)
}

/// Frobenius norm of a (complex) matrix.
pub fn frobenius_norm(m: &ComplexMatrix) -> f64 {
    m.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

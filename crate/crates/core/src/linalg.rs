//! Dense complex linear algebra helpers shared across the crate.
//!
//! Everything here operates on small matrices (dimension at most a few
//! dozen), so the routines favour robustness and determinism over asymptotic
//! speed. Matrices are `nalgebra` dynamic matrices over `Complex64`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Shorthand for a complex scalar.
#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// d x d identity matrix.
pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

/// Kronecker product, first factor on the most significant index.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Hermitian part (m + m^dagger) / 2.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Largest absolute entry.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Deviation from Hermiticity, max |m - m^dagger| entrywise.
pub fn hermiticity_residual(m: &ComplexMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// The 4^n Pauli matrices on n qubits, ordered as base-4 strings over
/// (I, X, Y, Z) with the first qubit on the most significant index.
pub fn pauli_matrices(n_qubits: usize) -> Vec<ComplexMatrix> {
    let single = [
        identity(2),
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]),
        ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]),
    ];
    let mut out = vec![ComplexMatrix::identity(1, 1)];
    for _ in 0..n_qubits {
        out = out
            .iter()
            .flat_map(|p| single.iter().map(move |s| kron(p, s)))
            .collect();
    }
    out
}

/// Deviation from unitarity, max |u^dagger u - 1| entrywise.
pub fn unitarity_residual(u: &ComplexMatrix) -> f64 {
    let d = u.ncols();
    max_abs(&(u.adjoint() * u - identity(d)))
}

/// Row-major vectorization: entry (a, j) lands at position a*ncols + j.
pub fn vec_row_major(m: &ComplexMatrix) -> Vec<Complex64> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for a in 0..rows {
        for j in 0..cols {
            out.push(m[(a, j)]);
        }
    }
    out
}

/// Inverse of [`vec_row_major`].
pub fn unvec_row_major(v: &[Complex64], rows: usize, cols: usize) -> ComplexMatrix {
    assert_eq!(v.len(), rows * cols, "vector length must match shape");
    ComplexMatrix::from_fn(rows, cols, |a, j| v[a * cols + j])
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order together with the matching
/// orthonormal eigenvectors as columns. The input is symmetrised first, so
/// tiny Hermiticity violations from round-off are tolerated; larger ones are
/// rejected.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::validation("hermitian_eigen expects a square matrix"));
    }
    let scale = max_abs(m).max(1.0);
    if hermiticity_residual(m) > 1e-9 * scale {
        return Err(Error::numerical(format!(
            "matrix is not Hermitian (residual {:.3e})",
            hermiticity_residual(m)
        )));
    }
    let se = nalgebra::SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[i]
            .partial_cmp(&se.eigenvalues[j])
            .expect("eigenvalues must be finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vectors = ComplexMatrix::from_fn(d, d, |r, k| se.eigenvectors[(r, order[k])]);
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::numerical("eigensolver produced non-finite values"));
    }
    Ok((values, vectors))
}

/// Eigendecomposition of a unitary matrix.
///
/// Returns eigenphases in (-pi, pi] and the matching orthonormal
/// eigenvectors as columns. Works through the commuting Hermitian pair
/// (u + u^dagger)/2 and (u - u^dagger)/(2i): the first is diagonalised, then
/// each degenerate cluster is resolved with the second. This stays stable
/// when the Hermitian part alone is degenerate (e.g. u = diag(e^{-ia}, e^{ia})).
pub fn unitary_eigen(u: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let d = u.nrows();
    if u.ncols() != d {
        return Err(Error::validation("unitary_eigen expects a square matrix"));
    }
    if unitarity_residual(u) > 1e-9 {
        return Err(Error::validation(format!(
            "matrix is not unitary (residual {:.3e})",
            unitarity_residual(u)
        )));
    }
    let re_part = hermitian_part(u);
    let im_part = (u - u.adjoint()) * c(0.0, -0.5);
    let (alphas, mut basis) = hermitian_eigen(&re_part)?;

    // Resolve clusters of the real part with the imaginary part.
    let cluster_tol = 1e-8;
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (alphas[end] - alphas[start]).abs() <= cluster_tol {
            end += 1;
        }
        if end - start > 1 {
            let w = basis.columns(start, end - start).into_owned();
            let sub = w.adjoint() * &im_part * &w;
            let (_, z) = hermitian_eigen(&sub)?;
            let rotated = w * z;
            basis.columns_mut(start, end - start).copy_from(&rotated);
        }
        start = end;
    }

    let mut thetas = Vec::with_capacity(d);
    for k in 0..d {
        let v = basis.column(k);
        let lambda: Complex64 = (v.adjoint() * u * v)[(0, 0)];
        if (lambda.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::numerical(
                "unitary eigendecomposition produced a non-unimodular eigenvalue",
            ));
        }
        let mut theta = lambda.arg();
        // Branch convention: phases live in (-pi, pi].
        if theta <= -std::f64::consts::PI + 1e-15 {
            theta += 2.0 * std::f64::consts::PI;
        }
        thetas.push(theta);
    }
    Ok((thetas, basis))
}

/// Thin QR of a tall matrix with the R diagonal made real and positive,
/// which makes the factorisation unique and keeps `qr(v) = (v, 1)` for an
/// isometry `v`.
pub fn thin_qr_phase_fixed(m: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let cols = m.ncols();
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..cols {
        let diag = r[(j, j)];
        let phase = if diag.norm() > 0.0 {
            diag / diag.norm()
        } else {
            c(1.0, 0.0)
        };
        // Multiply column j of q by phase and row j of r by its conjugate.
        let conj = phase.conj();
        for i in 0..q.nrows() {
            q[(i, j)] *= phase;
        }
        for k in 0..cols {
            r[(j, k)] *= conj;
        }
    }
    (q, r)
}

/// Cholesky factor L (lower triangular, L L^dagger = m) of a Hermitian
/// positive-definite matrix. Returns `None` unless every pivot is finite
/// and strictly positive — unlike a complex-field factorization, which
/// "succeeds" on indefinite matrices because complex square roots always
/// exist. This is the factorization to use as a positive-definiteness
/// test.
pub fn hermitian_cholesky(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = m.nrows();
    if m.ncols() != n {
        return None;
    }
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        // `!(pivot > 0)` also rejects NaN.
        if !(pivot > 0.0) || !pivot.is_finite() {
            return None;
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = c(ljj, 0.0);
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / ljj;
        }
    }
    Some(l)
}

/// Inverse of a Hermitian positive-definite matrix through its Cholesky
/// factor; `None` when the matrix is not (numerically) positive definite.
pub fn hermitian_cholesky_inverse(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    let l = hermitian_cholesky(m)?;
    let n = l.nrows();
    // Invert the lower-triangular factor, then m^{-1} = L^{-dagger} L^{-1}.
    let mut linv = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        linv[(k, k)] = c(1.0, 0.0) / l[(k, k)];
        for i in (k + 1)..n {
            let mut v = c(0.0, 0.0);
            for t in k..i {
                v -= l[(i, t)] * linv[(t, k)];
            }
            linv[(i, k)] = v / l[(i, i)];
        }
    }
    Some(linv.adjoint() * linv)
}

/// Trace norm (sum of absolute eigenvalues) of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &ComplexMatrix) -> Result<f64> {
    let (values, _) = hermitian_eigen(m)?;
    Ok(values.iter().map(|v| v.abs()).sum())
}

/// Operator norm (largest absolute eigenvalue) of a Hermitian matrix.
pub fn op_norm_hermitian(m: &ComplexMatrix) -> Result<f64> {
    let (values, _) = hermitian_eigen(m)?;
    Ok(values.iter().map(|v| v.abs()).fold(0.0, f64::max))
}

/// Partial trace over the first (output) factor of a matrix on a
/// dim_out x dim_in tensor space with the output index major:
/// out[j, k] = sum_a m[(a, j), (a, k)].
pub fn partial_trace_out(m: &ComplexMatrix, dim_out: usize, dim_in: usize) -> ComplexMatrix {
    assert_eq!(m.nrows(), dim_out * dim_in);
    assert_eq!(m.ncols(), dim_out * dim_in);
    ComplexMatrix::from_fn(dim_in, dim_in, |j, k| {
        (0..dim_out)
            .map(|a| m[(a * dim_in + j, a * dim_in + k)])
            .sum()
    })
}

/// Partial trace over the second (input) factor:
/// out[a, b] = sum_j m[(a, j), (b, j)].
pub fn partial_trace_in(m: &ComplexMatrix, dim_out: usize, dim_in: usize) -> ComplexMatrix {
    assert_eq!(m.nrows(), dim_out * dim_in);
    assert_eq!(m.ncols(), dim_out * dim_in);
    ComplexMatrix::from_fn(dim_out, dim_out, |a, b| {
        (0..dim_in)
            .map(|j| m[(a * dim_in + j, b * dim_in + j)])
            .sum()
    })
}

/// Matrix exponential via scaling and squaring with a Taylor core.
///
/// Intended for small matrices with moderate norm; the Taylor series is run
/// to machine precision after scaling the norm below 1/2.
pub fn expm(m: &ComplexMatrix) -> ComplexMatrix {
    let d = m.nrows();
    assert_eq!(d, m.ncols(), "expm expects a square matrix");
    let norm = max_abs(m) * d as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m * c(1.0 / f64::powi(2.0, squarings as i32), 0.0);
    let mut term = identity(d);
    let mut sum = identity(d);
    for k in 1..=30 {
        term = &term * &scaled * c(1.0 / k as f64, 0.0);
        sum += &term;
        if max_abs(&term) < 1e-18 {
            break;
        }
    }
    let mut result = sum;
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Standard-normal complex matrix (real and imaginary parts N(0, 1)).
pub fn random_complex_gaussian<R: rand::Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> ComplexMatrix {
    use rand::distributions::Distribution;
    let normal = rand::distributions::Standard;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let u1: f64 = normal.sample(rng);
        let u2: f64 = normal.sample(rng);
        // Box-Muller keeps us independent of external normal distributions.
        let r = (-2.0 * (1.0 - u1).max(1e-300).ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        c(r * angle.cos(), r * angle.sin())
    })
}

/// Haar-ish random unitary: QR of a complex Gaussian matrix with the phase
/// fix applied.
pub fn random_unitary<R: rand::Rng>(rng: &mut R, d: usize) -> ComplexMatrix {
    let g = random_complex_gaussian(rng, d, d);
    let (q, _) = thin_qr_phase_fixed(&g);
    q
}

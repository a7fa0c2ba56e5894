//! Diamond-norm distance between channels via semidefinite programming.
//!
//! For channels with Choi matrices C_a, C_b the difference J = C_a - C_b is
//! Hermitian, and the diamond norm of the difference map reduces to
//!
//!     min { || Tr_out(Y) ||_inf  :  Y >= J, Y >= -J }
//!
//! over Hermitian Y on the output x input space: the general two-block
//! program collapses to one block because a feasible pair can always be
//! symmetrized for a Hermitian off-diagonal block. The program is solved
//! with a log-barrier path-following method; the barrier parameter of the
//! three cones (two of size D = d^2, one of size d) is theta = 2D + d, so a
//! centered point at temperature t is within theta / t of the optimum,
//! giving a computable gap certificate. The trace-norm sandwich
//! ||J||_1 / d <= value <= ||J||_1 supplies independent bounds.

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::linalg::{
    c, hermiticity_residual, hermitian_cholesky, hermitian_cholesky_inverse, max_abs,
    op_norm_hermitian, partial_trace_out, trace_norm_hermitian, ComplexMatrix,
};

/// Options for the interior-point solve.
#[derive(Debug, Clone, Copy)]
pub struct DiamondOptions {
    /// Target duality-gap bound, relative to the operator norm of J.
    pub gap_tol: f64,
    /// Multiplicative temperature increase between centering stages.
    pub t_factor: f64,
    /// Squared Newton decrement below which a stage counts as centered.
    pub newton_tol: f64,
    /// Newton iteration cap per stage.
    pub max_newton: usize,
}

impl Default for DiamondOptions {
    fn default() -> Self {
        DiamondOptions {
            gap_tol: 1e-8,
            t_factor: 20.0,
            newton_tol: 1e-12,
            max_newton: 100,
        }
    }
}

/// Outcome of a diamond-norm computation.
#[derive(Debug, Clone, Copy)]
pub struct DiamondResult {
    /// The primal objective at the final center (an upper bound on the
    /// exact value, tight to within `gap`).
    pub value: f64,
    /// Best lower bound: max(value - gap, ||J||_1 / d).
    pub lower: f64,
    /// Best upper bound: min(value, ||J||_1).
    pub upper: f64,
    /// Certified duality gap at the final center.
    pub gap: f64,
    /// Whether every centering stage reached its Newton tolerance.
    pub converged: bool,
    /// Total Newton steps across all stages.
    pub newton_steps: usize,
}

/// Real coordinate directions spanning Hermitian matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    /// e_aa
    Diag(usize),
    /// e_ab + e_ba, a < b
    Re(usize, usize),
    /// i e_ab - i e_ba, a < b
    Im(usize, usize),
}

fn directions(dim: usize) -> Vec<Dir> {
    let mut dirs = Vec::with_capacity(dim * dim);
    for a in 0..dim {
        dirs.push(Dir::Diag(a));
    }
    for a in 0..dim {
        for b in (a + 1)..dim {
            dirs.push(Dir::Re(a, b));
            dirs.push(Dir::Im(a, b));
        }
    }
    dirs
}

/// Folds coordinates into the Hermitian matrix they parameterize.
fn assemble(dirs: &[Dir], coords: &[f64], dim: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim, dim);
    for (dir, &v) in dirs.iter().zip(coords) {
        match *dir {
            Dir::Diag(a) => m[(a, a)] += c(v, 0.0),
            Dir::Re(a, b) => {
                m[(a, b)] += c(v, 0.0);
                m[(b, a)] += c(v, 0.0);
            }
            Dir::Im(a, b) => {
                m[(a, b)] += c(0.0, v);
                m[(b, a)] -= c(0.0, v);
            }
        }
    }
    m
}

/// Tr(W * dir) for Hermitian W.
fn trace_with(w: &ComplexMatrix, dir: Dir) -> f64 {
    match dir {
        Dir::Diag(a) => w[(a, a)].re,
        Dir::Re(a, b) => 2.0 * w[(a, b)].re,
        Dir::Im(a, b) => 2.0 * w[(a, b)].im,
    }
}

/// Tr(M * dir_i * M * dir_j) for Hermitian M, the Hessian kernel of the
/// log-det barrier. Uses Tr(M e_ab M e_cd) = M[d,a] M[b,c].
fn pair_term(m: &ComplexMatrix, di: Dir, dj: Dir) -> f64 {
    fn rank(d: Dir) -> u8 {
        match d {
            Dir::Diag(_) => 0,
            Dir::Re(_, _) => 1,
            Dir::Im(_, _) => 2,
        }
    }
    let (di, dj) = if rank(di) <= rank(dj) { (di, dj) } else { (dj, di) };
    match (di, dj) {
        (Dir::Diag(a), Dir::Diag(cc)) => m[(a, cc)].norm_sqr(),
        (Dir::Diag(a), Dir::Re(cc, d)) => 2.0 * (m[(d, a)] * m[(a, cc)]).re,
        (Dir::Diag(a), Dir::Im(cc, d)) => -2.0 * (m[(d, a)] * m[(a, cc)]).im,
        (Dir::Re(a, b), Dir::Re(cc, d)) => {
            let z1 = m[(d, a)] * m[(b, cc)];
            let z2 = m[(cc, a)] * m[(b, d)];
            2.0 * (z1 + z2).re
        }
        (Dir::Re(a, b), Dir::Im(cc, d)) => {
            let z1 = m[(d, a)] * m[(b, cc)];
            let z2 = m[(cc, a)] * m[(b, d)];
            2.0 * (z2.im - z1.im)
        }
        (Dir::Im(a, b), Dir::Im(cc, d)) => {
            let z1 = m[(d, a)] * m[(b, cc)];
            let z2 = m[(cc, a)] * m[(b, d)];
            2.0 * (z2.re - z1.re)
        }
        _ => unreachable!("directions are rank-ordered"),
    }
}

/// The direction's image under the output partial trace, when nonzero.
fn dir_tr_out(dir: Dir, d_in: usize) -> Option<Dir> {
    match dir {
        Dir::Diag(a) => Some(Dir::Diag(a % d_in)),
        Dir::Re(a, b) => (a / d_in == b / d_in).then(|| Dir::Re(a % d_in, b % d_in)),
        Dir::Im(a, b) => (a / d_in == b / d_in).then(|| Dir::Im(a % d_in, b % d_in)),
    }
}

struct Constraints {
    p1: ComplexMatrix,
    p2: ComplexMatrix,
    p3: ComplexMatrix,
}

/// Evaluates the three slack matrices at (Y(coords), mu).
fn slacks(j: &ComplexMatrix, dirs: &[Dir], coords: &[f64], mu: f64, d: usize) -> Constraints {
    let dim = j.nrows();
    let y = assemble(dirs, coords, dim);
    let p1 = &y - j;
    let p2 = &y + j;
    let tr_out = partial_trace_out(&y, d, d);
    let p3 = ComplexMatrix::identity(d, d) * c(mu, 0.0) - tr_out;
    Constraints { p1, p2, p3 }
}

// Positive-definiteness here must be checked with real pivot tests
// (`hermitian_cholesky`): a complex-field factorization happily "factors"
// indefinite matrices, and an undetected infeasible iterate silently
// corrupts the whole solve.
fn psd_inverse(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    hermitian_cholesky_inverse(m)
}

fn is_strictly_feasible(cons: &Constraints) -> bool {
    hermitian_cholesky(&cons.p1).is_some()
        && hermitian_cholesky(&cons.p2).is_some()
        && hermitian_cholesky(&cons.p3).is_some()
}

/// Diamond norm of the Hermitian-Choi difference `j` on a d-dimensional
/// system (j is d^2 x d^2, output index major).
pub fn diamond_norm_hermitian(
    j: &ComplexMatrix,
    d: usize,
    opts: &DiamondOptions,
) -> Result<DiamondResult> {
    let dim = d * d;
    if j.shape() != (dim, dim) {
        return Err(Error::validation(format!(
            "Choi difference shape {:?} does not match dimension {d}",
            j.shape()
        )));
    }
    if hermiticity_residual(j) > 1e-9 * (1.0 + max_abs(j)) {
        return Err(Error::validation("Choi difference must be Hermitian"));
    }
    let scale = op_norm_hermitian(j)?;
    if scale == 0.0 {
        return Ok(DiamondResult {
            value: 0.0,
            lower: 0.0,
            upper: 0.0,
            gap: 0.0,
            converged: true,
            newton_steps: 0,
        });
    }
    let jn = j / c(scale, 0.0);
    let trace_norm = trace_norm_hermitian(&jn)?;

    let dirs = directions(dim);
    let n_y = dirs.len();
    let n = n_y + 1;
    let tr_dirs: Vec<Option<Dir>> = dirs.iter().map(|&dir| dir_tr_out(dir, d)).collect();
    let theta = (2 * dim + d) as f64;

    // Strictly feasible start: Y = alpha 1 with alpha above ||J||_op = 1.
    let mut coords = vec![0.0f64; n_y];
    let alpha = 1.2;
    for (coord, dir) in coords.iter_mut().zip(&dirs) {
        if matches!(dir, Dir::Diag(_)) {
            *coord = alpha;
        }
    }
    let mut mu = alpha * d as f64 + 1.0;

    let mut t = 1.0f64;
    let t_final = 2.0 * theta / opts.gap_tol;
    let mut converged = true;
    let mut newton_steps = 0usize;

    loop {
        // Center at temperature t with damped Newton steps: the decrement
        // lambda is affine-invariant, so both the step damping 1/(1+lambda)
        // and the stopping rule stay meaningful at large t where the raw
        // barrier value would drown descent checks in round-off.
        let mut centered = false;
        for _ in 0..opts.max_newton {
            let cons = slacks(&jn, &dirs, &coords, mu, d);
            let (m1, m2, m3) = match (
                psd_inverse(&cons.p1),
                psd_inverse(&cons.p2),
                psd_inverse(&cons.p3),
            ) {
                (Some(a), Some(b), Some(cc)) => (a, b, cc),
                _ => {
                    return Err(Error::numerical(
                        "interior-point iterate left the feasible cone",
                    ))
                }
            };
            let w12 = &m1 + &m2;
            let m3sq = &m3 * &m3;

            let mut grad = vec![0.0f64; n];
            for i in 0..n_y {
                grad[i] = -trace_with(&w12, dirs[i]);
                if let Some(ti) = tr_dirs[i] {
                    grad[i] += trace_with(&m3, ti);
                }
            }
            grad[n_y] = t - m3.trace().re;

            let mut hess = nalgebra::DMatrix::<f64>::zeros(n, n);
            for i in 0..n_y {
                for k in i..n_y {
                    let mut h =
                        pair_term(&m1, dirs[i], dirs[k]) + pair_term(&m2, dirs[i], dirs[k]);
                    if let (Some(ti), Some(tk)) = (tr_dirs[i], tr_dirs[k]) {
                        h += pair_term(&m3, ti, tk);
                    }
                    hess[(i, k)] = h;
                    hess[(k, i)] = h;
                }
                if let Some(ti) = tr_dirs[i] {
                    let h = -trace_with(&m3sq, ti);
                    hess[(i, n_y)] = h;
                    hess[(n_y, i)] = h;
                }
            }
            hess[(n_y, n_y)] = m3sq.trace().re;

            let g = nalgebra::DVector::<f64>::from_column_slice(&grad);
            let neg_g = -&g;
            // The exact Hessian is positive semidefinite at any strictly
            // feasible point, so a finite step with a non-negative decrement
            // must exist; a factorization that yields anything else is
            // round-off garbage and falls through to the ridge solve.
            let validate = |s: nalgebra::DVector<f64>| -> Option<(nalgebra::DVector<f64>, f64)> {
                if !s.iter().all(|v| v.is_finite()) {
                    return None;
                }
                let l2 = -g.dot(&s);
                if !l2.is_finite() || l2 < -1e-8 * (1.0 + g.norm_squared()) {
                    return None;
                }
                Some((s, l2.max(0.0)))
            };
            let (step, lambda_sq) = hess
                .clone()
                .cholesky()
                .map(|chol| chol.solve(&neg_g))
                .and_then(validate)
                .or_else(|| {
                    let ridge = 1e-12 * hess.diagonal().amax().max(1.0);
                    let reg = hess + nalgebra::DMatrix::identity(n, n) * ridge;
                    reg.lu().solve(&neg_g).and_then(validate)
                })
                .ok_or_else(|| {
                    Error::numerical("interior-point Newton system is not solvable")
                })?;
            newton_steps += 1;
            if lambda_sq <= opts.newton_tol {
                centered = true;
                break;
            }
            let lambda = lambda_sq.max(0.0).sqrt();
            let mut s = if lambda > 0.25 { 1.0 / (1.0 + lambda) } else { 1.0 };

            // Round-off backstop: halve until the candidate stays strictly
            // inside the cone (exact self-concordance guarantees it, floats
            // occasionally do not).
            let mut accepted = false;
            for _ in 0..40 {
                let mut cand = coords.clone();
                for i in 0..n_y {
                    cand[i] += s * step[i];
                }
                let mu_cand = mu + s * step[n_y];
                if is_strictly_feasible(&slacks(&jn, &dirs, &cand, mu_cand, d)) {
                    coords = cand;
                    mu = mu_cand;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                // The iterate is pinned against the cone boundary by
                // round-off; no further progress is possible at this t.
                centered = true;
                break;
            }
        }
        if !centered {
            converged = false;
        }
        if t >= t_final {
            break;
        }
        t = (t * opts.t_factor).min(t_final);
    }

    let gap = theta / t_final * scale;
    let value = mu * scale;
    let lower = (value - 2.0 * gap).max(trace_norm * scale / d as f64);
    let upper = value.min(trace_norm * scale);
    Ok(DiamondResult {
        value,
        lower,
        upper,
        gap,
        converged,
        newton_steps,
    })
}

/// Diamond-norm distance between two channels of equal dimension.
pub fn diamond_distance(
    a: &Channel,
    b: &Channel,
    opts: &DiamondOptions,
) -> Result<DiamondResult> {
    if a.dim() != b.dim() {
        return Err(Error::validation(format!(
            "channel dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let j = a.choi() - b.choi();
    diamond_norm_hermitian(&j, a.dim(), opts)
}

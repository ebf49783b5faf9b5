//! Dense linear algebra helpers on top of the LAPACK backend.
//!
//! All Hermitian diagonalization funnels through [`hermitian_eigen`]. The
//! backend hands a row-major complex buffer to column-major LAPACK, which
//! effectively diagonalizes Hᵀ = conj(H); eigenvalues come back correct and
//! ascending, but the eigenvectors belong to the conjugate matrix. The
//! wrapper conjugates the returned vectors once, and a property test pins
//! the convention so a backend change fails loudly instead of silently.

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest |entry| (used for relative tolerances).
pub fn max_abs(m: &Array2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Relative Hermiticity defect ‖M−M†‖_max / (1+‖M‖_max).
pub fn hermiticity_defect(m: &Array2<Complex64>) -> f64 {
    let scale = 1.0 + max_abs(m);
    let mut worst = 0.0f64;
    for r in 0..m.nrows() {
        for cidx in r..m.ncols() {
            worst = worst.max((m[(r, cidx)] - m[(cidx, r)].conj()).norm());
        }
    }
    worst / scale
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and a
/// matrix whose columns are the corresponding eigenvectors.
pub fn hermitian_eigen(m: &Array2<Complex64>) -> Result<(Array1<f64>, Array2<Complex64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::validation("eigen input must be square"));
    }
    if m.nrows() == 0 {
        return Err(Error::validation("eigen input is empty"));
    }
    let defect = hermiticity_defect(m);
    if defect > 1e-9 {
        return Err(Error::validation(format!(
            "matrix is not Hermitian (relative defect {defect:.3e})"
        )));
    }
    let (vals, vecs) = m
        .eigh(UPLO::Lower)
        .map_err(|e| Error::numerical(format!("zheev failed: {e}")))?;
    // Backend convention fix: columns come back conjugated.
    Ok((vals, vecs.mapv(|z| z.conj())))
}

/// Eigenvalues only.
pub fn hermitian_eigvals(m: &Array2<Complex64>) -> Result<Array1<f64>> {
    Ok(hermitian_eigen(m)?.0)
}

/// Real symmetric eigendecomposition (no conjugation subtlety).
pub fn symmetric_eigen(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    m.eigh(UPLO::Lower)
        .map_err(|e| Error::numerical(format!("dsyev failed: {e}")))
}

/// Spectral norm: max |eigenvalue| for Hermitian input, otherwise
/// √λmax(M†M).
pub fn operator_norm(m: &Array2<Complex64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if hermiticity_defect(m) <= 1e-12 {
        match hermitian_eigvals(m) {
            Ok(v) => v.iter().fold(0.0f64, |a, &x| a.max(x.abs())),
            Err(_) => 0.0,
        }
    } else {
        let mt = m.t().mapv(|z| z.conj());
        let gram = mt.dot(m);
        match hermitian_eigvals(&gram) {
            Ok(v) => v.iter().fold(0.0f64, |a, &x| a.max(x)).max(0.0).sqrt(),
            Err(_) => 0.0,
        }
    }
}

/// e^A for anti-Hermitian A (A† = −A), via the Hermitian matrix iA:
/// if iA = U diag(λ) U†, then e^A = U diag(e^{−iλ}) U†.
pub fn expm_antihermitian(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let scale = 1.0 + max_abs(a);
    let mut worst = 0.0f64;
    for r in 0..a.nrows() {
        for cc in r..a.ncols() {
            worst = worst.max((a[(r, cc)] + a[(cc, r)].conj()).norm());
        }
    }
    if worst / scale > 1e-9 {
        return Err(Error::validation(format!(
            "expm input is not anti-Hermitian (defect {:.3e})",
            worst / scale
        )));
    }
    let k = a.mapv(|z| z * c(0.0, 1.0));
    let (vals, u) = hermitian_eigen(&k)?;
    let udag = u.t().mapv(|z| z.conj());
    let mut phased = udag;
    for (r, row) in phased.rows_mut().into_iter().enumerate() {
        let ph = c(0.0, -vals[r]).exp();
        for z in row {
            *z *= ph;
        }
    }
    Ok(u.dot(&phased))
}

/// Unitary U with U|e_0⟩ = v (v normalized): a Householder reflection with
/// its first column rephased onto v.
pub fn unitary_completing(v: &ArrayView1<Complex64>) -> Array2<Complex64> {
    let n = v.len();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let v: Array1<Complex64> = v.mapv(|z| z / norm);
    if n == 1 {
        let mut m = Array2::zeros((1, 1));
        m[(0, 0)] = v[0];
        return m;
    }
    // u = v + e^{iφ} e_0 with φ = arg v_0 avoids cancellation; the
    // reflection H = I − 2uu†/‖u‖² sends v → −e^{iφ} e_0, so H's first
    // column is −e^{−iφ} v; rescale it to make the first column exactly v.
    let phi = if v[0].norm() > 1e-300 { v[0] / v[0].norm() } else { c(1.0, 0.0) };
    let mut u = v.clone();
    u[0] += phi;
    let u2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
    let mut h = Array2::eye(n);
    for r in 0..n {
        for cc in 0..n {
            h[(r, cc)] -= u[r] * u[cc].conj() * (2.0 / u2);
        }
    }
    // First column is −e^{−iφ}v; multiply that column by −e^{iφ}.
    let fix = -phi;
    for r in 0..n {
        h[(r, 0)] *= fix;
    }
    h
}

/// Orthonormal basis of the orthogonal complement of v, as the columns of
/// an n×(n−1) matrix.
pub fn orthocomplement_basis(v: &ArrayView1<Complex64>) -> Array2<Complex64> {
    let u = unitary_completing(v);
    let n = v.len();
    let mut out = Array2::zeros((n, n - 1));
    for r in 0..n {
        for cc in 1..n {
            out[(r, cc - 1)] = u[(r, cc)];
        }
    }
    out
}

/// Minimum of ⟨φ|H|φ⟩ over normalized φ ⊥ ψ, with the minimizer
/// (expressed back in the original basis).
pub fn deflated_min_eig(
    h: &Array2<Complex64>,
    psi: &ArrayView1<Complex64>,
) -> Result<(f64, Array1<Complex64>)> {
    let n = h.nrows();
    if n < 2 {
        return Err(Error::validation("deflation needs dimension ≥ 2"));
    }
    let b = orthocomplement_basis(psi);
    let bdag = b.t().mapv(|z| z.conj());
    let small = bdag.dot(h).dot(&b);
    let (vals, vecs) = hermitian_eigen(&small)?;
    let ground = vecs.column(0).to_owned();
    Ok((vals[0], b.dot(&ground)))
}

/// Σ|λ_i| for Hermitian input (the trace norm of e.g. a density-matrix
/// difference).
pub fn trace_norm_hermitian(m: &Array2<Complex64>) -> Result<f64> {
    Ok(hermitian_eigvals(m)?.iter().map(|x| x.abs()).sum())
}

/// Von Neumann entropy −Tr ρ ln ρ of a Hermitian PSD matrix; eigenvalues
/// below 1e−14 are treated as exact zeros.
pub fn von_neumann_entropy(rho: &Array2<Complex64>) -> Result<f64> {
    let vals = hermitian_eigvals(rho)?;
    Ok(vals
        .iter()
        .filter(|&&p| p > 1e-14)
        .map(|&p| -p * p.ln())
        .sum())
}

/// Pivoted Gram–Schmidt: orthonormal basis of span{columns}, dropping
/// directions whose residual norm falls below `tol` (absolute, after the
/// inputs are normalized). Returns the basis as columns.
pub fn pivoted_gram_schmidt(vectors: &[Array1<Complex64>], tol: f64) -> Array2<Complex64> {
    if vectors.is_empty() {
        return Array2::zeros((0, 0));
    }
    let n = vectors[0].len();
    let mut residuals: Vec<Array1<Complex64>> = vectors
        .iter()
        .map(|v| {
            let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if nv > 0.0 {
                v.mapv(|z| z / nv)
            } else {
                v.clone()
            }
        })
        .collect();
    let mut basis: Vec<Array1<Complex64>> = Vec::new();
    loop {
        // Pivot on the largest remaining residual.
        let (best, best_norm) = residuals
            .iter()
            .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .enumerate()
            .fold((usize::MAX, tol), |acc, (k, nrm)| if nrm > acc.1 { (k, nrm) } else { acc });
        if best == usize::MAX {
            break;
        }
        let q = residuals[best].mapv(|z| z / best_norm);
        // Re-orthogonalize everything else against the new direction (twice
        // is enough for numerical orthogonality at these scales).
        for r in residuals.iter_mut() {
            for _ in 0..2 {
                let ip: Complex64 = q.iter().zip(r.iter()).map(|(a, b)| a.conj() * b).sum();
                if ip.norm() > 0.0 {
                    for (x, qq) in r.iter_mut().zip(q.iter()) {
                        *x -= ip * qq;
                    }
                }
            }
        }
        basis.push(q);
    }
    let mut out = Array2::zeros((n, basis.len()));
    for (k, q) in basis.iter().enumerate() {
        for r in 0..n {
            out[(r, k)] = q[r];
        }
    }
    out
}

/// ‖v‖₂.
pub fn norm2(v: &ArrayView1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ⟨a|b⟩.
pub fn inner(a: &ArrayView1<Complex64>, b: &ArrayView1<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

//! Eigensolvers: dense Hermitian diagonalization and a Lanczos iteration
//! with full reorthogonalization for the lowest part of large spectra.
//!
//! Lanczos starts are seeded deterministically, so repeated runs of the same
//! problem give bitwise-identical Ritz data.

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quantum::assemble::LinOp;
use crate::quantum::linalg;

/// Ascending eigenvalues with matching eigenvector columns.
pub struct EigenPairs {
    pub values: Array1<f64>,
    pub vectors: Array2<Complex64>,
}

/// Full dense Hermitian eigendecomposition.
pub fn dense_eigh(m: &Array2<Complex64>) -> Result<EigenPairs> {
    let (values, vectors) = linalg::hermitian_eigen(m)?;
    Ok(EigenPairs { values, vectors })
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Number of lowest eigenpairs to converge.
    pub n_eigs: usize,
    /// Hard cap on the Krylov dimension.
    pub max_iter: usize,
    /// Relative residual target for the requested Ritz pairs.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { n_eigs: 1, max_iter: 600, tol: 1e-10, seed: 0x6d65_7461 }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn seeded_unit_vector(dim: usize, seed: u64) -> Array1<Complex64> {
    let mut state = seed;
    let mut v = Array1::from_shape_fn(dim, |_| {
        let re = (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        let im = (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        Complex64::new(re, im)
    });
    let n = linalg::norm2(&v.view());
    v.mapv_inplace(|z| z / n);
    v
}

/// Lowest `n_eigs` eigenpairs of a Hermitian operator.
///
/// Full reorthogonalization (two passes) keeps the basis orthonormal at the
/// cost of O(m²·dim) work, which is fine at the Krylov dimensions used here.
/// Ritz pairs are accepted once their true residuals ‖Av − λv‖ fall below
/// `tol`·scale, with scale the largest Ritz magnitude seen.
pub fn lanczos_lowest(op: &dyn LinOp, opts: &LanczosOptions) -> Result<EigenPairs> {
    let dim = op.dim();
    if opts.n_eigs == 0 || opts.n_eigs > dim {
        return Err(Error::validation("requested eigenpair count out of range"));
    }
    let m_cap = opts.max_iter.min(dim);
    let mut basis: Vec<Array1<Complex64>> = vec![seeded_unit_vector(dim, opts.seed)];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut restart_seed = opts.seed;
    loop {
        let v = basis.last().unwrap();
        let mut w = op.apply(&v.view());
        let alpha = linalg::inner(&v.view(), &w.view()).re;
        alphas.push(alpha);
        // two-pass reorthogonalization against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = linalg::inner(&b.view(), &w.view());
                ndarray::Zip::from(&mut w).and(b).for_each(|wi, &bi| *wi -= c * bi);
            }
        }
        let beta = linalg::norm2(&w.view());
        let m = alphas.len();
        let done_space = m == dim;
        let breakdown = beta < 1e-13;
        // Ritz data of the current tridiagonal
        let (ritz_vals, ritz_vecs) = tridiag_eigen(&alphas, &betas)?;
        let scale = ritz_vals.iter().fold(1e-300f64, |a, &b| a.max(b.abs()));
        let mut converged = m >= opts.n_eigs;
        if converged {
            for k in 0..opts.n_eigs {
                let bound = beta * ritz_vecs[[m - 1, k]].abs();
                if bound > opts.tol * scale {
                    converged = false;
                    break;
                }
            }
        }
        if (converged && m >= opts.n_eigs) || done_space || (breakdown && m >= opts.n_eigs) {
            // assemble Ritz vectors and validate true residuals
            let n_out = opts.n_eigs.min(m);
            let mut values = Array1::zeros(n_out);
            let mut vectors = Array2::zeros((dim, n_out));
            for k in 0..n_out {
                values[k] = ritz_vals[k];
                let mut y = Array1::<Complex64>::zeros(dim);
                for (j, b) in basis.iter().enumerate() {
                    let s = ritz_vecs[[j, k]];
                    if s != 0.0 {
                        ndarray::Zip::from(&mut y).and(b).for_each(|yi, &bi| {
                            *yi += Complex64::new(s, 0.0) * bi
                        });
                    }
                }
                let n = linalg::norm2(&y.view());
                y.mapv_inplace(|z| z / n);
                let r = residual(op, &y.view(), ritz_vals[k]);
                if r > 1e-8 * scale.max(1.0) {
                    if done_space || breakdown {
                        return Err(Error::numerical(format!(
                            "Ritz pair {k} residual {r:.3e} after exhausting the space"
                        )));
                    }
                    converged = false;
                }
                vectors.column_mut(k).assign(&y);
            }
            if converged || done_space {
                return Ok(EigenPairs { values, vectors });
            }
        }
        if m >= m_cap {
            return Err(Error::numerical(format!(
                "Lanczos did not converge in {m_cap} iterations"
            )));
        }
        if breakdown {
            // invariant subspace found: continue in its orthogonal complement
            restart_seed = restart_seed.wrapping_add(0x9E37_79B9);
            let mut fresh = seeded_unit_vector(dim, restart_seed);
            for _ in 0..2 {
                for b in &basis {
                    let c = linalg::inner(&b.view(), &fresh.view());
                    ndarray::Zip::from(&mut fresh).and(b).for_each(|wi, &bi| *wi -= c * bi);
                }
            }
            let n = linalg::norm2(&fresh.view());
            if n < 1e-10 {
                return Err(Error::numerical("Lanczos restart found no new direction"));
            }
            fresh.mapv_inplace(|z| z / n);
            betas.push(0.0);
            basis.push(fresh);
        } else {
            w.mapv_inplace(|z| z / beta);
            betas.push(beta);
            basis.push(w);
        }
    }
}

fn residual(op: &dyn LinOp, y: &ArrayView1<Complex64>, theta: f64) -> f64 {
    let mut r = op.apply(y);
    ndarray::Zip::from(&mut r).and(y).for_each(|ri, &yi| *ri -= Complex64::new(theta, 0.0) * yi);
    linalg::norm2(&r.view())
}

/// Eigendecomposition of the symmetric tridiagonal (α on the diagonal,
/// β on the off-diagonals), ascending.
pub fn tridiag_eigen(alphas: &[f64], betas: &[f64]) -> Result<(Array1<f64>, Array2<f64>)> {
    let m = alphas.len();
    let mut t = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = alphas[i];
        if i + 1 < m {
            t[[i, i + 1]] = betas[i];
            t[[i + 1, i]] = betas[i];
        }
    }
    linalg::symmetric_eigen(&t)
}

//! Krylov time evolution: ψ(t) = e^{−iHt} ψ approximated in a Lanczos
//! subspace, with adaptive substeps controlled by a residual estimate.
//!
//! Each substep builds one Lanczos basis from the current state (it does not
//! depend on the step size), exponentiates the small tridiagonal, and picks
//! the largest step whose local error estimate β·|⟨e_m|e^{−iTτ}|e_1⟩|·τ stays
//! below tolerance. A happy breakdown means the state lives in an invariant
//! subspace and the remaining time is taken in one exact step.

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quantum::assemble::LinOp;
use crate::quantum::eigen::tridiag_eigen;
use crate::quantum::linalg;

#[derive(Debug, Clone)]
pub struct KrylovOptions {
    /// Local error tolerance per unit norm.
    pub tol: f64,
    /// Krylov dimension per substep.
    pub max_krylov: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { tol: 1e-9, max_krylov: 30 }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovReport {
    pub steps: usize,
    pub max_local_error: f64,
    /// |‖ψ(t)‖ − ‖ψ(0)‖|: the approximation is not exactly unitary.
    pub norm_drift: f64,
}

/// Evolves `psi` by e^{−iHt}. Negative `t` evolves backwards.
pub fn evolve_krylov(
    op: &dyn LinOp,
    psi: &ArrayView1<Complex64>,
    t: f64,
    opts: &KrylovOptions,
) -> Result<(Array1<Complex64>, KrylovReport)> {
    if psi.len() != op.dim() {
        return Err(Error::validation("state/operator dimension mismatch"));
    }
    let norm_in = linalg::norm2(psi);
    if norm_in == 0.0 {
        return Err(Error::validation("cannot evolve the zero vector"));
    }
    let mut state = psi.to_owned();
    let mut report = KrylovReport { steps: 0, max_local_error: 0.0, norm_drift: 0.0 };
    if t == 0.0 {
        return Ok((state, report));
    }
    let sign = t.signum();
    let mut remaining = t.abs();
    let mut dt_hint = remaining;
    while remaining > 0.0 {
        let beta0 = linalg::norm2(&state.view());
        let (basis, alphas, betas, beta_tail) = lanczos_basis(op, &state, opts.max_krylov)?;
        let m = alphas.len();
        let (vals, vecs) = tridiag_eigen(&alphas, &betas)?;
        // Qᵀ e₁, reused for every trial step
        let q0: Vec<f64> = (0..m).map(|k| vecs[[0, k]]).collect();
        let mut dt = dt_hint.min(remaining);
        let exact = beta_tail < 1e-13;
        if exact {
            dt = remaining;
        }
        let phi;
        loop {
            let trial = propagate_small(&vals, &vecs, &q0, sign * dt);
            let err = beta0 * beta_tail * dt * trial[m - 1].norm();
            if exact || err <= opts.tol * beta0 || dt < 1e-12 * t.abs() {
                report.max_local_error = report.max_local_error.max(err);
                phi = trial;
                break;
            }
            dt *= 0.5;
        }
        let mut next = Array1::<Complex64>::zeros(state.len());
        for (j, b) in basis.iter().enumerate() {
            let c = phi[j] * beta0;
            if c.norm_sqr() > 0.0 {
                ndarray::Zip::from(&mut next).and(b).for_each(|ni, &bi| *ni += c * bi);
            }
        }
        state = next;
        remaining -= dt;
        report.steps += 1;
        dt_hint = (dt * 2.0).min(remaining.max(dt));
        if report.steps > 1_000_000 {
            return Err(Error::numerical("Krylov evolution step count exploded"));
        }
    }
    report.norm_drift = (linalg::norm2(&state.view()) - norm_in).abs();
    Ok((state, report))
}

/// e^{−iTτ} e₁ in the Ritz eigenbasis: Q · diag(e^{−iλτ}) · Qᵀ e₁.
fn propagate_small(vals: &Array1<f64>, vecs: &ndarray::Array2<f64>, q0: &[f64], tau: f64) -> Vec<Complex64> {
    let m = vals.len();
    let mut phases = Vec::with_capacity(m);
    for k in 0..m {
        let ph = Complex64::from_polar(1.0, -vals[k] * tau);
        phases.push(ph * q0[k]);
    }
    (0..m)
        .map(|j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..m {
                acc += phases[k] * vecs[[j, k]];
            }
            acc
        })
        .collect()
}

/// One Lanczos basis from `v0`, fully reorthogonalized. Returns the basis,
/// tridiagonal coefficients, and the norm of the first discarded vector
/// (zero on happy breakdown).
#[allow(clippy::type_complexity)]
fn lanczos_basis(
    op: &dyn LinOp,
    v0: &Array1<Complex64>,
    m_max: usize,
) -> Result<(Vec<Array1<Complex64>>, Vec<f64>, Vec<f64>, f64)> {
    let m_cap = m_max.min(op.dim()).max(1);
    let n0 = linalg::norm2(&v0.view());
    let mut basis = vec![v0.mapv(|z| z / n0)];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    loop {
        let v = basis.last().unwrap();
        let mut w = op.apply(&v.view());
        let alpha = linalg::inner(&v.view(), &w.view()).re;
        alphas.push(alpha);
        for _ in 0..2 {
            for b in &basis {
                let c = linalg::inner(&b.view(), &w.view());
                ndarray::Zip::from(&mut w).and(b).for_each(|wi, &bi| *wi -= c * bi);
            }
        }
        let beta = linalg::norm2(&w.view());
        if alphas.len() == m_cap || beta < 1e-13 {
            return Ok((basis, alphas, betas, beta));
        }
        w.mapv_inplace(|z| z / beta);
        betas.push(beta);
        basis.push(w);
    }
}

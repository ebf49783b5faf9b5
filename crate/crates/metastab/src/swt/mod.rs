//! Iterated Schrieffer–Wolff rotations in the eigenbasis of H₀.
//!
//! Per order k the generator A_k solves [H₀, A_k] + (1−ℙ)V_k = 0, where ℙ
//! multiplies eigenbasis matrix elements by ŵ(E_m−E_n) and therefore erases
//! every element crossing the filter band while fixing the diagonal.  The
//! rotation e^{−A_k}(H₀+D_k+V_k)e^{A_k} = H₀ + D_{k+1} + V_{k+1} then moves
//! the block-preserving part ℙV_k into the effective Hamiltonian D and
//! leaves a one-order-smaller remainder V_{k+1}.  Working at full exact-
//! diagonalization scale keeps every step a dense matrix identity: the
//! generator and the superprojector read the *same* m(E) = 1−ŵ(E) table, so
//! the defining identity holds to rounding, not to quadrature accuracy.
//!
//! The objects here stay in the H₀ eigenbasis; `dressed_state` rotates back
//! through the stored eigenvectors, and `lifetime_probe` takes an already
//! prepared state so callers working in a symmetry sector can expand first.

pub mod filter;

pub use filter::{FilterCertificate, FilterTables, DEFAULT_N_MAX};

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::SiteSet;
use crate::quantum::krylov::{evolve_krylov, KrylovOptions};
use crate::quantum::{dense_eigh, linalg, termwise, EigenPairs, OperatorSum, ProductState, DENSE_CAP};

/// Which transfer function an eigenbasis mask applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterMask {
    /// Multiply by ŵ(E_m−E_n): the block-preserving superprojector.
    Project,
    /// Multiply by −g(E_m−E_n): the rotation generator (anti-Hermitian).
    Generator,
}

/// Apply a filter mask entrywise to an operator already expressed in the
/// eigenbasis that `energies` indexes.
pub fn apply_filter_mask(
    o_eig: &mut Array2<Complex64>,
    energies: &[f64],
    tables: &FilterTables,
    mask: FilterMask,
) {
    for (m, mut row) in o_eig.rows_mut().into_iter().enumerate() {
        for (n, z) in row.iter_mut().enumerate() {
            let omega = energies[m] - energies[n];
            let factor = match mask {
                FilterMask::Project => 1.0 - tables.m_of(omega),
                FilterMask::Generator => -tables.g_of(omega),
            };
            *z *= factor;
        }
    }
}

fn to_eigenbasis(o: &Array2<Complex64>, eig: &EigenPairs) -> Array2<Complex64> {
    let udag = eig.vectors.t().mapv(|z| z.conj());
    udag.dot(o).dot(&eig.vectors)
}

fn from_eigenbasis(o: &Array2<Complex64>, eig: &EigenPairs) -> Array2<Complex64> {
    let udag = eig.vectors.t().mapv(|z| z.conj());
    eig.vectors.dot(o).dot(&udag)
}

fn check_square_match(o: &Array2<Complex64>, eig: &EigenPairs) -> Result<()> {
    if o.nrows() != o.ncols() {
        return Err(Error::validation("operator must be square"));
    }
    if o.nrows() != eig.values.len() {
        return Err(Error::validation("operator and eigendata dimensions differ"));
    }
    Ok(())
}

/// Superprojector ℙO: eigenbasis elements scaled by ŵ(E_m−E_n).
pub fn superproject(
    o: &Array2<Complex64>,
    eig: &EigenPairs,
    tables: &FilterTables,
) -> Result<Array2<Complex64>> {
    check_square_match(o, eig)?;
    let mut o_eig = to_eigenbasis(o, eig);
    apply_filter_mask(&mut o_eig, eig.values.as_slice().unwrap(), tables, FilterMask::Project);
    Ok(from_eigenbasis(&o_eig, eig))
}

/// Rotation generator A with A_{mn} = −g(E_m−E_n) V_{mn} in the eigenbasis.
/// Anti-Hermitian by the oddness of g; the result is exactly
/// anti-Hermitized to absorb rounding.
pub fn swt_generator(
    v: &Array2<Complex64>,
    eig: &EigenPairs,
    tables: &FilterTables,
) -> Result<Array2<Complex64>> {
    check_square_match(v, eig)?;
    let mut v_eig = to_eigenbasis(v, eig);
    apply_filter_mask(&mut v_eig, eig.values.as_slice().unwrap(), tables, FilterMask::Generator);
    let a = antihermitize(&v_eig);
    Ok(from_eigenbasis(&a, eig))
}

fn hermitize(m: &Array2<Complex64>) -> Array2<Complex64> {
    let mt = m.t().mapv(|z| z.conj());
    (m + &mt).mapv(|z| z * Complex64::new(0.5, 0.0))
}

fn antihermitize(m: &Array2<Complex64>) -> Array2<Complex64> {
    let mt = m.t().mapv(|z| z.conj());
    (m - &mt).mapv(|z| z * Complex64::new(0.5, 0.0))
}

/// ‖(D − ⟨ψ|D|ψ⟩)|ψ⟩‖: how far D is from stabilizing ψ.
pub fn stabilizer_residual(d: &Array2<Complex64>, psi: &ArrayView1<Complex64>) -> f64 {
    let dpsi = d.dot(psi);
    let mean = linalg::inner(psi, &dpsi.view());
    let r = &dpsi - &psi.mapv(|z| z * mean);
    linalg::norm2(&r.view())
}

/// Rank-one repair D − ((D−⟨D⟩)|ψ⟩⟨ψ| + h.c.): Hermitian, agrees with D
/// outside the span touched by ψ, and stabilizes ψ exactly.  Returns the
/// repaired operator together with the residual that was removed.
pub fn stabilize_diagonal(
    d: &Array2<Complex64>,
    psi: &ArrayView1<Complex64>,
) -> (Array2<Complex64>, f64) {
    let dpsi = d.dot(psi);
    let mean = linalg::inner(psi, &dpsi.view());
    let r = &dpsi - &psi.mapv(|z| z * mean);
    let residual = linalg::norm2(&r.view());
    let n = d.nrows();
    let mut fixed = d.clone();
    for i in 0..n {
        for j in 0..n {
            fixed[(i, j)] -= r[i] * psi[j].conj() + psi[i] * r[j].conj();
        }
    }
    (fixed, residual)
}

/// Optional pre-densification filter on the perturbation's local terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeCutoff {
    /// Keep every term.
    None,
    /// Keep only terms supported on at most this many sites; the spectral
    /// norm of everything dropped is recorded on the run state.
    Volume(usize),
}

/// Norm trace entry for one completed rotation order.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SwtOrderRecord {
    /// Order index k (1 = first rotation).
    pub order: usize,
    /// ‖A_k‖.
    pub norm_a: f64,
    /// ‖V_{k+1}‖ after the rotation.
    pub norm_v: f64,
    /// ‖D_{k+1}‖.
    pub norm_d: f64,
    /// ‖(D_{k+1} − ⟨D_{k+1}⟩)ψ₀‖.
    pub stabilizer_residual: f64,
    /// max |eig(H₀+D_{k+1}+V_{k+1}) − eig(H₀+V_1)| — unitary-equivalence drift.
    pub spectrum_drift: f64,
}

/// State of an iterated rotation, kept in the H₀ eigenbasis.
pub struct SwtState {
    /// H₀ eigendata; columns of `eig.vectors` map eigenbasis back to input.
    pub eig: EigenPairs,
    /// Reference state in the eigenbasis.
    pub psi0_eig: Array1<Complex64>,
    /// Current effective addition D_k (eigenbasis).
    pub d_eig: Array2<Complex64>,
    /// Current remainder V_k (eigenbasis).
    pub v_eig: Array2<Complex64>,
    /// Generators A_1..A_k (eigenbasis).
    pub generators: Vec<Array2<Complex64>>,
    /// Cached unitaries e^{−A_k} (eigenbasis).
    pub exp_minus: Vec<Array2<Complex64>>,
    /// Per-order norm trace.
    pub orders: Vec<SwtOrderRecord>,
    /// ‖V_1‖ before any rotation.
    pub initial_norm_v: f64,
    /// ⟨ψ₀|H₀|ψ₀⟩.
    pub e0: f64,
    /// Running ⟨ψ₀|H₀+D_k|ψ₀⟩.
    pub e_star: f64,
    /// Spectral norm dropped by the size cutoff before densification.
    pub discarded_norm: f64,
    /// True when the run stopped because ‖V_{k+1}‖ exceeded ‖V_k‖.
    pub diverged: bool,
}

impl SwtState {
    /// Dressed reference state e^{A_1}···e^{A_orders}|ψ₀⟩ expressed in the
    /// *input* basis of the run (the generators act highest order first).
    pub fn dressed_state(&self, orders: usize) -> Result<Array1<Complex64>> {
        if orders > self.generators.len() {
            return Err(Error::validation(format!(
                "dressing through {} orders but only {} generators exist",
                orders,
                self.generators.len()
            )));
        }
        let mut psi = self.psi0_eig.clone();
        for k in (0..orders).rev() {
            // e^{A_k} = (e^{−A_k})†
            let edag = self.exp_minus[k].t().mapv(|z| z.conj());
            psi = edag.dot(&psi);
        }
        Ok(self.eig.vectors.dot(&psi))
    }

    /// The rotated Hamiltonian H₀ + D_k + V_k in the input basis.
    pub fn rotated_hamiltonian(&self) -> Array2<Complex64> {
        let n = self.eig.values.len();
        let mut m = &self.d_eig + &self.v_eig;
        for i in 0..n {
            m[(i, i)] += Complex64::new(self.eig.values[i], 0.0);
        }
        from_eigenbasis(&m, &self.eig)
    }
}

/// Iterated rotation on dense matrices (any orthonormal-basis convention,
/// e.g. a momentum sector).  `psi0` must be an eigenstate of `h0`.
pub fn swt_run_dense(
    h0: &Array2<Complex64>,
    v: &Array2<Complex64>,
    psi0: &ArrayView1<Complex64>,
    k_max: usize,
    tables: &FilterTables,
) -> Result<SwtState> {
    let dim = h0.nrows();
    if h0.ncols() != dim || v.nrows() != dim || v.ncols() != dim {
        return Err(Error::validation("H0 and V must be square matrices of equal size"));
    }
    if dim > DENSE_CAP {
        return Err(Error::validation(format!(
            "dense rotation dimension {} exceeds the cap {}",
            dim, DENSE_CAP
        )));
    }
    if psi0.len() != dim {
        return Err(Error::validation("reference state dimension mismatch"));
    }
    let scale_h = 1.0 + linalg::max_abs(h0);
    if linalg::hermiticity_defect(h0) > 1e-9 * scale_h
        || linalg::hermiticity_defect(v) > 1e-9 * (1.0 + linalg::max_abs(v))
    {
        return Err(Error::validation("H0 and V must be Hermitian"));
    }
    let norm_psi = linalg::norm2(psi0);
    if (norm_psi - 1.0).abs() > 1e-8 {
        return Err(Error::validation("reference state must be normalized"));
    }

    let eig = dense_eigh(h0)?;
    let udag = eig.vectors.t().mapv(|z| z.conj());
    let psi0_eig = udag.dot(psi0);
    let e0: f64 = psi0_eig
        .iter()
        .zip(eig.values.iter())
        .map(|(a, &e)| a.norm_sqr() * e)
        .sum();
    let eigenstate_defect: f64 = psi0_eig
        .iter()
        .zip(eig.values.iter())
        .map(|(a, &e)| (a * (e - e0)).norm_sqr())
        .sum::<f64>()
        .sqrt();
    if eigenstate_defect > 1e-10 * scale_h {
        return Err(Error::validation(format!(
            "reference state is not an eigenstate of H0 (residual {:.3e}); \
             split the Hamiltonian with the prethermal decomposition first",
            eigenstate_defect
        )));
    }

    let v_eig = to_eigenbasis(v, &eig);
    let initial_norm_v = linalg::operator_norm(&v_eig);
    let energies: Vec<f64> = eig.values.to_vec();

    // Unitary-equivalence reference: the spectrum of H₀ + V₁.
    let mut h_ref = v_eig.clone();
    for i in 0..dim {
        h_ref[(i, i)] += Complex64::new(energies[i], 0.0);
    }
    let spectrum_ref = linalg::hermitian_eigvals(&h_ref)?;

    let mut state = SwtState {
        eig,
        psi0_eig,
        d_eig: Array2::zeros((dim, dim)),
        v_eig,
        generators: Vec::new(),
        exp_minus: Vec::new(),
        orders: Vec::new(),
        initial_norm_v,
        e0,
        e_star: e0,
        discarded_norm: 0.0,
        diverged: false,
    };

    let mut norm_v_prev = initial_norm_v;
    for k in 1..=k_max {
        if norm_v_prev == 0.0 {
            break; // nothing left to rotate away
        }
        let mut a = state.v_eig.clone();
        apply_filter_mask(&mut a, &energies, tables, FilterMask::Generator);
        let a = antihermitize(&a);
        let norm_a = linalg::operator_norm(&a);
        let exp_minus = linalg::expm_antihermitian(&a.mapv(|z| -z))?;

        // M = H0 + D_k + V_k in the eigenbasis, rotated by e^{−A_k}.
        let mut m = &state.d_eig + &state.v_eig;
        for i in 0..dim {
            m[(i, i)] += Complex64::new(energies[i], 0.0);
        }
        let rotated = exp_minus.dot(&m).dot(&exp_minus.t().mapv(|z| z.conj()));

        let mut pv = state.v_eig.clone();
        apply_filter_mask(&mut pv, &energies, tables, FilterMask::Project);
        let d_next = hermitize(&(&state.d_eig + &pv));

        let mut v_next = rotated;
        for i in 0..dim {
            v_next[(i, i)] -= Complex64::new(energies[i], 0.0);
        }
        let v_next = hermitize(&(&v_next - &d_next));

        let norm_v = linalg::operator_norm(&v_next);
        let norm_d = linalg::operator_norm(&d_next);
        let resid = stabilizer_residual(&d_next, &state.psi0_eig.view());

        let mut h_now = &d_next + &v_next;
        for i in 0..dim {
            h_now[(i, i)] += Complex64::new(energies[i], 0.0);
        }
        let spec_now = linalg::hermitian_eigvals(&h_now)?;
        let spectrum_drift = spectrum_ref
            .iter()
            .zip(spec_now.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);

        let diverged = norm_v > norm_v_prev;
        state.generators.push(a);
        state.exp_minus.push(exp_minus);
        state.d_eig = d_next;
        state.v_eig = v_next;
        let mean_d = linalg::inner(&state.psi0_eig.view(), &state.d_eig.dot(&state.psi0_eig).view());
        state.e_star = e0 + mean_d.re;
        state.orders.push(SwtOrderRecord {
            order: k,
            norm_a,
            norm_v,
            norm_d,
            stabilizer_residual: resid,
            spectrum_drift,
        });
        if diverged {
            state.diverged = true;
            break;
        }
        norm_v_prev = norm_v;
    }
    Ok(state)
}

/// Iterated rotation from operator sums: densifies H₀ and V (after the
/// optional volume cutoff on V's terms) and runs in the full basis.
pub fn swt_run(
    h0: &OperatorSum,
    v: &OperatorSum,
    psi0: &ProductState,
    k_max: usize,
    cutoff: SizeCutoff,
    tables: &FilterTables,
) -> Result<SwtState> {
    if h0.dims() != v.dims() {
        return Err(Error::validation("H0 and V live on different site spaces"));
    }
    if h0.dims() != psi0.dims() {
        return Err(Error::validation("reference state lives on a different site space"));
    }
    let (v_dense, discarded) = match cutoff {
        SizeCutoff::None => (v.to_dense(DENSE_CAP)?, 0.0),
        SizeCutoff::Volume(cap) => {
            let mut kept = Vec::new();
            let mut dropped_norm = 0.0;
            for t in v.terms() {
                if t.support.len() <= cap {
                    kept.push(t.clone());
                } else {
                    dropped_norm += t.spectral_norm();
                }
            }
            let kept_sum = OperatorSum::general(h0.dims().to_vec(), kept)?;
            (kept_sum.to_dense(DENSE_CAP)?, dropped_norm)
        }
    };
    let h0_dense = h0.to_dense(DENSE_CAP)?;
    let psi = psi0.full_vector(DENSE_CAP)?;
    let mut state = swt_run_dense(&h0_dense, &v_dense, &psi.view(), k_max, tables)?;
    state.discarded_norm = discarded;
    Ok(state)
}

/// Trace-distance drift ‖ρ_S(t) − ρ_S(0)‖₁ of the reduced state on `region`
/// under evolution by `h`, reported at each requested time.  `psi_init` is
/// the (possibly dressed) full-basis initial state.
pub fn lifetime_probe(
    h: &OperatorSum,
    psi_init: &ArrayView1<Complex64>,
    region: &SiteSet,
    times: &[f64],
    opts: &KrylovOptions,
) -> Result<Vec<f64>> {
    if region.is_empty() || region.len() > 4 {
        return Err(Error::validation("probe region must have 1..=4 sites"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::validation("probe times must be ascending and nonnegative"));
    }
    let op = termwise(h)?;
    if psi_init.len() != h.full_dim() {
        return Err(Error::validation("initial state dimension mismatch"));
    }
    let norm = linalg::norm2(psi_init);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::validation("initial state must be normalized"));
    }
    let rho0 = crate::dynamics::reduced_density_matrix(psi_init, h.dims(), region)?;
    let mut out = Vec::with_capacity(times.len());
    let mut psi = psi_init.to_owned();
    let mut t_now = 0.0;
    for &t in times {
        if t > t_now {
            let (next, _) = evolve_krylov(&op, &psi.view(), t - t_now, opts)?;
            psi = next;
            t_now = t;
        }
        let rho = crate::dynamics::reduced_density_matrix(&psi.view(), h.dims(), region)?;
        let diff = &rho - &rho0;
        out.push(linalg::trace_norm_hermitian(&diff)?);
    }
    Ok(out)
}

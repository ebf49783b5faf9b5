//! Iterated spectral-filter rotations: the defining generator identity,
//! an independent time-domain oracle for the generator, the analytic
//! two-level benchmark, and invariants of full runs.

use approx::assert_abs_diff_eq;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use metastab::lattice::{Lattice, SiteSet};
use metastab::models;
use metastab::quantum::krylov::KrylovOptions;
use metastab::quantum::{dense_eigh, linalg};
use metastab::swt::{
    stabilize_diagonal, stabilizer_residual, superproject, swt_generator, swt_run,
    swt_run_dense, FilterTables, SizeCutoff,
};

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn random_hermitian(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
    let mut m = Array2::<Complex64>::zeros((dim, dim));
    for i in 0..dim {
        m[(i, i)] = re(scale * (rng.random::<f64>() - 0.5));
        for j in (i + 1)..dim {
            let z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * scale;
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

fn commutator(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    &a.dot(b) - &b.dot(a)
}

/// [H₀, A] + (1−ℙ)V must vanish identically: the generator is built to
/// cancel exactly the part of V that the superprojector discards.
#[test]
fn generator_identity_on_random_six_qubit_pairs() {
    let tables = FilterTables::with_default_order(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5157_0001);
    let dim = 64;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let h0 = random_hermitian(dim, 1.0, &mut rng);
        let v = random_hermitian(dim, 0.3, &mut rng);
        let eig = dense_eigh(&h0).unwrap();
        let a = swt_generator(&v, &eig, &tables).unwrap();
        let pv = superproject(&v, &eig, &tables).unwrap();
        let residual = &(&commutator(&h0, &a) + &v) - &pv;
        let defect = linalg::max_abs(&residual);
        worst = worst.max(defect);
        assert!(defect <= 1e-10, "identity defect {defect:e}");
    }
    println!("worst identity defect over 20 pairs: {worst:e}");
}

/// Independent oracle for the generator: A = i∫₀^∞ W(t)(V(t) − V(−t)) dt
/// evaluated by direct time quadrature of the survival function W against
/// the Heisenberg phases, never touching the frequency-domain tables.
#[test]
fn generator_matches_time_domain_quadrature() {
    let tables = FilterTables::with_default_order(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5157_0002);
    let dim = 16;
    let h0 = random_hermitian(dim, 1.0, &mut rng);
    let v = random_hermitian(dim, 0.5, &mut rng);
    let eig = dense_eigh(&h0).unwrap();
    let a = swt_generator(&v, &eig, &tables).unwrap();

    // eigenbasis entries of A and V
    let udag = eig.vectors.t().mapv(|z| z.conj());
    let a_eig = udag.dot(&a).dot(&eig.vectors);
    let v_eig = udag.dot(&v).dot(&eig.vectors);

    // survival function W(t) = ∫_t^∞ w on a fine grid; w(700) ~ 5e−22 so
    // truncating at t = 800 is far below the 1e−4 tolerance
    let h_step = 0.002;
    let t_end = 800.0;
    let w_table = tables.big_w_table(h_step, t_end).unwrap();

    let mut worst = 0.0f64;
    for m in 0..dim {
        for n in 0..dim {
            if m == n {
                continue; // ω = 0: both sides vanish (g odd)
            }
            let omega = eig.values[m] - eig.values[n];
            // i(e^{iωt} − e^{−iωt}) = −2 sin(ωt) ⇒ A_mn = −2∫W sin(ωt)dt·V_mn
            let mut acc = 0.0;
            for (k, &wt) in w_table.iter().enumerate() {
                let t = k as f64 * h_step;
                let weight = if k == 0 || k == w_table.len() - 1 { 0.5 } else { 1.0 };
                acc += weight * wt * (omega * t).sin();
            }
            let oracle = v_eig[(m, n)] * re(-2.0 * acc * h_step);
            let defect = (a_eig[(m, n)] - oracle).norm();
            worst = worst.max(defect);
        }
    }
    println!("time-domain oracle max entry defect: {worst:e}");
    assert!(worst <= 1e-4, "time-domain oracle defect {worst:e}");
}

/// Two-level benchmark: H₀ = diag(0, Δc), V = ε σx.  The first-order
/// generator is exactly (ε/Δc)(|0⟩⟨1| − |1⟩⟨0|), one rotation suppresses
/// the remainder to O(ε²/Δc), and the dressed energy converges to the
/// exact lower eigenvalue.
#[test]
fn two_level_rotation_is_analytic() {
    let delta_c = 1.0;
    let eps = 0.05;
    let tables = FilterTables::with_default_order(1.0).unwrap();
    let h0 = ndarray::array![[re(0.0), re(0.0)], [re(0.0), re(delta_c)]];
    let v = ndarray::array![[re(0.0), re(eps)], [re(eps), re(0.0)]];
    let psi0 = Array1::from_vec(vec![re(1.0), re(0.0)]);

    let eig = dense_eigh(&h0).unwrap();
    let a = swt_generator(&v, &eig, &tables).unwrap();
    // m(Δc) = 1 beyond the support edge, so g(Δc) = 1/Δc exactly;
    // A_{10} = −g(E_1−E_0)V_{10} = −ε/Δc and antihermiticity fixes A_{01}
    assert_abs_diff_eq!(a[(1, 0)].re, -eps / delta_c, epsilon = 1e-12);
    assert_abs_diff_eq!(a[(0, 1)].re, eps / delta_c, epsilon = 1e-12);
    assert!(a[(0, 0)].norm() < 1e-14 && a[(1, 1)].norm() < 1e-14);

    let state = swt_run_dense(&h0, &v, &psi0.view(), 4, &tables).unwrap();
    assert!(!state.diverged);
    let first = &state.orders[0];
    assert!(
        first.norm_v <= 2.0 * eps * eps / delta_c,
        "after one rotation ‖V‖ = {} should be O(ε²/Δc)",
        first.norm_v
    );
    let exact = 0.5 * delta_c - (0.25 * delta_c * delta_c + eps * eps).sqrt();
    let last = state.orders.last().unwrap();
    assert!(
        (state.e_star - exact).abs() <= 1e-6,
        "dressed energy {} vs exact {exact}",
        state.e_star
    );
    // remainder keeps shrinking and the rotated spectrum never moves
    assert!(last.norm_v < first.norm_v);
    for rec in &state.orders {
        assert!(rec.spectrum_drift <= 1e-10, "spectrum drift {:e}", rec.spectrum_drift);
    }
}

/// Unitary bookkeeping of a run: the dressed state is normalized, its
/// energy in the original Hamiltonian equals the rotated-frame expectation,
/// and the rotated Hamiltonian is isospectral to H₀+V.
#[test]
fn dressed_state_bookkeeping_is_unitary() {
    let tables = FilterTables::with_default_order(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5157_0003);
    let dim = 24;
    // diagonal H0 with a clean gap so |0⟩ is an eigenstate
    let mut h0 = Array2::<Complex64>::zeros((dim, dim));
    for i in 0..dim {
        h0[(i, i)] = re(i as f64 + 0.3 * rng.random::<f64>());
    }
    let v = random_hermitian(dim, 0.05, &mut rng);
    let mut psi0 = Array1::<Complex64>::zeros(dim);
    psi0[0] = re(1.0);

    let state = swt_run_dense(&h0, &v, &psi0.view(), 3, &tables).unwrap();
    let h_full = &h0 + &v;
    for orders in 0..=state.generators.len() {
        let dressed = state.dressed_state(orders).unwrap();
        assert_abs_diff_eq!(linalg::norm2(&dressed.view()), 1.0, epsilon = 1e-10);
        if orders == state.generators.len() {
            let hd = h_full.dot(&dressed);
            let e_dressed = linalg::inner(&dressed.view(), &hd.view()).re;
            // ⟨dressed|H|dressed⟩ = ⟨ψ0|H0+D+V|ψ0⟩ = e_star + ⟨ψ0|V_k|ψ0⟩
            let v_mean = linalg::inner(
                &state.psi0_eig.view(),
                &state.v_eig.dot(&state.psi0_eig).view(),
            )
            .re;
            assert_abs_diff_eq!(e_dressed, state.e_star + v_mean, epsilon = 1e-9);
        }
    }
    let rotated = state.rotated_hamiltonian();
    let spec_rot = linalg::hermitian_eigvals(&rotated).unwrap();
    let spec_ref = linalg::hermitian_eigvals(&h_full).unwrap();
    for (a, b) in spec_rot.iter().zip(spec_ref.iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }
}

/// The superprojector leaves anything commuting with H₀ untouched and
/// preserves Hermiticity; the repaired diagonal stabilizes the state.
#[test]
fn superprojector_and_stabilizer_properties() {
    let tables = FilterTables::with_default_order(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5157_0004);
    let dim = 20;
    let h0 = random_hermitian(dim, 1.0, &mut rng);
    let eig = dense_eigh(&h0).unwrap();

    // O = H0² commutes with H0 ⇒ ℙO = O
    let o = h0.dot(&h0);
    let po = superproject(&o, &eig, &tables).unwrap();
    assert!(linalg::max_abs(&(&po - &o)) <= 1e-9);

    let v = random_hermitian(dim, 0.4, &mut rng);
    let pv = superproject(&v, &eig, &tables).unwrap();
    assert!(linalg::hermiticity_defect(&pv) <= 1e-12);
    // ℙ is a contraction entrywise in the eigenbasis: ‖ℙV‖_max ≤ ‖V‖_max there
    let udag = eig.vectors.t().mapv(|z| z.conj());
    let v_eig = udag.dot(&v).dot(&eig.vectors);
    let pv_eig = udag.dot(&pv).dot(&eig.vectors);
    for (a, b) in pv_eig.iter().zip(v_eig.iter()) {
        assert!(a.norm() <= b.norm() + 1e-12);
    }

    let psi = {
        let mut p = Array1::<Complex64>::zeros(dim);
        p[3] = re(1.0);
        p
    };
    let d = random_hermitian(dim, 0.7, &mut rng);
    let before = stabilizer_residual(&d, &psi.view());
    assert!(before > 1e-3); // random D does not stabilize |3⟩
    let (fixed, removed) = stabilize_diagonal(&d, &psi.view());
    assert_abs_diff_eq!(removed, before, epsilon = 1e-12);
    assert!(linalg::hermiticity_defect(&fixed) <= 1e-12);
    assert!(stabilizer_residual(&fixed, &psi.view()) <= 1e-12);
}

/// Run-level invariants on a small mixed-field chain: the remainder norm
/// decreases order by order, the volume cutoff records dropped weight,
/// and the reduced-state drift starts at exactly zero.
#[test]
fn operator_sum_run_and_lifetime_probe() {
    let lattice = Lattice::chain(6, false).unwrap();
    let bundle = models::ising_mixed(lattice, 1.0, 0.08, 0.02).unwrap();
    let psi0 = &bundle.state("one").unwrap().state;
    // smallest excitation gap above the false vacuum |1…1⟩: an edge flip
    // costs 2Δc − 2ε on an open chain
    let gap = 2.0 * 1.0 - 2.0 * 0.02;
    let tables = FilterTables::with_default_order(gap).unwrap();

    let state = swt_run(&bundle.h0, &bundle.v, psi0, 3, SizeCutoff::None, &tables).unwrap();
    assert!(!state.diverged, "perturbative run must not diverge at ε = 0.08");
    assert!(state.orders.len() >= 2);
    assert!(state.orders[0].norm_v < state.initial_norm_v);
    assert!(state.orders[1].norm_v < state.orders[0].norm_v);
    assert_eq!(state.discarded_norm, 0.0);

    // dressing improves the reference state's slow dynamics bookkeeping:
    // probe the central site's reduced state
    let region = SiteSet::new(vec![2]);
    let times = [0.0, 0.4, 0.8];
    let opts = KrylovOptions::default();
    let drift_bare = metastab::swt::lifetime_probe(
        &bundle.h,
        &psi0.full_vector(4096).unwrap().view(),
        &region,
        &times,
        &opts,
    )
    .unwrap();
    assert_abs_diff_eq!(drift_bare[0], 0.0, epsilon = 1e-12);
    for d in &drift_bare {
        assert!(*d >= 0.0 && *d <= 2.0 + 1e-9);
    }

    let dressed = state.dressed_state(state.generators.len()).unwrap();
    let drift_dressed =
        metastab::swt::lifetime_probe(&bundle.h, &dressed.view(), &region, &times, &opts).unwrap();
    assert_abs_diff_eq!(drift_dressed[0], 0.0, epsilon = 1e-12);
}

/// A run whose reference state is not an H₀ eigenstate is rejected with a
/// pointer at the prethermal split.
#[test]
fn rejects_non_eigenstate_reference() {
    let tables = FilterTables::with_default_order(1.0).unwrap();
    let h0 = ndarray::array![[re(0.0), re(0.3)], [re(0.3), re(1.0)]];
    let v = ndarray::array![[re(0.0), re(0.1)], [re(0.1), re(0.0)]];
    let psi0 = Array1::from_vec(vec![re(1.0), re(0.0)]);
    let msg = match swt_run_dense(&h0, &v, &psi0.view(), 2, &tables) {
        Ok(_) => panic!("non-eigenstate reference must be rejected"),
        Err(e) => e.to_string(),
    };
    assert!(msg.contains("eigenstate"), "unexpected message: {msg}");
}

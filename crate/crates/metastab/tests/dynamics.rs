//! Reduced states, entanglement, quenches, and overlap spectroscopy.

use approx::assert_abs_diff_eq;
use ndarray::Array1;
use num_complex::Complex64;

use metastab::dynamics::{
    digit_count_on, digit_counter, entanglement_entropy, entanglement_profile, overlap_spectrum,
    poisson_cartoon, quench, reduced_density_matrix, SectorSpec,
};
use metastab::lattice::{Lattice, SiteSet};
use metastab::models;
use metastab::quantum::krylov::KrylovOptions;
use metastab::quantum::{termwise, LinOp, MomentumK, ProductState};

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

#[test]
fn reduced_state_of_product_is_pure() {
    let dims = vec![2, 2, 3, 2];
    // heterogeneous local dimensions: |1⟩ ⊗ |0⟩ ⊗ |2⟩ ⊗ |1⟩
    let factors = vec![
        Array1::from_vec(vec![re(0.0), re(1.0)]),
        Array1::from_vec(vec![re(1.0), re(0.0)]),
        Array1::from_vec(vec![re(0.0), re(0.0), re(1.0)]),
        Array1::from_vec(vec![re(0.0), re(1.0)]),
    ];
    let state = ProductState::new(factors).unwrap();
    let psi = state.full_vector(4096).unwrap();
    let rho = reduced_density_matrix(&psi.view(), &dims, &SiteSet::new(vec![2])).unwrap();
    assert_eq!(rho.nrows(), 3);
    // pure |2⟩⟨2| on the qutrit
    for a in 0..3 {
        for b in 0..3 {
            let expect = if a == 2 && b == 2 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(rho[(a, b)].re, expect, epsilon = 1e-12);
            assert_abs_diff_eq!(rho[(a, b)].im, 0.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn reduced_state_of_bell_pair_is_maximally_mixed() {
    let dims = vec![2, 2];
    let mut psi = Array1::<Complex64>::zeros(4);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    psi[0] = re(s); // |00⟩
    psi[3] = re(s); // |11⟩
    let rho = reduced_density_matrix(&psi.view(), &dims, &SiteSet::new(vec![0])).unwrap();
    assert_abs_diff_eq!(rho[(0, 0)].re, 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(rho[(1, 1)].re, 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(rho[(0, 1)].norm(), 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(entanglement_entropy(&psi.view(), &dims, 1).unwrap(), (2.0f64).ln(), epsilon = 1e-12);
}

#[test]
fn entropy_of_product_state_vanishes_on_every_cut() {
    let n = 6;
    let state = ProductState::computational(2, &vec![0, 1, 0, 0, 1, 1]).unwrap();
    let psi = state.full_vector(4096).unwrap();
    let dims = vec![2; n];
    for (c, s) in entanglement_profile(&psi.view(), &dims).unwrap().into_iter().enumerate() {
        assert!(s.abs() <= 1e-10, "cut {}: S = {s:e}", c + 1);
    }
}

#[test]
fn entropy_agrees_with_partial_trace_on_either_side() {
    // random-ish normalized state on 2×2×2×2
    let dims = vec![2; 4];
    let mut psi = Array1::<Complex64>::zeros(16);
    for (i, z) in psi.iter_mut().enumerate() {
        *z = Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.61).cos());
    }
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi.mapv_inplace(|z| z / norm);
    for cut in 1..4 {
        let left: Vec<u32> = (0..cut as u32).collect();
        let right: Vec<u32> = (cut as u32..4).collect();
        let rho_l = reduced_density_matrix(&psi.view(), &dims, &SiteSet::new(left)).unwrap();
        let rho_r = reduced_density_matrix(&psi.view(), &dims, &SiteSet::new(right)).unwrap();
        let s_l = metastab::quantum::linalg::von_neumann_entropy(&rho_l).unwrap();
        let s_r = metastab::quantum::linalg::von_neumann_entropy(&rho_r).unwrap();
        let s_cut = entanglement_entropy(&psi.view(), &dims, cut).unwrap();
        assert_abs_diff_eq!(s_l, s_r, epsilon = 1e-10);
        assert_abs_diff_eq!(s_cut, s_l, epsilon = 1e-10);
    }
}

#[test]
fn quench_anchors_at_direct_expectations_and_conserves() {
    let lattice = Lattice::chain(6, true).unwrap();
    let bundle = models::ising_mixed(lattice, 1.0, 0.15, 0.05).unwrap();
    let state = &bundle.state("one").unwrap().state;
    let psi0 = state.full_vector(4096).unwrap();
    let h_op = termwise(&bundle.h).unwrap();
    let mz = bundle.observable("m_z").unwrap();
    let mz_op = termwise(mz).unwrap();

    let times = [0.0, 0.5, 1.0, 2.0, 4.0];
    let series = quench(
        &h_op,
        &[("m_z", &mz_op as &dyn LinOp)],
        &psi0.view(),
        &times,
        &KrylovOptions::default(),
        None,
    )
    .unwrap();

    let direct = mz.expectation_product(state).unwrap();
    assert_abs_diff_eq!(series.columns[0].values[0], direct, epsilon = 1e-10);
    assert!(series.norm_drift_max <= 1e-8, "norm drift {:e}", series.norm_drift_max);
    assert!(series.energy_drift_max <= 1e-8, "energy drift {:e}", series.energy_drift_max);
    // the transverse field must actually move the magnetization
    let spread = series.columns[0]
        .values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        - series.columns[0].values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread > 1e-4, "quench never moved m_z (spread {spread:e})");
}

#[test]
fn quench_of_eigenstate_is_stationary() {
    // diagonal Hamiltonian: every computational state is an eigenstate
    let lattice = Lattice::chain(5, false).unwrap();
    let bundle = models::ising_longitudinal(lattice, 1.0, 0.3).unwrap();
    let state = &bundle.state("zero").unwrap().state;
    let psi0 = state.full_vector(4096).unwrap();
    let h_op = termwise(&bundle.h).unwrap();
    let mz_op = termwise(bundle.observable("m_z").unwrap()).unwrap();
    let series = quench(
        &h_op,
        &[("m_z", &mz_op as &dyn LinOp)],
        &psi0.view(),
        &[0.0, 3.0, 9.0],
        &KrylovOptions::default(),
        None,
    )
    .unwrap();
    let v0 = series.columns[0].values[0];
    for v in &series.columns[0].values {
        assert_abs_diff_eq!(*v, v0, epsilon = 1e-9);
    }
}

#[test]
fn quench_rejects_bad_time_grids() {
    let lattice = Lattice::chain(4, false).unwrap();
    let bundle = models::ising_mixed(lattice, 1.0, 0.1, 0.0).unwrap();
    let psi0 = bundle.state("zero").unwrap().state.full_vector(4096).unwrap();
    let h_op = termwise(&bundle.h).unwrap();
    for times in [vec![], vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.5]] {
        assert!(quench(
            &h_op,
            &[],
            &psi0.view(),
            &times,
            &KrylovOptions::default(),
            None,
        )
        .is_err());
    }
}

#[test]
fn overlap_weights_account_for_the_whole_state() {
    // the staggered reference state is translation-periodic with period 2,
    // so its weight lives entirely in the k ∈ {0, π} sectors
    let bundle = models::pxp_ring(8).unwrap();
    let state = &bundle.state("zero-minus").unwrap().state;
    let sectors = [
        SectorSpec { momentum: Some(MomentumK::Zero), inversion: None },
        SectorSpec { momentum: Some(MomentumK::Pi), inversion: None },
    ];
    let spec = overlap_spectrum(&bundle.h, state, bundle.constraint, &sectors, 1000).unwrap();
    assert!(
        spec.unresolved_weight <= 1e-10,
        "weight accounting missed {:e}",
        spec.unresolved_weight
    );
    for sw in &spec.sectors {
        assert_abs_diff_eq!(sw.state_weight, sw.captured_weight, epsilon = 1e-10);
    }
    // lines arrive energy-sorted with the ground state at zero
    assert!(spec.lines.windows(2).all(|w| w[0].energy <= w[1].energy));
    assert_abs_diff_eq!(spec.lines[0].energy_above_gs, 0.0, epsilon = 1e-12);
    let total: f64 = spec.lines.iter().map(|l| l.weight).sum();
    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
}

#[test]
fn poisson_weights_normalize_and_carry_the_energy() {
    let gap = 0.9682;
    let e_gs = -10.0;
    let e_target = -4.0;
    let w = poisson_cartoon(gap, e_target, e_gs, 200).unwrap();
    assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    let alpha = (e_target - e_gs) / gap;
    let mean: f64 = w.iter().enumerate().map(|(n, &p)| n as f64 * p).sum();
    assert_abs_diff_eq!(mean, alpha, epsilon = 1e-8);

    // degenerate case: zero excitation energy puts all weight at n = 0
    let w0 = poisson_cartoon(gap, e_gs, e_gs, 5).unwrap();
    assert_abs_diff_eq!(w0[0], 1.0, epsilon = 1e-14);
    assert!(w0[1..].iter().all(|&p| p == 0.0));
    assert!(poisson_cartoon(-1.0, 0.0, -1.0, 5).is_err());
    assert!(poisson_cartoon(1.0, -2.0, -1.0, 5).is_err());
}

#[test]
fn digit_counters_count() {
    let dims = vec![3; 4];
    let state = ProductState::computational(3, &[0, 2, 0, 1]).unwrap();
    let psi = state.full_vector(4096).unwrap();
    let zeros = digit_counter(&dims, 0).unwrap();
    assert_abs_diff_eq!(zeros.expectation_product(&state).unwrap(), 2.0, epsilon = 1e-12);
    let all = SiteSet::interval(0, 3);
    assert_abs_diff_eq!(digit_count_on(&psi.view(), &dims, 0, &all).unwrap(), 2.0, epsilon = 1e-12);
    let evens = SiteSet::new(vec![0, 2]);
    assert_abs_diff_eq!(digit_count_on(&psi.view(), &dims, 0, &evens).unwrap(), 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(digit_count_on(&psi.view(), &dims, 1, &evens).unwrap(), 0.0, epsilon = 1e-12);
    assert!(digit_counter(&dims, 3).is_err());
}

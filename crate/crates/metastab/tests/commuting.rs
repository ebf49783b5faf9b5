//! Commuting-projector check sums: syndrome labels and their algebra, the
//! exact one-shot rotation step with its norm guarantees, and volume
//! metastability certificates in the flip-pattern and dense excitation bases.

use std::collections::HashSet;

use approx::assert_abs_diff_eq;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use metastab::commuting::{
    commuting_swt_step, k_norm, locally_block_diagonal_residual, relative_bound_check,
    syndrome_add, syndrome_commutator, syndrome_decompose, verify_syndrome_term,
    volume_block_check, CommutingFactor, CommutingModel, SyndromeTerm,
};
use metastab::lattice::{Lattice, SiteSet};
use metastab::quantum::linalg::{hermitian_eigvals, max_abs, operator_norm};
use metastab::quantum::{LocalTerm, OperatorSum, ProductState, DENSE_CAP};
use metastab::swt::{swt_run, FilterTables, SizeCutoff};

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// 2×2 Pauli matrix by digit: 0 = 1, 1 = X, 2 = Y, 3 = Z.
fn pauli(p: u8) -> Array2<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    let o = re(1.0);
    let z = re(0.0);
    match p {
        1 => ndarray::array![[z, o], [o, z]],
        2 => ndarray::array![[z, -i], [i, z]],
        3 => ndarray::array![[o, z], [z, -o]],
        _ => ndarray::array![[o, z], [z, o]],
    }
}

/// Pauli string as a local term, e.g. [(2, 1), (4, 3)] = X_2 Z_4.
fn string_term(sites: &[(u32, u8)]) -> LocalTerm {
    let factors: Vec<(u32, Array2<Complex64>)> =
        sites.iter().map(|&(s, p)| (s, pauli(p))).collect();
    LocalTerm::from_site_factors(&factors).expect("pauli string")
}

fn polarized(n: usize) -> ProductState {
    ProductState::computational(2, &vec![0usize; n]).expect("polarized state")
}

fn conditioned(lattice: Lattice, delta_prime: f64) -> CommutingModel {
    let n = lattice.n_sites();
    CommutingModel::ising_conditioned(lattice, &polarized(n), delta_prime)
        .expect("conditioned model")
}

/// Dense full-space embedding of one block.
fn full_term(dims: &[usize], support: &SiteSet, block: &Array2<Complex64>) -> Array2<Complex64> {
    OperatorSum::general(dims.to_vec(), vec![LocalTerm::new(support.clone(), block.clone())])
        .and_then(|op| op.to_dense(DENSE_CAP))
        .expect("dense embedding")
}

fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> Array2<Complex64> {
    let mut m = Array2::<Complex64>::zeros((d, d));
    for r in 0..d {
        for c in 0..d {
            m[(r, c)] = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
    }
    let dag = m.t().mapv(|z| z.conj());
    &m + &dag
}

/// Random Pauli string on a short interval, returned as its (single)
/// syndrome component together with the site/digit list that built it.
fn random_string_component(
    rng: &mut ChaCha8Rng,
    model: &CommutingModel,
    max_len: u32,
) -> (SyndromeTerm, Vec<(u32, u8)>) {
    let n = model.dims().len() as u32;
    loop {
        let start = rng.random_range(0..n);
        let len = rng.random_range(1..=max_len);
        let sites: Vec<(u32, u8)> = (0..len)
            .map(|k| ((start + k) % n, rng.random_range(0..4u32) as u8))
            .filter(|&(_, p)| p != 0)
            .collect();
        if sites.is_empty() {
            continue;
        }
        let op = OperatorSum::hermitian(model.dims().to_vec(), vec![string_term(&sites)])
            .expect("string operator");
        let parts = syndrome_decompose(&op, model).expect("decompose");
        assert_eq!(parts.len(), 1, "a Pauli string has a single syndrome");
        return (parts.into_iter().next().unwrap(), sites);
    }
}

/// All flip-pattern bit masks at a volume cap: nonempty subsets of connected
/// regions, deduplicated. For a polarized reference these masks are the
/// computational-basis indices of the excitation subspace.
fn pattern_masks(lattice: &Lattice, cap: usize) -> Vec<usize> {
    let mut set = HashSet::new();
    for s in lattice.enumerate_connected_subsets(cap).expect("subsets") {
        let sites = s.as_slice();
        for sub in 1usize..(1 << sites.len()) {
            let mut mask = 0usize;
            for (k, &site) in sites.iter().enumerate() {
                if sub >> k & 1 == 1 {
                    mask |= 1 << site;
                }
            }
            set.insert(mask);
        }
    }
    let mut v: Vec<usize> = set.into_iter().collect();
    v.sort_unstable();
    v
}

#[test]
fn diagonal_and_flip_strings_get_the_expected_syndromes() {
    // Z commutes with every conditioned bond: empty syndrome.
    let model = conditioned(Lattice::chain(6, false).unwrap(), 1.0);
    let op = OperatorSum::hermitian(model.dims().to_vec(), vec![string_term(&[(1, 3)])]).unwrap();
    let parts = syndrome_decompose(&op, &model).unwrap();
    assert_eq!(parts.len(), 1);
    assert!(parts[0].syndrome.is_empty());
    assert!(verify_syndrome_term(&model, &parts[0]).unwrap() <= 1e-10);

    // X at a bulk site of a sheet anticommutes with its four bonds.
    let model2 = conditioned(Lattice::square(4, 4, false).unwrap(), 1.0);
    let site = 5u32;
    assert_eq!(model2.lattice().neighbors(site).len(), 4);
    let op2 =
        OperatorSum::hermitian(model2.dims().to_vec(), vec![string_term(&[(site, 1)])]).unwrap();
    let parts2 = syndrome_decompose(&op2, &model2).unwrap();
    assert_eq!(parts2.len(), 1);
    assert_eq!(parts2[0].syndrome.len(), 4);
    for &f in &parts2[0].syndrome {
        assert!(model2.factors()[f].support.contains(site));
        assert!(model2.factors()[f].support.is_subset_of(&parts2[0].support));
    }
    assert!(verify_syndrome_term(&model2, &parts2[0]).unwrap() <= 1e-10);
}

#[test]
fn a_conditioned_flip_is_locally_block_diagonal() {
    // X_2 (1 − Z_1 Z_3) anticommutes with the bonds (1,2) and (2,3) yet
    // commutes with the satisfied-sector projector of its own window, and it
    // annihilates both satisfied window configurations.
    let model = conditioned(Lattice::chain(5, false).unwrap(), 1.0);
    let sup = SiteSet::new(vec![1, 2, 3]);
    let x2 = string_term(&[(2, 1)]).embed(&sup, model.dims()).unwrap().block;
    let xzz = string_term(&[(1, 3), (2, 1), (3, 3)]).block;
    let term = LocalTerm::new(sup, &x2 - &xzz);
    let op = OperatorSum::hermitian(model.dims().to_vec(), vec![term]).unwrap();
    let parts = syndrome_decompose(&op, &model).unwrap();
    assert_eq!(parts.len(), 1);
    let t = &parts[0];
    assert_eq!(t.syndrome.len(), 2);
    let bonds: Vec<&[u32]> =
        t.syndrome.iter().map(|&f| model.factors()[f].support.as_slice()).collect();
    assert!(bonds.contains(&&[1u32, 2][..]) && bonds.contains(&&[2u32, 3][..]));
    assert!(verify_syndrome_term(&model, t).unwrap() <= 1e-10);
    assert!(locally_block_diagonal_residual(&model, t).unwrap() <= 1e-12);
    // |000⟩ and |111⟩ on the window satisfy both bonds; the term kills both.
    let d = t.block.nrows();
    let kill0: f64 = (0..d).map(|r| t.block[(r, 0)].norm()).sum();
    let kill7: f64 = (0..d).map(|r| t.block[(r, d - 1)].norm()).sum();
    assert!(kill0 <= 1e-12 && kill7 <= 1e-12);
}

#[test]
fn syndrome_components_reassemble_the_operator() {
    let model = conditioned(Lattice::chain(6, true).unwrap(), 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut terms = vec![
        string_term(&[(0, 1)]),
        string_term(&[(2, 2), (3, 3)]),
        string_term(&[(4, 3)]),
    ];
    terms.push(LocalTerm::new(SiteSet::new(vec![1, 2]), random_hermitian(&mut rng, 4)));
    let op = OperatorSum::hermitian(model.dims().to_vec(), terms).unwrap();
    let parts = syndrome_decompose(&op, &model).unwrap();
    assert!(parts.len() >= 4);
    let mut sum = Array2::<Complex64>::zeros((64, 64));
    for t in &parts {
        assert!(verify_syndrome_term(&model, t).unwrap() <= 1e-10);
        sum = sum + full_term(model.dims(), &t.support, &t.block);
    }
    let dense = op.to_dense(DENSE_CAP).unwrap();
    let scale = 1.0 + max_abs(&dense);
    assert!(max_abs(&(&dense - &sum)) / scale <= 1e-12);
}

#[test]
fn single_site_checks_take_the_general_path() {
    // P_i = |0⟩⟨0| per site: an X flip has syndrome {i}, the step inverts
    // the single-check energy exactly and the dressed remainder vanishes.
    let lattice = Lattice::chain(4, false).unwrap();
    let p0 = ndarray::array![[re(1.0), re(0.0)], [re(0.0), re(0.0)]];
    let factors = (0..4)
        .map(|i| CommutingFactor {
            support: SiteSet::new(vec![i]),
            lambda: 1.0,
            block: p0.clone(),
        })
        .collect();
    let model = CommutingModel::new(lattice, factors, polarized(4)).unwrap();
    assert!(!model.is_pauli_bond_model());
    assert_eq!(model.ell0(), 0);
    let op = OperatorSum::hermitian(model.dims().to_vec(), vec![string_term(&[(0, 1)])]).unwrap();
    let parts = syndrome_decompose(&op, &model).unwrap();
    assert_eq!(parts.len(), 1);
    assert_eq!(parts[0].syndrome, vec![0]);
    let step = commuting_swt_step(&model, &parts[0]).unwrap();
    assert_abs_diff_eq!(operator_norm(&step.a.block), 1.0, epsilon = 1e-10);
    assert!(max_abs(&step.pv.block) <= 1e-12);
    assert!(step.stabilizer_residual <= 1e-10);
}

#[test]
fn bulk_and_edge_flips_cost_two_and_one_bonds() {
    // A bulk flip on a ring violates two bonds, so ‖A‖ = ‖V‖ / (2Δ′).
    let model = conditioned(Lattice::chain(6, true).unwrap(), 1.0);
    let op = OperatorSum::hermitian(model.dims().to_vec(), vec![string_term(&[(2, 1)])]).unwrap();
    let parts = syndrome_decompose(&op, &model).unwrap();
    let step = commuting_swt_step(&model, &parts[0]).unwrap();
    assert_abs_diff_eq!(operator_norm(&step.a.block), 0.5, epsilon = 1e-10);
    assert_eq!(step.shrunk_support.as_slice(), &[2]);
    assert_eq!(step.fattened_support.as_slice(), &[1, 2, 3]);

    // The defining identity [H0′, A] + V = ℙ′V holds on the full space.
    let h0 = model.h0_prime().unwrap().to_dense(DENSE_CAP).unwrap();
    let a = full_term(model.dims(), &step.a.support, &step.a.block);
    let v = full_term(model.dims(), &parts[0].support, &parts[0].block);
    let pv = full_term(model.dims(), &step.pv.support, &step.pv.block);
    let comm = h0.dot(&a) - a.dot(&h0);
    let resid = comm + &v - &pv;
    assert!(max_abs(&resid) <= 1e-10);

    // At an open end the flip breaks a single bond: ‖A‖ = ‖V‖ / Δ′.
    let edge = conditioned(Lattice::chain(6, false).unwrap(), 1.0);
    let op_e = OperatorSum::hermitian(edge.dims().to_vec(), vec![string_term(&[(0, 1)])]).unwrap();
    let parts_e = syndrome_decompose(&op_e, &edge).unwrap();
    let step_e = commuting_swt_step(&edge, &parts_e[0]).unwrap();
    assert_abs_diff_eq!(operator_norm(&step_e.a.block), 1.0, epsilon = 1e-10);
}

#[test]
fn flip_segments_of_any_length_break_exactly_two_bonds() {
    let model = conditioned(Lattice::chain(9, false).unwrap(), 0.7);
    for len in 1..=5usize {
        let sites: Vec<(u32, u8)> = (0..len).map(|k| ((2 + k) as u32, 1)).collect();
        let op =
            OperatorSum::hermitian(model.dims().to_vec(), vec![string_term(&sites)]).unwrap();
        let parts = syndrome_decompose(&op, &model).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].syndrome.len(), 2);
        let step = commuting_swt_step(&model, &parts[0]).unwrap();
        // The flipped block couples the satisfied window only to the state
        // with the whole segment flipped (energy exactly 2Δ′), and its row
        // and column spaces are orthogonal, so the pseudo-inverse rescales
        // the unit-norm string by exactly 1/(2Δ′) at every length.
        assert_abs_diff_eq!(operator_norm(&step.a.block), 1.0 / 1.4, epsilon = 1e-9);
        assert_eq!(step.fattened_support.len(), len + 2);
        assert!(operator_norm(&step.pv.block) <= 2.0 + 1e-10);
        assert!(step.stabilizer_residual <= 1e-10);
        assert!(verify_syndrome_term(&model, &step.a).unwrap() <= 1e-10);
        assert_eq!(step.a.syndrome, parts[0].syndrome);
    }
}

#[test]
fn commuting_terms_pass_through_and_degenerate_states_are_refused() {
    let model = conditioned(Lattice::chain(6, true).unwrap(), 1.0);
    let op = OperatorSum::hermitian(model.dims().to_vec(), vec![string_term(&[(2, 3), (4, 3)])])
        .unwrap();
    let parts = syndrome_decompose(&op, &model).unwrap();
    assert_eq!(parts.len(), 1);
    assert!(parts[0].syndrome.is_empty());
    let step = commuting_swt_step(&model, &parts[0]).unwrap();
    assert_eq!(operator_norm(&step.a.block), 0.0);
    assert!(max_abs(&(&step.pv.block - &parts[0].block)) <= 1e-15);

    // A site no check sees: X there has an empty syndrome yet moves the
    // reference state, which the step must refuse.
    let chain = Lattice::chain(3, false).unwrap();
    let p0 = ndarray::array![[re(1.0), re(0.0)], [re(0.0), re(0.0)]];
    let factors = (0..2)
        .map(|i| CommutingFactor {
            support: SiteSet::new(vec![i]),
            lambda: 1.0,
            block: p0.clone(),
        })
        .collect();
    let model2 = CommutingModel::new(chain, factors, polarized(3)).unwrap();
    let op2 =
        OperatorSum::hermitian(model2.dims().to_vec(), vec![string_term(&[(2, 1)])]).unwrap();
    let parts2 = syndrome_decompose(&op2, &model2).unwrap();
    assert!(parts2[0].syndrome.is_empty());
    let err = commuting_swt_step(&model2, &parts2[0]).unwrap_err();
    assert!(err.to_string().contains("locally degenerate"));
}

#[test]
fn commutators_carry_the_symmetric_difference_syndrome() {
    let model = conditioned(Lattice::chain(8, true).unwrap(), 1.0);
    let n = model.dims().len() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut nonzero = 0usize;
    let component = |sites: &[(u32, u8)]| {
        let op = OperatorSum::hermitian(model.dims().to_vec(), vec![string_term(sites)])
            .expect("string operator");
        let parts = syndrome_decompose(&op, &model).expect("decompose");
        assert_eq!(parts.len(), 1);
        parts.into_iter().next().unwrap()
    };
    for round in 0..20 {
        let start = rng.random_range(0..n);
        let (sites_a, sites_b) = if round % 2 == 0 {
            // X and Z on a shared site anticommute: nonzero commutator with
            // the flip syndrome on one side and an empty one on the other.
            (vec![(start, 1u8)], vec![(start, 3u8)])
        } else {
            let draw = |rng: &mut ChaCha8Rng, s0: u32| -> Vec<(u32, u8)> {
                let len = rng.random_range(1..=3u32);
                (0..len).map(|k| ((s0 + k) % n, rng.random_range(1..=3u32) as u8)).collect()
            };
            let offset = rng.random_range(0..3);
            let a = draw(&mut rng, start);
            let b = draw(&mut rng, (start + offset) % n);
            (a, b)
        };
        let ta = component(&sites_a);
        let tb = component(&sites_b);
        let c = syndrome_commutator(&ta, &tb, model.dims()).unwrap();
        assert_eq!(c.syndrome, syndrome_add(&ta.syndrome, &tb.syndrome));
        assert!(verify_syndrome_term(&model, &c).unwrap() <= 1e-10);
        if c.norm() > 1e-9 {
            nonzero += 1;
        }
    }
    assert!(nonzero >= 5, "commutator sampling produced too few nonzero cases");
}

#[test]
fn weighted_interaction_norms_grow_with_the_rate() {
    let model = conditioned(Lattice::chain(6, true).unwrap(), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut terms = Vec::new();
    for _ in 0..6 {
        let (t, _) = random_string_component(&mut rng, &model, 3);
        terms.push(t);
    }
    let n = model.dims().len();
    let mut last = 0.0;
    for &kappa in &[0.0, 0.3, 0.7, 1.2] {
        let now = k_norm(&terms, kappa, n);
        assert!(now > 0.0);
        assert!(now >= last - 1e-12, "κ-norm must grow with κ");
        last = now;
    }
}

#[test]
fn connected_sets_keep_a_boundary_volume_ratio() {
    // On a 2D sheet every connected S of these sizes has |∂S| ≥ |S|^{1/2},
    // saturated by singletons.
    let sq = Lattice::square(5, 5, false).unwrap();
    let subsets = sq.enumerate_connected_subsets(6).unwrap();
    assert!(subsets.len() > 1000);
    let mut min_ratio = f64::INFINITY;
    for s in &subsets {
        let b = sq.boundary(s);
        assert!(!b.is_empty(), "no connected subset of a 5×5 sheet fills it");
        let ratio = b.len() as f64 / (s.len() as f64).sqrt();
        min_ratio = min_ratio.min(ratio);
    }
    assert!(min_ratio >= 1.0 - 1e-12);
}

#[test]
fn shrunk_blocks_act_on_the_reference_exactly() {
    // Evaluating spectator legs in the reference state loses nothing:
    // Ṽ|ψ0⟩ = V|ψ0⟩ exactly, and for Pauli strings the kept sites are
    // exactly the X/Y positions.
    let model = conditioned(Lattice::chain(8, false).unwrap(), 1.0);
    let psi = polarized(8).full_vector(DENSE_CAP).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut flipping = 0usize;
    for _ in 0..30 {
        let (t, sites) = random_string_component(&mut rng, &model, 4);
        if t.syndrome.is_empty() {
            continue;
        }
        flipping += 1;
        let step = commuting_swt_step(&model, &t).unwrap();
        let expected: Vec<u32> = {
            let mut v: Vec<u32> =
                sites.iter().filter(|&&(_, p)| p == 1 || p == 2).map(|&(s, _)| s).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(step.shrunk_support.as_slice(), &expected[..]);
        assert!(step.shrunk_support.is_subset_of(&t.support));

        let vt = LocalTerm::new(t.support.clone(), t.block.clone())
            .contract_exterior(&step.shrunk_support, model.ground());
        let v_psi = full_term(model.dims(), &t.support, &t.block).dot(&psi);
        let vt_psi = full_term(model.dims(), &vt.support, &vt.block).dot(&psi);
        let diff: f64 = v_psi.iter().zip(vt_psi.iter()).map(|(a, b)| (a - b).norm()).sum();
        assert!(diff <= 1e-12);
    }
    assert!(flipping >= 10);
}

#[test]
fn bare_volume_checks_find_the_cheapest_flip() {
    // Open 4×4 sheet: the cheapest excitation flips one corner site and
    // pays two bonds, so the compressed minimum is exactly 2Δ′.
    let model = conditioned(Lattice::square(4, 4, false).unwrap(), 0.9);
    let report = volume_block_check(&model, None, 3).unwrap();
    assert_abs_diff_eq!(report.min_eig, 1.8, epsilon = 1e-12);
    assert_abs_diff_eq!(report.witness_energy, report.min_eig, epsilon = 1e-12);
    let w = report.witness_pattern.expect("flip-basis path reports a witness");
    assert_eq!(w.len(), 1);
    assert_eq!(model.lattice().neighbors(w.as_slice()[0]).len(), 2);

    // Ring of four at cap 2: four single flips plus four adjacent pairs,
    // with the reference state itself excluded from the subspace.
    let small = conditioned(Lattice::chain(4, true).unwrap(), 1.0);
    let r2 = volume_block_check(&small, None, 2).unwrap();
    assert_eq!(r2.dim, 8);
    assert_abs_diff_eq!(r2.min_eig, 2.0, epsilon = 1e-12);
}

#[test]
fn perturbed_volume_checks_match_a_dense_oracle() {
    let model = conditioned(Lattice::chain(8, true).unwrap(), 1.0);
    // D = 0.05 Σ_i X_i (1 − Z_{i−1} Z_{i+1}): flips that stay block-diagonal
    // with respect to every window's satisfied sector.
    let mut terms = Vec::new();
    for i in 0..8u32 {
        let l = (i + 7) % 8;
        let r = (i + 1) % 8;
        let sup = SiteSet::new(vec![l, i, r]);
        let x = string_term(&[(i, 1)]).embed(&sup, model.dims()).unwrap().block;
        let xzz = string_term(&[(l, 3), (i, 1), (r, 3)]).block;
        terms.push(LocalTerm::new(sup, (&x - &xzz).mapv(|z| z * re(0.05))));
    }
    let d = OperatorSum::hermitian(model.dims().to_vec(), terms).unwrap();
    let cap = 3usize;
    let report = volume_block_check(&model, Some(&d), cap).unwrap();
    assert!(report.min_eig >= 0.5, "volume gap must stay above Δ′/2");

    // Dense oracle: for the polarized reference the flip patterns ARE the
    // computational basis states, indexed by their site bit masks.
    let h0_full = model.h0_prime().unwrap().to_dense(DENSE_CAP).unwrap();
    let d_full = d.to_dense(DENSE_CAP).unwrap();
    let h_full = &h0_full + &d_full;
    let masks = pattern_masks(model.lattice(), cap);
    assert_eq!(masks.len(), report.dim);
    let m = masks.len();
    let mut sub = Array2::<Complex64>::zeros((m, m));
    for (a, &ma) in masks.iter().enumerate() {
        for (b, &mb) in masks.iter().enumerate() {
            sub[(a, b)] = h_full[(ma, mb)];
        }
    }
    let vals = hermitian_eigvals(&sub).unwrap();
    assert_abs_diff_eq!(report.min_eig, vals[0], epsilon = 1e-10);

    // Relative bound against the same masks: ‖D x‖ / E(x) per pattern.
    let ratio = relative_bound_check(&model, &d, cap).unwrap();
    assert!(ratio <= 0.5);
    let mut worst = 0.0f64;
    for &ma in &masks {
        let num = d_full.column(ma).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let den = h0_full[(ma, ma)].re;
        worst = worst.max(num / den);
    }
    assert_abs_diff_eq!(ratio, worst, epsilon = 1e-12);
}

#[test]
fn proportional_perturbations_rescale_the_bound_exactly() {
    let model = conditioned(Lattice::chain(6, true).unwrap(), 1.0);
    let h0 = model.h0_prime().unwrap();
    let scaled: Vec<LocalTerm> = h0
        .terms()
        .iter()
        .map(|t| LocalTerm::new(t.support.clone(), t.block.mapv(|z| z * re(0.4))))
        .collect();
    let d = OperatorSum::hermitian(model.dims().to_vec(), scaled).unwrap();
    assert_abs_diff_eq!(relative_bound_check(&model, &d, 2).unwrap(), 0.4, epsilon = 1e-12);
    // H0′ + 0.4 H0′ rescales the cheapest flip energy 2Δ′ by 1.4.
    let report = volume_block_check(&model, Some(&d), 2).unwrap();
    assert_abs_diff_eq!(report.min_eig, 2.8, epsilon = 1e-10);

    let zero = OperatorSum::hermitian(model.dims().to_vec(), vec![]).unwrap();
    assert_eq!(relative_bound_check(&model, &zero, 2).unwrap(), 0.0);
}

#[test]
fn rotated_references_use_the_dense_excitation_basis() {
    // P_i = |+⟩⟨+|: the reference is not a computational state, so the
    // excitation subspace is built from Pauli strings acting on |+++⟩ and
    // compressed densely. A single dissatisfied site costs exactly λ.
    let chain = Lattice::chain(3, false).unwrap();
    let plus = Array1::from(vec![re(1.0), re(1.0)]);
    let ground = ProductState::new(vec![plus.clone(), plus.clone(), plus]).unwrap();
    let pp = Array2::from_shape_fn((2, 2), |_| re(0.5));
    let factors = (0..3)
        .map(|i| CommutingFactor {
            support: SiteSet::new(vec![i]),
            lambda: 1.2,
            block: pp.clone(),
        })
        .collect();
    let model = CommutingModel::new(chain, factors, ground).unwrap();
    assert!(!model.is_pauli_bond_model());

    let r1 = volume_block_check(&model, None, 1).unwrap();
    assert_eq!(r1.dim, 3);
    assert!(r1.witness_pattern.is_none());
    assert_abs_diff_eq!(r1.min_eig, 1.2, epsilon = 1e-9);

    // Cap 2 adds the two adjacent double-dissatisfactions and nothing else.
    let r2 = volume_block_check(&model, None, 2).unwrap();
    assert_eq!(r2.dim, 5);
    assert_abs_diff_eq!(r2.min_eig, 1.2, epsilon = 1e-9);

    let scaled: Vec<LocalTerm> = model
        .h0_prime()
        .unwrap()
        .terms()
        .iter()
        .map(|t| LocalTerm::new(t.support.clone(), t.block.mapv(|z| z * re(0.3))))
        .collect();
    let d = OperatorSum::hermitian(model.dims().to_vec(), scaled).unwrap();
    assert_abs_diff_eq!(relative_bound_check(&model, &d, 1).unwrap(), 0.3, epsilon = 1e-9);
}

#[test]
fn striped_sheets_stay_volume_metastable_at_width_three() {
    // Width-3 column stripes on an open 6×6 sheet, checks conditioned on the
    // stripe pattern: every flip pattern pays its full edge boundary, so the
    // compressed minimum is 2Δ′ (a corner flip) and stays above Δ′/2.
    let sq = Lattice::square(6, 6, false).unwrap();
    let digits: Vec<usize> = (0..36).map(|s| (s % 6) / 3 % 2).collect();
    let state = ProductState::computational(2, &digits).unwrap();
    let model = CommutingModel::ising_conditioned(sq, &state, 1.0).unwrap();
    let report = volume_block_check(&model, None, 6).unwrap();
    assert!(report.min_eig >= 0.5);
    assert_abs_diff_eq!(report.min_eig, 2.0, epsilon = 1e-12);
    let w = report.witness_pattern.expect("flip-basis witness");
    assert_eq!(w.len(), 1);
    assert_eq!(model.lattice().neighbors(w.as_slice()[0]).len(), 2);
    assert!(report.dim > 10_000, "cap-6 flip basis on 6×6 should be large");
}

#[test]
fn size_cutoff_rotations_shrink_the_offdiagonal_tail() {
    // Two filtered rotations of H0′ + 0.05 ΣX with a volume cutoff on the
    // generator: the off-diagonal remainder keeps shrinking and the dressed
    // diagonal still stabilizes the reference state.
    let model = conditioned(Lattice::chain(8, true).unwrap(), 1.0);
    let h0 = model.h0_prime().unwrap();
    let vx: Vec<LocalTerm> = (0..8)
        .map(|i| LocalTerm::new(SiteSet::new(vec![i]), pauli(1).mapv(|z| z * re(0.05))))
        .collect();
    let v = OperatorSum::hermitian(model.dims().to_vec(), vx).unwrap();
    let tables = FilterTables::new(1.8, 10_000).unwrap();
    let run = swt_run(&h0, &v, model.ground(), 2, SizeCutoff::Volume(5), &tables).unwrap();
    assert!(!run.diverged);
    assert_eq!(run.orders.len(), 2);
    assert!(run.orders[0].norm_v < run.initial_norm_v);
    assert!(run.orders[1].norm_v < run.orders[0].norm_v);
    assert!(run.orders.last().unwrap().stabilizer_residual <= 1e-7);
    assert!(run.e_star.abs() < 0.1);
}

#[test]
fn rotation_norms_stay_inside_their_guarantees() {
    // Random local perturbations on a chain and a sheet: every syndrome
    // component obeys Δ′‖A‖ ≤ ‖V‖ and ‖ℙ′V‖ ≤ 2‖V‖, and the dressed
    // remainder stabilizes the reference state.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let chain_model = conditioned(Lattice::chain(10, false).unwrap(), 0.8);
    let sheet_model = conditioned(Lattice::square(3, 4, false).unwrap(), 1.3);
    let mut checked = 0usize;
    for model in [&chain_model, &sheet_model] {
        let n = model.dims().len() as u32;
        for _ in 0..50 {
            let sup = {
                let a = rng.random_range(0..n);
                if rng.random::<bool>() {
                    SiteSet::new(vec![a])
                } else {
                    let nb = model.lattice().neighbors(a);
                    let b = nb[rng.random_range(0..nb.len())];
                    SiteSet::new(vec![a, b])
                }
            };
            let d = 1usize << sup.len();
            let block = random_hermitian(&mut rng, d);
            let op = OperatorSum::hermitian(model.dims().to_vec(), vec![LocalTerm::new(sup, block)])
                .unwrap();
            let parts = syndrome_decompose(&op, model).unwrap();
            for t in &parts {
                let vn = t.norm();
                if vn <= 1e-14 {
                    continue;
                }
                let step = commuting_swt_step(model, t).unwrap();
                let dp = model.delta_prime();
                assert!(dp * operator_norm(&step.a.block) <= vn * (1.0 + 1e-10));
                assert!(operator_norm(&step.pv.block) <= 2.0 * vn * (1.0 + 1e-10));
                assert!(step.stabilizer_residual <= 1e-10 * (1.0 + vn));
                checked += 1;
            }
        }
    }
    assert!(checked >= 100, "expected at least 100 nontrivial components, got {checked}");
}

#[test]
fn invalid_models_and_windows_are_rejected() {
    let chain = Lattice::chain(4, false).unwrap();

    // Half the identity is not a projector.
    let half = Array2::from_shape_fn((2, 2), |(r, c)| if r == c { re(0.5) } else { re(0.0) });
    let bad = vec![CommutingFactor { support: SiteSet::new(vec![0]), lambda: 1.0, block: half }];
    let err = CommutingModel::new(chain.clone(), bad, polarized(4)).unwrap_err();
    assert!(err.to_string().contains("not a projector"));

    // Two projectors that both fix |00⟩ but do not commute.
    let mut p = Array2::<Complex64>::zeros((4, 4));
    p[(0, 0)] = re(1.0);
    p[(3, 3)] = re(1.0);
    let mut q = Array2::<Complex64>::zeros((4, 4));
    q[(0, 0)] = re(1.0);
    for (r, c) in [(1, 1), (1, 3), (3, 1), (3, 3)] {
        q[(r, c)] = re(0.5);
    }
    let overlapping = vec![
        CommutingFactor { support: SiteSet::new(vec![0, 1]), lambda: 1.0, block: p },
        CommutingFactor { support: SiteSet::new(vec![0, 1]), lambda: 1.0, block: q },
    ];
    let err = CommutingModel::new(chain.clone(), overlapping, polarized(4)).unwrap_err();
    assert!(err.to_string().contains("do not commute"));

    // A domain wall frustrates bonds that demand agreement.
    let agree = Array2::from_shape_fn((4, 4), |(r, c)| {
        if r == c && (r == 0 || r == 3) {
            re(1.0)
        } else {
            re(0.0)
        }
    });
    let walled = ProductState::computational(2, &[0, 0, 1, 1]).unwrap();
    let factors = (0..3)
        .map(|i| CommutingFactor {
            support: SiteSet::new(vec![i, i + 1]),
            lambda: 1.0,
            block: agree.clone(),
        })
        .collect();
    let err = CommutingModel::new(chain.clone(), factors, walled).unwrap_err();
    assert!(err.to_string().contains("frustration-free"));

    // Conditioned checks need a computational reference.
    let plus = Array1::from(vec![re(1.0), re(1.0)]);
    let rotated = ProductState::new(vec![plus.clone(), plus.clone(), plus.clone(), plus]).unwrap();
    let err = CommutingModel::ising_conditioned(chain.clone(), &rotated, 1.0).unwrap_err();
    assert!(err.to_string().contains("computational"));

    let model = conditioned(chain, 1.0);
    assert!(volume_block_check(&model, None, 0).is_err());

    // Syndrome checks must sit inside the declared strong support.
    let stray = SyndromeTerm {
        support: SiteSet::new(vec![0]),
        syndrome: vec![2],
        block: pauli(1),
    };
    let err = commuting_swt_step(&model, &stray).unwrap_err();
    assert!(err.to_string().contains("sticks out"));
}

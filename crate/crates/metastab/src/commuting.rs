//! Schrieffer–Wolff machinery for commuting-projector Hamiltonians.
//!
//! The stabilizing part here is a frustration-free check sum
//!
//!   H0′ = Σ_f λ_f (1 − P_f),   [P_f, P_g] = 0,   λ_f ≥ Δ′,
//!
//! whose reference state satisfies every check, P_f|ψ0⟩ = |ψ0⟩. Because the
//! checks commute, any operator splits into *syndrome* components: O_{S,s}
//! anticommutes with the reflection 2P_f − 1 exactly for the checks f in the
//! syndrome set s and commutes with every other check. The syndrome is the
//! pattern of violations the operator toggles, so it is conserved under
//! commutators (symmetric difference) and makes the Schrieffer–Wolff step
//! exact at finite size: with P_F̄ the product of checks inside a fattened
//! support F̄ and H′ the check sum restricted to F̄,
//!
//!   A = P_F̄ Ṽ P⊥_F̄ H′⁻¹ − H′⁻¹ P⊥_F̄ Ṽ P_F̄ ,
//!   ℙ′V = [H0′, A] + V = V − P⊥_F̄ Ṽ P_F̄ − P_F̄ Ṽ P⊥_F̄ ,
//!
//! where Ṽ is V with the reference state evaluated outside the shrunk
//! support F and H′⁻¹ is the pseudo-inverse vanishing on the satisfied
//! sector. Every excited energy of H′ is at least Δ′, so Δ′‖A‖ ≤ ‖V‖ and
//! ‖ℙ′V‖ ≤ 2‖V‖ with no Taylor remainder.
//!
//! The same check structure certifies *volume* metastability: flipping any
//! finite pattern of sites violates every check on the pattern boundary, so
//! the excitation subspace Q spanned by local deformations of |ψ0⟩ has
//! Q H0′ Q ≥ Δ′·(minimum boundary check count). [`volume_block_check`]
//! measures the compressed minimum eigenvalue of H0′ + D over all flip
//! patterns generated by connected regions up to a volume cap, and
//! [`relative_bound_check`] measures max ‖Dψ‖/‖H0′ψ‖ over the same basis.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, SiteSet};
use crate::quantum::linalg::{
    hermitian_eigen, hermiticity_defect, max_abs, norm2, operator_norm, pivoted_gram_schmidt,
};
use crate::quantum::operator::digits;
use crate::quantum::{LocalTerm, OperatorSum, ProductState, DENSE_CAP};

/// Idempotency / hermiticity tolerance for model checks P_f.
const PROJECTOR_TOL: f64 = 1e-12;
/// Pairwise commutation tolerance for model checks.
const COMMUTE_TOL: f64 = 1e-12;
/// Residual allowed for "stabilizes the reference state".
const STABILIZE_TOL: f64 = 1e-10;
/// Residual allowed for the locally-block-diagonal property of D terms.
const BLOCK_DIAG_TOL: f64 = 1e-10;
/// Relative size below which a decomposition component is dropped.
const NEGLIGIBLE: f64 = 1e-14;
/// Largest support (sites) expanded over the Pauli-string basis.
const PAULI_SUPPORT_CAP: usize = 8;

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// One check of the stabilizing sum: a projector block P_f on a small
/// support, entering H0′ as λ_f (1 − P_f).
#[derive(Debug, Clone)]
pub struct CommutingFactor {
    pub support: SiteSet,
    pub lambda: f64,
    pub block: Array2<Complex64>,
}

/// A frustration-free commuting-projector Hamiltonian together with the
/// product state that satisfies all of its checks.
#[derive(Debug, Clone)]
pub struct CommutingModel {
    lattice: Lattice,
    dims: Vec<usize>,
    factors: Vec<CommutingFactor>,
    ground: ProductState,
    delta_prime: f64,
    ell0: usize,
    /// Check ids touching each site.
    site_factors: Vec<Vec<usize>>,
    /// All checks are conditioned two-site ZZ projectors (2P−1 = ±ZZ).
    pauli_bonds: bool,
    /// Digits of the reference state when it is a computational basis state.
    ground_digits: Option<Vec<usize>>,
}

impl CommutingModel {
    /// Validates and indexes a commuting-projector model.
    ///
    /// Checks, at tolerance 1e−12: every block is Hermitian and idempotent,
    /// every intersecting pair commutes, every λ_f is positive, and the
    /// reference state satisfies every check. Δ′ is the smallest λ_f and ℓ0
    /// the largest check diameter.
    pub fn new(
        lattice: Lattice,
        factors: Vec<CommutingFactor>,
        ground: ProductState,
    ) -> Result<Self> {
        let n = lattice.n_sites();
        if ground.n_sites() != n {
            return Err(Error::validation("reference state size does not match the lattice"));
        }
        let dims = ground.dims().to_vec();
        if factors.is_empty() {
            return Err(Error::validation("commuting model needs at least one check"));
        }
        let mut ell0 = 0usize;
        for (k, f) in factors.iter().enumerate() {
            if f.support.is_empty() {
                return Err(Error::validation(format!("check {k} has empty support")));
            }
            let max = f.support.as_slice().last().copied().unwrap_or(0) as usize;
            if max >= n {
                return Err(Error::validation(format!(
                    "check {k} touches site {max} outside the {n}-site lattice"
                )));
            }
            let d = space_dim(&f.support, &dims);
            if f.block.nrows() != d || f.block.ncols() != d {
                return Err(Error::validation(format!(
                    "check {k} block is {}x{}, expected {d}x{d}",
                    f.block.nrows(),
                    f.block.ncols()
                )));
            }
            if !(f.lambda.is_finite() && f.lambda > 0.0) {
                return Err(Error::validation(format!("check {k} needs a positive gap weight")));
            }
            let scale = 1.0 + max_abs(&f.block);
            if hermiticity_defect(&f.block) > PROJECTOR_TOL * scale {
                return Err(Error::validation(format!("check {k} is not Hermitian")));
            }
            if max_abs(&(f.block.dot(&f.block) - &f.block)) > PROJECTOR_TOL * scale {
                return Err(Error::validation(format!("check {k} is not a projector")));
            }
            let v = ground.restricted(&f.support);
            let pv = f.block.dot(&v);
            let defect = (&pv - &v).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if defect > PROJECTOR_TOL * 10.0 {
                return Err(Error::validation(format!(
                    "check {k} does not stabilize the reference state (defect {defect:.3e}); \
                     the model is not frustration-free for this state"
                )));
            }
            ell0 = ell0.max(lattice.diameter(&f.support)?);
        }
        for i in 0..factors.len() {
            for j in i + 1..factors.len() {
                if !factors[i].support.intersects(&factors[j].support) {
                    continue;
                }
                let u = factors[i].support.union(&factors[j].support);
                let a = embed_on(&factors[i].block, &factors[i].support, &u, &dims)?;
                let b = embed_on(&factors[j].block, &factors[j].support, &u, &dims)?;
                if max_abs(&(a.dot(&b) - b.dot(&a))) > COMMUTE_TOL {
                    return Err(Error::validation(format!("checks {i} and {j} do not commute")));
                }
            }
        }
        let delta_prime = factors.iter().map(|f| f.lambda).fold(f64::INFINITY, f64::min);
        let mut site_factors = vec![Vec::new(); n];
        for (k, f) in factors.iter().enumerate() {
            for s in f.support.iter() {
                site_factors[s as usize].push(k);
            }
        }
        let pauli_bonds = dims.iter().all(|&q| q == 2)
            && factors
                .iter()
                .all(|f| f.support.len() == 2 && conditioned_bond_sign(&f.block).is_some());
        let ground_digits = computational_digits(&ground);
        Ok(CommutingModel {
            lattice,
            dims,
            factors,
            ground,
            delta_prime,
            ell0,
            site_factors,
            pauli_bonds,
            ground_digits,
        })
    }

    /// Nearest-neighbor conditioned Ising checks around a computational
    /// product state: per bond ⟨ij⟩, P_f = (1 + s_f Z_iZ_j)/2 with the sign
    /// s_f read off the state, so the given state (polarized, stripes, any
    /// domain pattern) is the frustration-free reference, with λ_f = Δ′.
    pub fn ising_conditioned(
        lattice: Lattice,
        state: &ProductState,
        delta_prime: f64,
    ) -> Result<Self> {
        if !(delta_prime.is_finite() && delta_prime > 0.0) {
            return Err(Error::validation("conditioned Ising model needs Δ′ > 0"));
        }
        if state.dims().iter().any(|&q| q != 2) {
            return Err(Error::validation("conditioned Ising checks need qubit sites"));
        }
        let digits = computational_digits(state).ok_or_else(|| {
            Error::validation(
                "conditioned Ising checks need a computational basis reference state",
            )
        })?;
        let mut factors = Vec::new();
        for (i, j) in lattice_bonds(&lattice) {
            let same = digits[i as usize] == digits[j as usize];
            // Diagonal of (1 + s ZZ)/2 over |00⟩,|10⟩,|01⟩,|11⟩.
            let diag: [f64; 4] = if same { [1.0, 0.0, 0.0, 1.0] } else { [0.0, 1.0, 1.0, 0.0] };
            let mut block = Array2::zeros((4, 4));
            for (r, &v) in diag.iter().enumerate() {
                block[(r, r)] = Complex64::new(v, 0.0);
            }
            factors.push(CommutingFactor {
                support: SiteSet::new(vec![i, j]),
                lambda: delta_prime,
                block,
            });
        }
        CommutingModel::new(lattice, factors, state.clone())
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn factors(&self) -> &[CommutingFactor] {
        &self.factors
    }

    pub fn ground(&self) -> &ProductState {
        &self.ground
    }

    /// Δ′ = min_f λ_f, the guaranteed cost of one violated check.
    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    /// ℓ0 = max check diameter (the interaction range of H0′).
    pub fn ell0(&self) -> usize {
        self.ell0
    }

    /// H0′ = Σ_f λ_f (1 − P_f) as an operator sum.
    pub fn h0_prime(&self) -> Result<OperatorSum> {
        let terms = self
            .factors
            .iter()
            .map(|f| {
                let d = f.block.nrows();
                let block = (identity(d) - &f.block).mapv(|z| z * f.lambda);
                LocalTerm::new(f.support.clone(), block)
            })
            .collect();
        OperatorSum::hermitian(self.dims.clone(), terms)
    }

    /// True when every check is a conditioned two-site ZZ projector, the
    /// regime where syndromes are read directly off Pauli strings.
    pub fn is_pauli_bond_model(&self) -> bool {
        self.pauli_bonds
    }

    /// Ids of checks fully contained in `s`.
    fn factors_inside(&self, s: &SiteSet) -> Vec<usize> {
        self.factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.support.is_subset_of(s))
            .map(|(k, _)| k)
            .collect()
    }

    /// Ids of checks intersecting `s`.
    fn factors_touching(&self, s: &SiteSet) -> Vec<usize> {
        let mut ids: Vec<usize> = s
            .iter()
            .flat_map(|site| self.site_factors[site as usize].iter().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

// ---------------------------------------------------------------------------
// Syndrome terms
// ---------------------------------------------------------------------------

/// One syndrome component O_{S,s}: a block on the strong support S that
/// anticommutes with 2P_f − 1 exactly for the checks f ∈ s (all inside S)
/// and commutes with every other check.
#[derive(Debug, Clone)]
pub struct SyndromeTerm {
    pub support: SiteSet,
    /// Sorted ids of the anticommuting checks.
    pub syndrome: Vec<usize>,
    pub block: Array2<Complex64>,
}

impl SyndromeTerm {
    /// Spectral norm of the block.
    pub fn norm(&self) -> f64 {
        operator_norm(&self.block)
    }
}

/// Syndromes compose by symmetric difference (each shared check flips from
/// anticommuting twice back to commuting).
pub fn syndrome_add(a: &[usize], b: &[usize]) -> Vec<usize> {
    let sa: BTreeSet<usize> = a.iter().copied().collect();
    let sb: BTreeSet<usize> = b.iter().copied().collect();
    sa.symmetric_difference(&sb).copied().collect()
}

/// [A, B] carried as a syndrome term: support S ∪ S′, syndrome s Δ s′.
pub fn syndrome_commutator(
    a: &SyndromeTerm,
    b: &SyndromeTerm,
    dims: &[usize],
) -> Result<SyndromeTerm> {
    let u = a.support.union(&b.support);
    let ae = embed_on(&a.block, &a.support, &u, dims)?;
    let be = embed_on(&b.block, &b.support, &u, dims)?;
    Ok(SyndromeTerm {
        support: u,
        syndrome: syndrome_add(&a.syndrome, &b.syndrome),
        block: ae.dot(&be) - be.dot(&ae),
    })
}

/// Largest (anti)commutation residual of a term against every check it can
/// see, relative to the block size. Checks in the syndrome must anticommute
/// and sit inside the strong support; all others must commute.
pub fn verify_syndrome_term(model: &CommutingModel, term: &SyndromeTerm) -> Result<f64> {
    let scale = 1.0 + max_abs(&term.block);
    let mut worst = 0.0f64;
    for (k, f) in model.factors.iter().enumerate() {
        let in_syndrome = term.syndrome.binary_search(&k).is_ok();
        if in_syndrome && !f.support.is_subset_of(&term.support) {
            return Err(Error::validation(format!(
                "syndrome check {k} sticks out of the strong support"
            )));
        }
        if !f.support.intersects(&term.support) {
            continue; // disjoint supports commute identically
        }
        let u = term.support.union(&f.support);
        let a = embed_on(&term.block, &term.support, &u, &model.dims)?;
        let p = embed_on(&f.block, &f.support, &u, &model.dims)?;
        let r = p.mapv(|z| z * 2.0) - identity(a.nrows()); // 2P_f − 1
        let ra = r.dot(&a);
        let ar = a.dot(&r);
        let res = if in_syndrome { max_abs(&(ar + &ra)) } else { max_abs(&(ar - &ra)) };
        worst = worst.max(res / scale);
    }
    Ok(worst)
}

/// Residual of the locally-block-diagonal property [O_{S,s}, P_S] = 0,
/// with P_S the product of all checks inside the strong support.
pub fn locally_block_diagonal_residual(
    model: &CommutingModel,
    term: &SyndromeTerm,
) -> Result<f64> {
    let d = term.block.nrows();
    let mut p = identity(d);
    for k in model.factors_inside(&term.support) {
        let f = &model.factors[k];
        let pe = embed_on(&f.block, &f.support, &term.support, &model.dims)?;
        p = p.dot(&pe);
    }
    let res = max_abs(&(term.block.dot(&p) - p.dot(&term.block)));
    Ok(res / (1.0 + max_abs(&term.block)))
}

/// Syndrome-weighted local norm max_i Σ_{(S,s) ∋ i} e^{K|S|} ‖O_{S,s}‖.
pub fn k_norm(terms: &[SyndromeTerm], kappa: f64, n_sites: usize) -> f64 {
    let mut per_site = vec![0.0f64; n_sites];
    for t in terms {
        let w = t.norm() * (kappa * t.support.len() as f64).exp();
        for s in t.support.iter() {
            per_site[s as usize] += w;
        }
    }
    per_site.into_iter().fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Syndrome decomposition
// ---------------------------------------------------------------------------

/// Splits an operator into syndrome components O = Σ O_{S,s}.
///
/// Each input term is fattened by the checks it touches so that every check
/// able to anticommute lies inside the strong support. Pauli-bond models
/// read syndromes directly from the X/Y endpoints of Pauli strings; general
/// models split by repeated conjugation with the reflections 2P_f − 1 on
/// the fattened window (exponential in its check count, hence confined to
/// ℓ0-sized supports). The components sum back to the input exactly up to
/// dropped pieces below 1e−14 of the term scale.
pub fn syndrome_decompose(op: &OperatorSum, model: &CommutingModel) -> Result<Vec<SyndromeTerm>> {
    if op.dims() != model.dims.as_slice() {
        return Err(Error::validation("operator layout does not match the model"));
    }
    let per_term: Vec<Vec<SyndromeTerm>> = op
        .terms()
        .par_iter()
        .map(|t| decompose_term(model, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_term.into_iter().flatten().collect())
}

fn decompose_term(model: &CommutingModel, term: &LocalTerm) -> Result<Vec<SyndromeTerm>> {
    if model.pauli_bonds && term.support.len() <= PAULI_SUPPORT_CAP {
        decompose_term_pauli(model, term)
    } else {
        decompose_term_general(model, term)
    }
}

/// Pauli fast path: expand the block over Pauli strings; a conditioned bond
/// check ±Z_iZ_j anticommutes with a string exactly when one of its two
/// sites carries X or Y, so the syndrome is read off the string endpoints.
fn decompose_term_pauli(model: &CommutingModel, term: &LocalTerm) -> Result<Vec<SyndromeTerm>> {
    let k = term.support.len();
    let sites: Vec<u32> = term.support.iter().collect();
    let scale = max_abs(&term.block);
    let coeffs = pauli_coefficients(&term.block, k);
    // Group strings by syndrome.
    let mut groups: BTreeMap<Vec<usize>, Vec<(usize, Complex64)>> = BTreeMap::new();
    for (alpha, c) in coeffs {
        if c.norm() <= NEGLIGIBLE * scale {
            continue;
        }
        let xy: SiteSet = sites
            .iter()
            .enumerate()
            .filter(|(p, _)| matches!(pauli_digit(alpha, *p), 1 | 2))
            .map(|(_, &s)| s)
            .collect();
        let mut syndrome: Vec<usize> = model
            .factors_touching(&term.support)
            .into_iter()
            .filter(|&f| {
                let inside =
                    model.factors[f].support.iter().filter(|&s| xy.contains(s)).count();
                inside % 2 == 1
            })
            .collect();
        syndrome.sort_unstable();
        groups.entry(syndrome).or_default().push((alpha, c));
    }
    let mut out = Vec::new();
    for (syndrome, strings) in groups {
        // Strong support: the term plus its anticommuting checks.
        let mut support = term.support.clone();
        for &f in &syndrome {
            support = support.union(&model.factors[f].support);
        }
        let mut small = Array2::zeros((term.block.nrows(), term.block.ncols()));
        for (alpha, c) in strings {
            small = small + pauli_string_matrix(alpha, k).mapv(|z| z * c);
        }
        let block = embed_on(&small, &term.support, &support, &model.dims)?;
        out.push(SyndromeTerm { support, syndrome, block });
    }
    Ok(out)
}

/// General path: embed on the check-fattened window and split recursively
/// into commuting/anticommuting halves against each inside check,
/// O = (O + R O R)/2 + (O − R O R)/2 with R = 2P_f − 1.
fn decompose_term_general(model: &CommutingModel, term: &LocalTerm) -> Result<Vec<SyndromeTerm>> {
    let mut support = term.support.clone();
    for f in model.factors_touching(&term.support) {
        support = support.union(&model.factors[f].support);
    }
    let dim = space_dim(&support, &model.dims);
    if dim > DENSE_CAP {
        return Err(Error::numerical(format!(
            "check-fattened support of a term spans dimension {dim} > {DENSE_CAP}; \
             syndrome splitting is confined to ℓ0-sized windows"
        )));
    }
    let b = embed_on(&term.block, &term.support, &support, &model.dims)?;
    let scale = 1.0 + max_abs(&b);
    // Only checks overlapping the original term can anticommute.
    let split_ids: Vec<usize> = model
        .factors_touching(&term.support)
        .into_iter()
        .filter(|&f| model.factors[f].support.is_subset_of(&support))
        .collect();
    let mut parts: Vec<(Vec<usize>, Array2<Complex64>)> = vec![(Vec::new(), b)];
    for f in split_ids {
        let fac = &model.factors[f];
        let pe = embed_on(&fac.block, &fac.support, &support, &model.dims)?;
        let r = pe.mapv(|z| z * 2.0) - identity(dim);
        let mut next = Vec::with_capacity(parts.len() * 2);
        for (s, m) in parts {
            let rmr = r.dot(&m).dot(&r);
            let comm = (&m + &rmr).mapv(|z| z * 0.5);
            let anti = (&m - &rmr).mapv(|z| z * 0.5);
            if max_abs(&comm) > NEGLIGIBLE * scale {
                next.push((s.clone(), comm));
            }
            if max_abs(&anti) > NEGLIGIBLE * scale {
                let mut sa = s.clone();
                sa.push(f);
                next.push((sa, anti));
            }
        }
        parts = next;
    }
    Ok(parts
        .into_iter()
        .map(|(mut s, m)| {
            s.sort_unstable();
            SyndromeTerm { support: support.clone(), syndrome: s, block: m }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// The explicit SWT step
// ---------------------------------------------------------------------------

/// Output of one commuting-projector Schrieffer–Wolff step.
#[derive(Debug, Clone)]
pub struct SwtStepResult {
    /// Antihermitian generator, supported on the fattened window F̄.
    pub a: SyndromeTerm,
    /// ℙ′V = [H0′, A] + V, the dressed (block-diagonal) remainder.
    pub pv: SyndromeTerm,
    /// Shrunk support F after evaluating the reference state outside.
    pub shrunk_support: SiteSet,
    /// F̄ = F plus the sites of the anticommuting checks.
    pub fattened_support: SiteSet,
    /// ‖(ℙ′V − ⟨ℙ′V⟩)|ψ0⟩‖, checked against 1e−10 before returning.
    pub stabilizer_residual: f64,
}

/// One exact Schrieffer–Wolff step for a single syndrome component.
///
/// Shrinks the support by evaluating the reference state on boundary sites
/// with no anticommuting check, fattens by the syndrome checks, builds the
/// restricted pseudo-inverse on that window and returns the generator
/// A = P Ṽ P⊥ H′⁻¹ − H′⁻¹ P⊥ Ṽ P together with ℙ′V = [H0′, A] + V.
/// The construction guarantees Δ′‖A‖ ≤ ‖V‖ and ‖ℙ′V‖ ≤ 2‖V‖.
pub fn commuting_swt_step(model: &CommutingModel, v_term: &SyndromeTerm) -> Result<SwtStepResult> {
    let dims = &model.dims;
    let d_s = space_dim(&v_term.support, dims);
    if v_term.block.nrows() != d_s || v_term.block.ncols() != d_s {
        return Err(Error::validation("syndrome term block does not match its support"));
    }
    for &f in &v_term.syndrome {
        if f >= model.factors.len() {
            return Err(Error::validation(format!("syndrome names unknown check {f}")));
        }
        if !model.factors[f].support.is_subset_of(&v_term.support) {
            return Err(Error::validation(
                "syndrome check sticks out of the strong support; fatten the term first",
            ));
        }
    }
    let psi_s = model.ground.restricted(&v_term.support);
    let v_norm = operator_norm(&v_term.block);

    if v_term.syndrome.is_empty() {
        // Commutes with every check: must already stabilize the reference
        // state (local nondegeneracy), and the step is the identity.
        let (residual, _) = stabilization_residual(&v_term.block, &psi_s);
        if residual > STABILIZE_TOL * (1.0 + v_norm) {
            return Err(Error::numerical(format!(
                "empty-syndrome term moves the reference state (residual {residual:.3e}); \
                 the state is locally degenerate for this check set"
            )));
        }
        return Ok(SwtStepResult {
            a: SyndromeTerm {
                support: v_term.support.clone(),
                syndrome: Vec::new(),
                block: Array2::zeros((d_s, d_s)),
            },
            pv: v_term.clone(),
            shrunk_support: SiteSet::new(Vec::new()),
            fattened_support: SiteSet::new(Vec::new()),
            stabilizer_residual: residual,
        });
    }

    // --- Shrink: evaluate the reference state where no check is violated.
    let shrunk = shrink_support(model, v_term)?;
    let v_small = LocalTerm::new(v_term.support.clone(), v_term.block.clone())
        .contract_exterior(&shrunk, &model.ground);
    // Lossless-evaluation check: V|ψ0⟩ = Ṽ|ψ0⟩ on the strong support.
    let v_tilde_emb = embed_on(&v_small.block, &shrunk, &v_term.support, dims)?;
    let defect = vec_norm(&(&v_term.block.dot(&psi_s) - &v_tilde_emb.dot(&psi_s)));
    if defect > STABILIZE_TOL * (1.0 + v_norm) {
        return Err(Error::numerical(format!(
            "evaluating the reference state outside the violated checks loses weight \
             ({defect:.3e}); the state is not locally nondegenerate here"
        )));
    }

    // --- Fatten by the anticommuting checks.
    let mut fat = shrunk.clone();
    for &f in &v_term.syndrome {
        fat = fat.union(&model.factors[f].support);
    }
    let d_f = space_dim(&fat, dims);
    if d_f > DENSE_CAP {
        return Err(Error::numerical(format!(
            "fattened window spans dimension {d_f} > {DENSE_CAP}"
        )));
    }

    // --- Restricted check sum and its pseudo-inverse on the window.
    let inside = model.factors_inside(&fat);
    let mut p_all = identity(d_f);
    let mut h_res = Array2::<Complex64>::zeros((d_f, d_f));
    for &k in &inside {
        let f = &model.factors[k];
        let pe = embed_on(&f.block, &f.support, &fat, dims)?;
        h_res = h_res + (identity(d_f) - &pe).mapv(|z| z * f.lambda);
        p_all = p_all.dot(&pe);
    }
    let (w, u) = hermitian_eigen(&h_res)?;
    let gap_floor = 1e-7 * (1.0 + model.delta_prime);
    for &e in w.iter() {
        if e > gap_floor && e < model.delta_prime - gap_floor {
            return Err(Error::numerical(format!(
                "restricted check sum has eigenvalue {e:.6e} inside the gap (0, Δ′); \
                 this signals frustration or a commutation violation"
            )));
        }
    }
    // H′⁻¹ vanishing on the satisfied sector.
    let excited: Vec<usize> =
        (0..d_f).filter(|&i| w[i] > gap_floor).collect();
    let mut u_ex = Array2::<Complex64>::zeros((d_f, excited.len()));
    let mut u_scaled = Array2::<Complex64>::zeros((d_f, excited.len()));
    for (j, &i) in excited.iter().enumerate() {
        for r in 0..d_f {
            u_ex[(r, j)] = u[(r, i)];
            u_scaled[(r, j)] = u[(r, i)] / w[i];
        }
    }
    let h_inv = u_scaled.dot(&u_ex.t().mapv(|z| z.conj()));

    let p_perp = identity(d_f) - &p_all;
    let ve = embed_on(&v_small.block, &shrunk, &fat, dims)?;
    let a_block = p_all.dot(&ve).dot(&p_perp).dot(&h_inv)
        - h_inv.dot(&p_perp).dot(&ve).dot(&p_all);
    // [H0′, A] = −(P⊥ Ṽ P + P Ṽ P⊥): the off-diagonal bridge A removes.
    let bridge = p_perp.dot(&ve).dot(&p_all) + p_all.dot(&ve).dot(&p_perp);
    let bridge_s = embed_on(&bridge, &fat, &v_term.support, dims)?;
    let pv_block = &v_term.block - &bridge_s;

    let (residual, _) = stabilization_residual(&pv_block, &psi_s);
    if residual > STABILIZE_TOL * (1.0 + v_norm) {
        return Err(Error::numerical(format!(
            "dressed remainder fails to stabilize the reference state \
             (residual {residual:.3e}); the window is locally degenerate"
        )));
    }
    Ok(SwtStepResult {
        a: SyndromeTerm {
            support: fat.clone(),
            syndrome: v_term.syndrome.clone(),
            block: a_block,
        },
        pv: SyndromeTerm {
            support: v_term.support.clone(),
            syndrome: v_term.syndrome.clone(),
            block: pv_block,
        },
        shrunk_support: shrunk,
        fattened_support: fat,
        stabilizer_residual: residual,
    })
}

/// Support shrink: every boundary site must carry an anticommuting check.
///
/// Pauli-bond models keep exactly the X/Y endpoints of the strings (the
/// sites where the block genuinely moves the state); elsewhere boundary
/// sites with no syndrome check are dropped greedily to a fixpoint.
fn shrink_support(model: &CommutingModel, v_term: &SyndromeTerm) -> Result<SiteSet> {
    if model.pauli_bonds && v_term.support.len() <= PAULI_SUPPORT_CAP {
        let k = v_term.support.len();
        let sites: Vec<u32> = v_term.support.iter().collect();
        let scale = max_abs(&v_term.block);
        let mut xy: BTreeSet<u32> = BTreeSet::new();
        for (alpha, c) in pauli_coefficients(&v_term.block, k) {
            if c.norm() <= NEGLIGIBLE * scale {
                continue;
            }
            for (p, &s) in sites.iter().enumerate() {
                if matches!(pauli_digit(alpha, p), 1 | 2) {
                    xy.insert(s);
                }
            }
        }
        if !xy.is_empty() {
            return Ok(xy.into_iter().collect());
        }
        // Pure Z content with a nonempty syndrome cannot happen for bond
        // checks; fall through to the greedy shrink as a safety net.
    }
    let mut f_set = v_term.support.clone();
    loop {
        let boundary = model.lattice.boundary(&f_set);
        let droppable: Vec<u32> = boundary
            .iter()
            .filter(|&i| {
                !v_term.syndrome.iter().any(|&f| model.factors[f].support.contains(i))
            })
            .collect();
        if droppable.is_empty() || droppable.len() == f_set.len() {
            return Ok(f_set);
        }
        let drop: SiteSet = droppable.into_iter().collect();
        f_set = f_set.difference(&drop);
    }
}

// ---------------------------------------------------------------------------
// Volume metastability
// ---------------------------------------------------------------------------

/// Result of compressing H0′ + D to the local-excitation subspace.
#[derive(Debug, Clone)]
pub struct VolumeCheckReport {
    /// Minimum eigenvalue of Q (H0′ + D) Q.
    pub min_eig: f64,
    /// Dimension of the excitation subspace Q.
    pub dim: usize,
    /// Flip pattern realizing the minimum (flip-basis path only).
    pub witness_pattern: Option<SiteSet>,
    /// Bare check energy of the witness (equals `min_eig` when D = 0).
    pub witness_energy: f64,
}

/// Minimum eigenvalue of H0′ + D compressed to the excitation subspace
///
///   Q = span{ (O − ⟨O⟩)|ψ0⟩ : O local on connected S, |S| ≤ volume_cap },
///
/// which excludes |ψ0⟩ itself by construction; a result ≥ Δ′/2 certifies
/// volume metastability at this cap. D must be locally block-diagonal
/// ([D_{S,s}, P_S] = 0 per syndrome component).
///
/// For computational reference states of diagonal-check models the subspace
/// is spanned by orthonormal flip patterns (every nonempty subset of every
/// connected region), so the check energy is summed pattern by pattern and
/// no full-space vector is ever built — this is how 6×6 lattices stay in
/// reach. Other models fall back to dense Pauli-string generation under the
/// global dimension cap.
pub fn volume_block_check(
    model: &CommutingModel,
    d: Option<&OperatorSum>,
    volume_cap: usize,
) -> Result<VolumeCheckReport> {
    let d_terms = validate_perturbation(model, d)?;
    if flip_basis_applies(model) {
        volume_check_flip_basis(model, d_terms, volume_cap)
    } else {
        volume_check_dense(model, d, volume_cap)
    }
}

/// max ‖Dψ‖ / ‖H0′ψ‖ over the orthonormal basis of the excitation
/// subspace at this cap; a value ≤ 1/2 is the relative bound that keeps
/// H0′ + D gapped on the subspace.
pub fn relative_bound_check(
    model: &CommutingModel,
    d: &OperatorSum,
    volume_cap: usize,
) -> Result<f64> {
    let d_terms = validate_perturbation(model, Some(d))?;
    if flip_basis_applies(model) {
        let ground = model.ground_digits.as_ref().expect("flip basis requires digits");
        let patterns = flip_patterns(model, volume_cap)?;
        let energies = pattern_energies(model, ground, &patterns);
        let mut worst = 0.0f64;
        for (i, &mask) in patterns.iter().enumerate() {
            let image = apply_terms_to_pattern(d_terms, ground, mask, &model.dims);
            let num = image.values().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if energies[i] <= 0.0 {
                return Err(Error::numerical(
                    "flip pattern with zero check energy; the reference state is degenerate",
                ));
            }
            worst = worst.max(num / energies[i]);
        }
        Ok(worst)
    } else {
        let (basis, h0_full, d_full) = dense_subspace(model, Some(d), volume_cap)?;
        let d_full = d_full.expect("dense path with D present");
        let mut worst = 0.0f64;
        for col in 0..basis.ncols() {
            let v = basis.column(col).to_owned();
            let num = vec_norm(&d_full.dot(&v));
            let den = vec_norm(&h0_full.dot(&v));
            if den <= 1e-12 * (1.0 + num) {
                return Err(Error::numerical(
                    "excitation with zero check energy; the relative bound is unbounded",
                ));
            }
            worst = worst.max(num / den);
        }
        Ok(worst)
    }
}

/// Decomposes D, enforces the locally-block-diagonal precondition, and
/// returns D's raw terms.
fn validate_perturbation<'a>(
    model: &CommutingModel,
    d: Option<&'a OperatorSum>,
) -> Result<&'a [LocalTerm]> {
    let Some(d) = d else { return Ok(&[]) };
    if d.dims() != model.dims.as_slice() {
        return Err(Error::validation("perturbation layout does not match the model"));
    }
    let parts = syndrome_decompose(d, model)?;
    for part in &parts {
        let res = locally_block_diagonal_residual(model, &part)?;
        if res > BLOCK_DIAG_TOL {
            return Err(Error::validation(format!(
                "perturbation component with syndrome {:?} is not locally block-diagonal \
                 (residual {res:.3e})",
                part.syndrome
            )));
        }
    }
    Ok(d.terms())
}

fn flip_basis_applies(model: &CommutingModel) -> bool {
    model.dims.iter().all(|&q| q == 2)
        && model.dims.len() <= 64
        && model.ground_digits.is_some()
        && model.factors.iter().all(|f| is_diagonal(&f.block))
}

/// All flip patterns: nonempty subsets of connected regions |S| ≤ cap,
/// deduplicated, as site bitmasks in deterministic order.
fn flip_patterns(model: &CommutingModel, volume_cap: usize) -> Result<Vec<u64>> {
    if volume_cap == 0 {
        return Err(Error::validation("volume cap must be ≥ 1"));
    }
    let regions = model.lattice.enumerate_connected_subsets(volume_cap)?;
    let mut seen: HashSet<u64> = HashSet::new();
    for s in &regions {
        let sites: Vec<u32> = s.iter().collect();
        for sub in 1u64..(1u64 << sites.len()) {
            let mut mask = 0u64;
            for (p, &site) in sites.iter().enumerate() {
                if sub >> p & 1 == 1 {
                    mask |= 1u64 << site;
                }
            }
            seen.insert(mask);
        }
    }
    let mut patterns: Vec<u64> = seen.into_iter().collect();
    patterns.sort_unstable();
    Ok(patterns)
}

/// Check energy Σ_f λ_f (1 − P_f) of each flip pattern (diagonal checks).
fn pattern_energies(model: &CommutingModel, ground: &[usize], patterns: &[u64]) -> Vec<f64> {
    patterns
        .iter()
        .map(|&mask| {
            let mut touched: Vec<usize> = bits_of(mask)
                .flat_map(|site| model.site_factors[site as usize].iter().copied())
                .collect();
            touched.sort_unstable();
            touched.dedup();
            touched
                .into_iter()
                .map(|k| {
                    let f = &model.factors[k];
                    let idx = local_config_index(&f.support, ground, mask);
                    f.lambda * (1.0 - f.block[(idx, idx)].re)
                })
                .sum()
        })
        .collect()
}

fn volume_check_flip_basis(
    model: &CommutingModel,
    d_terms: &[LocalTerm],
    volume_cap: usize,
) -> Result<VolumeCheckReport> {
    let ground = model.ground_digits.as_ref().expect("flip basis requires digits");
    let patterns = flip_patterns(model, volume_cap)?;
    let energies = pattern_energies(model, ground, &patterns);
    if d_terms.is_empty() {
        // H0′ is diagonal on the pattern basis: scan the energies.
        let (arg, &min) = energies
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("patterns are nonempty");
        return Ok(VolumeCheckReport {
            min_eig: min,
            dim: patterns.len(),
            witness_pattern: Some(mask_to_sites(patterns[arg])),
            witness_energy: min,
        });
    }
    let dim = patterns.len();
    if dim > DENSE_CAP {
        return Err(Error::numerical(format!(
            "excitation subspace dimension {dim} exceeds {DENSE_CAP} with a nonzero \
             perturbation; lower the volume cap"
        )));
    }
    let index: HashMap<u64, usize> =
        patterns.iter().enumerate().map(|(i, &m)| (m, i)).collect();
    let mut mat = Array2::<Complex64>::zeros((dim, dim));
    for (i, &e) in energies.iter().enumerate() {
        mat[(i, i)] = Complex64::new(e, 0.0);
    }
    for (a, &mask) in patterns.iter().enumerate() {
        let image = apply_terms_to_pattern(d_terms, ground, mask, &model.dims);
        for (out_mask, amp) in image {
            if let Some(&b) = index.get(&out_mask) {
                mat[(b, a)] += amp;
            }
        }
    }
    let (w, u) = hermitian_eigen(&mat)?;
    let min_eig = w[0];
    let (wit, _) = u
        .column(0)
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .expect("eigenvector is nonempty");
    Ok(VolumeCheckReport {
        min_eig,
        dim,
        witness_pattern: Some(mask_to_sites(patterns[wit])),
        witness_energy: energies[wit],
    })
}

/// Applies a sum of local terms to the basis state "ψ0 flipped on mask",
/// returning the image as {basis mask → amplitude} (qubit sites).
fn apply_terms_to_pattern(
    terms: &[LocalTerm],
    ground: &[usize],
    mask: u64,
    dims: &[usize],
) -> HashMap<u64, Complex64> {
    let mut image: HashMap<u64, Complex64> = HashMap::new();
    for t in terms {
        let sites: Vec<u32> = t.support.iter().collect();
        let local_dims: Vec<usize> = sites.iter().map(|&s| dims[s as usize]).collect();
        let col = local_config_index(&t.support, ground, mask);
        for r in 0..t.block.nrows() {
            let amp = t.block[(r, col)];
            if amp.norm() == 0.0 {
                continue;
            }
            let rd = digits(r, &local_dims);
            let mut out = mask;
            for (p, &site) in sites.iter().enumerate() {
                let flipped = rd[p] != ground[site as usize];
                if flipped {
                    out |= 1u64 << site;
                } else {
                    out &= !(1u64 << site);
                }
            }
            *image.entry(out).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
    }
    image
}

/// Dense fallback: Pauli-string generators, pivoted orthonormalization,
/// full-space compression. Guarded by the global dimension cap.
fn volume_check_dense(
    model: &CommutingModel,
    d: Option<&OperatorSum>,
    volume_cap: usize,
) -> Result<VolumeCheckReport> {
    let (basis, h0_full, d_full) = dense_subspace(model, d, volume_cap)?;
    let mut h = h0_full;
    if let Some(df) = d_full {
        h = h + df;
    }
    let compressed = basis.t().mapv(|z| z.conj()).dot(&h).dot(&basis);
    let (w, u) = hermitian_eigen(&compressed)?;
    let _ = u;
    Ok(VolumeCheckReport {
        min_eig: w[0],
        dim: basis.ncols(),
        witness_pattern: None,
        witness_energy: w[0],
    })
}

/// Orthonormal basis of the excitation subspace plus dense H0′ (and D).
#[allow(clippy::type_complexity)]
fn dense_subspace(
    model: &CommutingModel,
    d: Option<&OperatorSum>,
    volume_cap: usize,
) -> Result<(Array2<Complex64>, Array2<Complex64>, Option<Array2<Complex64>>)> {
    if volume_cap == 0 {
        return Err(Error::validation("volume cap must be ≥ 1"));
    }
    if model.dims.iter().any(|&q| q != 2) {
        return Err(Error::numerical(
            "dense excitation-subspace generation covers qubit models only",
        ));
    }
    let full: usize = model.dims.iter().product();
    if full > DENSE_CAP {
        return Err(Error::numerical(format!(
            "full dimension {full} exceeds {DENSE_CAP}; this model needs the flip-basis path \
             (computational reference state, diagonal checks)"
        )));
    }
    let psi0 = model.ground.full_vector(DENSE_CAP)?;
    let mut vectors = Vec::new();
    for s in model.lattice.enumerate_connected_subsets(volume_cap)? {
        let sites: Vec<u32> = s.iter().collect();
        let n_strings = 4usize.pow(sites.len() as u32);
        for alpha in 1..n_strings {
            let ops: Vec<u8> = (0..sites.len()).map(|p| pauli_digit(alpha, p)).collect();
            let mut v = apply_pauli_string(&psi0, &model.dims, &sites, &ops);
            let overlap: Complex64 =
                psi0.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
            v.zip_mut_with(&psi0, |x, p| *x -= overlap * p);
            if vec_norm(&v) > 1e-12 {
                vectors.push(v);
            }
        }
    }
    let basis = pivoted_gram_schmidt(&vectors, 1e-10);
    if basis.ncols() == 0 {
        return Err(Error::numerical("excitation subspace is empty at this cap"));
    }
    let h0_full = model.h0_prime()?.to_dense(DENSE_CAP)?;
    let d_full = match d {
        Some(op) => Some(op.to_dense(DENSE_CAP)?),
        None => None,
    };
    Ok((basis, h0_full, d_full))
}

// ---------------------------------------------------------------------------
// Shared small helpers
// ---------------------------------------------------------------------------

fn identity(n: usize) -> Array2<Complex64> {
    Array2::eye(n)
}

fn space_dim(set: &SiteSet, dims: &[usize]) -> usize {
    set.iter().map(|s| dims[s as usize]).product()
}

/// Re-expresses a block on a larger support (identity on the new legs).
fn embed_on(
    block: &Array2<Complex64>,
    from: &SiteSet,
    into: &SiteSet,
    dims: &[usize],
) -> Result<Array2<Complex64>> {
    if from.as_slice() == into.as_slice() {
        return Ok(block.clone());
    }
    Ok(LocalTerm::new(from.clone(), block.clone()).embed(into, dims)?.block)
}

fn vec_norm(v: &Array1<Complex64>) -> f64 {
    norm2(&v.view())
}

/// ‖(B − ⟨ψ|B|ψ⟩)|ψ⟩‖ together with the expectation.
fn stabilization_residual(block: &Array2<Complex64>, psi: &Array1<Complex64>) -> (f64, Complex64) {
    let v = block.dot(psi);
    let e: Complex64 = psi.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
    let mut r = v;
    r.zip_mut_with(psi, |x, p| *x -= e * p);
    (vec_norm(&r), e)
}

/// All deduplicated nearest-neighbor bonds (i < j) of a lattice.
fn lattice_bonds(lattice: &Lattice) -> Vec<(u32, u32)> {
    let mut set = BTreeSet::new();
    for i in 0..lattice.n_sites() as u32 {
        for &j in lattice.neighbors(i) {
            if i != j {
                set.insert((i.min(j), i.max(j)));
            }
        }
    }
    set.into_iter().collect()
}

/// Digits of a computational product state (one nonzero amplitude per site).
fn computational_digits(state: &ProductState) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(state.n_sites());
    for site in 0..state.n_sites() as u32 {
        let f = state.factor(site);
        let mut digit = None;
        for (d, z) in f.iter().enumerate() {
            if z.norm() > 1e-12 {
                if digit.is_some() {
                    return None;
                }
                digit = Some(d);
            }
        }
        out.push(digit?);
    }
    Some(out)
}

/// Sign s when the block equals (1 + s ZZ)/2 on two qubit sites.
fn conditioned_bond_sign(block: &Array2<Complex64>) -> Option<f64> {
    if block.nrows() != 4 || !is_diagonal(block) {
        return None;
    }
    let d: Vec<f64> = (0..4).map(|i| block[(i, i)].re).collect();
    let close = |target: &[f64; 4]| d.iter().zip(target).all(|(a, b)| (a - b).abs() <= 1e-12);
    if close(&[1.0, 0.0, 0.0, 1.0]) {
        Some(1.0)
    } else if close(&[0.0, 1.0, 1.0, 0.0]) {
        Some(-1.0)
    } else {
        None
    }
}

fn is_diagonal(block: &Array2<Complex64>) -> bool {
    let scale = 1.0 + max_abs(block);
    for r in 0..block.nrows() {
        for c in 0..block.ncols() {
            if r != c && block[(r, c)].norm() > 1e-13 * scale {
                return false;
            }
            if r == c && block[(r, c)].im.abs() > 1e-13 * scale {
                return false;
            }
        }
    }
    true
}

fn bits_of(mask: u64) -> impl Iterator<Item = u32> {
    (0..64u32).filter(move |b| mask >> b & 1 == 1)
}

fn mask_to_sites(mask: u64) -> SiteSet {
    bits_of(mask).collect()
}

/// Little-endian index of the configuration "ψ0 flipped on mask" restricted
/// to a qubit support.
fn local_config_index(support: &SiteSet, ground: &[usize], mask: u64) -> usize {
    let mut idx = 0usize;
    let mut stride = 1usize;
    for s in support.iter() {
        let flipped = mask >> s & 1 == 1;
        let d = ground[s as usize] ^ usize::from(flipped);
        idx += d * stride;
        stride *= 2;
    }
    idx
}

// ---------------------------------------------------------------------------
// Pauli-string helpers (qubit supports)
// ---------------------------------------------------------------------------

/// Base-4 digit p of a string index: 0 = I, 1 = X, 2 = Y, 3 = Z.
fn pauli_digit(alpha: usize, position: usize) -> u8 {
    (alpha >> (2 * position) & 3) as u8
}

/// Row action of one Pauli: σ[r, col(r)] = phase(r).
fn pauli_row(op: u8, r: usize) -> (usize, Complex64) {
    match op {
        0 => (r, Complex64::new(1.0, 0.0)),
        1 => (1 - r, Complex64::new(1.0, 0.0)),
        2 => (1 - r, if r == 0 { Complex64::new(0.0, -1.0) } else { Complex64::new(0.0, 1.0) }),
        _ => (r, Complex64::new(if r == 0 { 1.0 } else { -1.0 }, 0.0)),
    }
}

/// Column action: out = σ|c⟩ has its single entry at row(c) with phase(c).
fn pauli_col(op: u8, c: usize) -> (usize, Complex64) {
    match op {
        0 => (c, Complex64::new(1.0, 0.0)),
        1 => (1 - c, Complex64::new(1.0, 0.0)),
        2 => (1 - c, if c == 0 { Complex64::new(0.0, 1.0) } else { Complex64::new(0.0, -1.0) }),
        _ => (c, Complex64::new(if c == 0 { 1.0 } else { -1.0 }, 0.0)),
    }
}

/// Dense matrix of a Pauli string on k sites (little-endian digit order).
fn pauli_string_matrix(alpha: usize, k: usize) -> Array2<Complex64> {
    let dim = 1usize << k;
    let mut out = Array2::zeros((dim, dim));
    for r in 0..dim {
        let mut c = 0usize;
        let mut phase = Complex64::new(1.0, 0.0);
        for p in 0..k {
            let (cd, ph) = pauli_row(pauli_digit(alpha, p), r >> p & 1);
            c |= cd << p;
            phase *= ph;
        }
        out[(r, c)] = phase;
    }
    out
}

/// Coefficients c_α = Tr(σ_α B)/2^k of a block over the Pauli-string basis.
///
/// Radix-4 transform: index B by per-site pair digits m_p = r_p + 2c_p and
/// contract one site at a time with Tr(σ|c⟩⟨r|) weights, O(k·4^k) total.
fn pauli_coefficients(block: &Array2<Complex64>, k: usize) -> Vec<(usize, Complex64)> {
    let dim = 1usize << k;
    let n_strings = 4usize.pow(k as u32);
    let mut t = vec![Complex64::new(0.0, 0.0); n_strings];
    for r in 0..dim {
        for c in 0..dim {
            let mut m = 0usize;
            for p in 0..k {
                m |= ((r >> p & 1) | ((c >> p & 1) << 1)) << (2 * p);
            }
            t[m] = block[(r, c)];
        }
    }
    let i = Complex64::new(0.0, 1.0);
    for p in 0..k {
        let stride = 1usize << (2 * p);
        let group = stride << 2;
        for base in (0..n_strings).step_by(group) {
            for off in 0..stride {
                let i0 = base + off;
                let (t0, t1, t2, t3) =
                    (t[i0], t[i0 + stride], t[i0 + 2 * stride], t[i0 + 3 * stride]);
                t[i0] = t0 + t3; // I: ⟨0|·|0⟩ + ⟨1|·|1⟩
                t[i0 + stride] = t1 + t2; // X: the two off-diagonal pairs
                t[i0 + 2 * stride] = (t2 - t1) * i; // Y: ∓i weights
                t[i0 + 3 * stride] = t0 - t3; // Z
            }
        }
    }
    let norm = 1.0 / dim as f64;
    t.into_iter()
        .enumerate()
        .filter(|(_, z)| z.norm() > 0.0)
        .map(|(alpha, z)| (alpha, z * norm))
        .collect()
}

/// Applies a Pauli string to a full-space qubit vector.
fn apply_pauli_string(
    psi: &Array1<Complex64>,
    dims: &[usize],
    sites: &[u32],
    ops: &[u8],
) -> Array1<Complex64> {
    let mut strides = Vec::with_capacity(sites.len());
    for &s in sites {
        let stride: usize = dims.iter().take(s as usize).product();
        strides.push(stride);
    }
    let mut out = Array1::zeros(psi.len());
    for (idx, &amp) in psi.iter().enumerate() {
        if amp.norm() == 0.0 {
            continue;
        }
        let mut target = idx;
        let mut phase = Complex64::new(1.0, 0.0);
        for (p, &stride) in strides.iter().enumerate() {
            let digit = idx / stride % 2;
            let (nd, ph) = pauli_col(ops[p], digit);
            target = target - digit * stride + nd * stride;
            phase *= ph;
        }
        out[target] += phase * amp;
    }
    out
}

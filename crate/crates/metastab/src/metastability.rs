//! Window-level metastability checks.
//!
//! The central quantity is the window gap: for a connected window W and a
//! product reference state ψ0,
//!
//!   Δ_W = min { ⟨φ ⊗ ψ0|H|φ ⊗ ψ0⟩ − ⟨ψ0|H|ψ0⟩ : φ ⊥ ψ0 on W } ,
//!
//! where only terms touching W survive the difference, each contracted with
//! ψ0 on its exterior legs. A state is (Δ, R)-metastable when Δ_W ≥ Δ for
//! every window of diameter ≤ R, and the scan over growing diameters stops
//! at the first non-positive gap. Because any window embeds into a larger
//! one with ψ0 padding, Δ(R) is non-increasing, so only maximal windows per
//! diameter are checked.

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, SiteSet};
use crate::quantum::operator::{compose, digits};
use crate::quantum::{linalg, Constraint, LocalTerm, OperatorSum, ProductState, DENSE_CAP};

/// Default tolerance below which a window gap counts as closed.
pub const GAP_TOL: f64 = 1e-10;

/// How Hamiltonian terms crossing the window edge are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Contract exterior legs with the reference state (the defining
    /// construction for product-state metastability).
    Product,
    /// Keep only terms fully inside the window.
    Open,
    /// Fold a translation-invariant 1D Hamiltonian onto the window as a
    /// ring: every term whose leftmost site lies in the window is wrapped
    /// with modular arithmetic. Interval windows on chains only.
    Periodic,
}

impl BoundaryMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "product" => Ok(BoundaryMode::Product),
            "open" => Ok(BoundaryMode::Open),
            "periodic" => Ok(BoundaryMode::Periodic),
            _ => Err(Error::validation(format!(
                "unknown boundary mode {s:?} (expected product|open|periodic)"
            ))),
        }
    }
}

/// Relabels a term's sites, permuting block legs when the relabeling does
/// not preserve the site ordering.
fn relabel_term(term: &LocalTerm, relabel: impl Fn(u32) -> u32) -> Result<LocalTerm> {
    let old_sites: Vec<u32> = term.support.iter().collect();
    let new_labels: Vec<u32> = old_sites.iter().map(|&s| relabel(s)).collect();
    let mut sorted = new_labels.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != new_labels.len() {
        return Err(Error::validation("site relabeling collides"));
    }
    if sorted == new_labels {
        return Ok(LocalTerm::new(SiteSet::new(new_labels), term.block.clone()));
    }
    // leg permutation: leg t of the new ordering is old leg perm[t]
    let perm: Vec<usize> = sorted
        .iter()
        .map(|l| new_labels.iter().position(|x| x == l).unwrap())
        .collect();
    let k = old_sites.len();
    let side = term.block.nrows();
    // per-leg dimensions from the block shape are not recoverable in mixed
    // radix; all supported lattices are uniform-q, so infer q from k and dim
    let q = (side as f64).powf(1.0 / k as f64).round() as usize;
    if q.pow(k as u32) != side {
        return Err(Error::validation("cannot permute legs of a mixed-radix block"));
    }
    let dims = vec![q; k];
    let mut out = ndarray::Array2::zeros((side, side));
    for r in 0..side {
        let rd = digits(r, &dims);
        let rp: Vec<usize> = perm.iter().map(|&p| rd[p]).collect();
        let ri = compose(&rp, &dims);
        for c in 0..side {
            let cd = digits(c, &dims);
            let cp: Vec<usize> = perm.iter().map(|&p| cd[p]).collect();
            let ci = compose(&cp, &dims);
            out[[ri, ci]] = term.block[[r, c]];
        }
    }
    Ok(LocalTerm::new(SiteSet::new(sorted), out))
}

/// Restriction of a product state to a window, renormalized per site.
pub fn window_state(state: &ProductState, window: &SiteSet) -> Result<ProductState> {
    let factors = window.iter().map(|s| state.factor(s).clone()).collect();
    ProductState::new(factors)
}

/// The Hamiltonian seen inside a window, as an operator on the window sites
/// (relabeled 0..|W|). Fully exterior terms are dropped: they cancel from
/// every energy difference against the reference state.
pub fn effective_window_hamiltonian(
    h: &OperatorSum,
    window: &SiteSet,
    state: &ProductState,
    mode: BoundaryMode,
) -> Result<OperatorSum> {
    if window.is_empty() {
        return Err(Error::validation("empty window"));
    }
    let dims_w: Vec<usize> = window.iter().map(|s| h.dims()[s as usize]).collect();
    let mut terms = Vec::new();
    match mode {
        BoundaryMode::Product | BoundaryMode::Open => {
            for t in h.terms() {
                let inter: SiteSet = t.support.iter().filter(|&s| window.contains(s)).collect();
                if inter.is_empty() {
                    continue;
                }
                let small = if inter.len() == t.support.len() {
                    t.clone()
                } else if mode == BoundaryMode::Open {
                    continue;
                } else {
                    t.contract_exterior(&inter, state)
                };
                terms.push(relabel_term(&small, |s| window.position(s).unwrap() as u32)?);
            }
        }
        BoundaryMode::Periodic => {
            let sites: Vec<u32> = window.iter().collect();
            let contiguous = sites.windows(2).all(|w| w[1] == w[0] + 1);
            if !contiguous {
                return Err(Error::validation(
                    "periodic window folding needs an interval window on a chain",
                ));
            }
            let a = sites[0];
            let len = sites.len() as u32;
            for t in h.terms() {
                let leftmost = t.support.iter().next().unwrap();
                if !window.contains(leftmost) {
                    continue;
                }
                terms.push(relabel_term(t, |s| {
                    let shifted = (s as i64 - a as i64).rem_euclid(len as i64) as u32;
                    shifted
                })?);
            }
        }
    }
    OperatorSum::hermitian(dims_w, terms)
}

/// Gap data for one window.
#[derive(Debug, Clone)]
pub struct WindowGap {
    pub window: SiteSet,
    /// min ⟨φ|H_W|φ⟩ − ⟨ψ0|H_W|ψ0⟩ over φ ⊥ ψ0 on the window.
    pub delta: f64,
    pub e_ref: f64,
    /// Squared overlap of ψ0 with the ground space of H_W (eigenvalues
    /// within 1e−9·scale of the bottom), when requested.
    pub ground_overlap: Option<f64>,
}

/// Window configurations compatible with a constrained Hilbert space.
///
/// A model living in a constrained space (PXP: no adjacent 1s) only admits
/// excitations φ for which φ ⊗ ψ0 stays inside that space: no internal
/// adjacency violation, and a window-edge digit 1 is forbidden whenever the
/// adjacent exterior factor itself has weight on digit 1. Returns None when
/// the constraint does not restrict anything.
fn constrained_window_indices(
    constraint: Constraint,
    window: &SiteSet,
    state: &ProductState,
) -> Result<Option<Vec<usize>>> {
    let periodic = match constraint {
        Constraint::None => return Ok(None),
        Constraint::NoAdjacentOnes { periodic } => periodic,
    };
    let n = state.n_sites() as i64;
    let neighbors = |s: u32| -> Vec<u32> {
        let mut out = Vec::new();
        for d in [-1i64, 1] {
            let x = s as i64 + d;
            if periodic {
                out.push(x.rem_euclid(n) as u32);
            } else if (0..n).contains(&x) {
                out.push(x as u32);
            }
        }
        out
    };
    let sites: Vec<u32> = window.iter().collect();
    let dims: Vec<usize> = sites
        .iter()
        .map(|&s| state.factor(s).len())
        .collect();
    // per-position: edge digit 1 forbidden by an exterior neighbor with
    // weight on digit 1; and the list of internal adjacent positions
    let mut forbid_one = vec![false; sites.len()];
    let mut internal_pairs = Vec::new();
    for (p, &s) in sites.iter().enumerate() {
        for x in neighbors(s) {
            match window.position(x) {
                Some(p2) => {
                    if p2 > p {
                        internal_pairs.push((p, p2));
                    }
                }
                None => {
                    let f = state.factor(x);
                    if f.len() > 1 && f[1].norm() > 1e-12 {
                        forbid_one[p] = true;
                    }
                }
            }
        }
    }
    let dim: usize = dims.iter().product();
    let mut allowed = Vec::new();
    'outer: for idx in 0..dim {
        let d = digits(idx, &dims);
        for (p, &di) in d.iter().enumerate() {
            if di == 1 && forbid_one[p] {
                continue 'outer;
            }
        }
        for &(p, p2) in &internal_pairs {
            if d[p] == 1 && d[p2] == 1 {
                continue 'outer;
            }
        }
        allowed.push(idx);
    }
    if allowed.len() == dim {
        return Ok(None);
    }
    Ok(Some(allowed))
}

pub fn window_gap(
    h: &OperatorSum,
    window: &SiteSet,
    state: &ProductState,
    mode: BoundaryMode,
    constraint: Constraint,
    with_overlap: bool,
) -> Result<WindowGap> {
    let h_eff = effective_window_hamiltonian(h, window, state, mode)?;
    let mut dense = h_eff.to_dense(DENSE_CAP)?;
    let mut psi_w = state.restricted(window);
    if let Some(allowed) = constrained_window_indices(constraint, window, state)? {
        let sub = ndarray::Array2::from_shape_fn((allowed.len(), allowed.len()), |(i, j)| {
            dense[[allowed[i], allowed[j]]]
        });
        let psi_sub = Array1::from_iter(allowed.iter().map(|&i| psi_w[i]));
        let norm = linalg::norm2(&psi_sub.view());
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                "reference state leaves the constrained space on this window",
            ));
        }
        if sub.nrows() < 2 {
            return Err(Error::numerical(
                "window admits no orthogonal excitations under the constraint",
            ));
        }
        dense = sub;
        psi_w = psi_sub;
    }
    let e_ref = {
        let hp = dense.dot(&psi_w);
        let e = linalg::inner(&psi_w.view(), &hp.view());
        if e.im.abs() > 1e-9 * (1.0 + e.re.abs()) {
            return Err(Error::numerical("reference energy has an imaginary part"));
        }
        e.re
    };
    let (min_perp, _) = linalg::deflated_min_eig(&dense, &psi_w.view())?;
    let ground_overlap = if with_overlap {
        let (vals, vecs) = linalg::hermitian_eigen(&dense)?;
        let scale = vals.iter().fold(1e-300f64, |m, &v| m.max(v.abs()));
        let mut w = 0.0;
        for (k, &v) in vals.iter().enumerate() {
            if v - vals[0] <= 1e-9 * scale {
                w += linalg::inner(&vecs.column(k), &psi_w.view()).norm_sqr();
            } else {
                break;
            }
        }
        Some(w)
    } else {
        None
    };
    Ok(WindowGap { window: window.clone(), delta: min_perp - e_ref, e_ref, ground_overlap })
}

#[derive(Debug, Clone)]
pub struct GapScanOptions {
    pub r_min: usize,
    pub r_max: usize,
    pub mode: BoundaryMode,
    /// Scan only `state_period` window offsets per diameter. Valid when the
    /// Hamiltonian is translation invariant on a ring and the state has the
    /// stated period; 1D only.
    pub translation_invariant: bool,
    pub state_period: usize,
    /// Stop scanning after the first diameter whose gap drops to `zero_tol`.
    pub stop_at_crossing: bool,
    pub zero_tol: f64,
    pub with_overlap: bool,
    /// Constraint of the model's Hilbert space; excitations are restricted
    /// to configurations that keep φ ⊗ ψ0 inside it.
    pub constraint: Constraint,
}

impl Default for GapScanOptions {
    fn default() -> Self {
        GapScanOptions {
            r_min: 1,
            r_max: 8,
            mode: BoundaryMode::Product,
            translation_invariant: false,
            state_period: 1,
            stop_at_crossing: true,
            zero_tol: GAP_TOL,
            with_overlap: false,
            constraint: Constraint::None,
        }
    }
}

/// Gap at one diameter: the minimum over all (maximal) windows.
#[derive(Debug, Clone)]
pub struct GapRecord {
    pub r: usize,
    pub delta: f64,
    pub n_windows: usize,
    pub argmin_window: SiteSet,
    pub e_ref: f64,
    pub ground_overlap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GapScan {
    pub records: Vec<GapRecord>,
    /// Largest scanned diameter R with Δ(r) > tol for all r_min ≤ r ≤ R
    /// (r_min − 1 if the very first gap is closed).
    pub radius: usize,
    /// Whether the scan actually observed the gap closing.
    pub crossed: bool,
}

impl GapScan {
    pub fn metastable(&self, options_r_min: usize) -> bool {
        self.radius >= options_r_min
    }
}

/// Scans window gaps over growing diameters.
pub fn gap_scan(
    h: &OperatorSum,
    lattice: &Lattice,
    state: &ProductState,
    opts: &GapScanOptions,
) -> Result<GapScan> {
    if h.n_sites() != lattice.n_sites() {
        return Err(Error::validation("operator/lattice size mismatch"));
    }
    if opts.translation_invariant && (lattice.dim() != 1 || !lattice.is_periodic()) {
        return Err(Error::validation(
            "translation-invariant scanning needs a periodic chain",
        ));
    }
    let mut records = Vec::new();
    let mut radius = opts.r_min.saturating_sub(1);
    let mut crossed = false;
    for r in opts.r_min..=opts.r_max {
        let mut windows = lattice.maximal_windows(r)?;
        if opts.translation_invariant {
            let p = opts.state_period.max(1);
            let n = lattice.n_sites() as u32;
            // cyclic anchor: the window site whose predecessor lies outside
            // (intervals wrapping the origin sort as starting at 0)
            windows.retain(|w| {
                let anchor = w
                    .iter()
                    .find(|&s| !w.contains((s + n - 1) % n))
                    .unwrap_or_else(|| w.iter().next().unwrap());
                (anchor as usize) < p
            });
        }
        let n_windows = windows.len();
        let gaps: Vec<Result<WindowGap>> = windows
            .par_iter()
            .map(|w| window_gap(h, w, state, opts.mode, opts.constraint, opts.with_overlap))
            .collect();
        let mut best: Option<WindowGap> = None;
        for g in gaps {
            let g = g?;
            if best.as_ref().map_or(true, |b| g.delta < b.delta) {
                best = Some(g);
            }
        }
        let best = best.ok_or_else(|| Error::validation(format!("no windows of diameter {r}")))?;
        records.push(GapRecord {
            r,
            delta: best.delta,
            n_windows,
            argmin_window: best.window,
            e_ref: best.e_ref,
            ground_overlap: best.ground_overlap,
        });
        if best.delta > opts.zero_tol && !crossed {
            radius = r;
        } else if !crossed {
            crossed = true;
        }
        if crossed && opts.stop_at_crossing {
            break;
        }
    }
    Ok(GapScan { records, radius, crossed })
}

/// Gap minimized over all connected sets of one exact size (volume-resolved
/// rather than diameter-resolved).
#[derive(Debug, Clone)]
pub struct VolumeGapRecord {
    pub size: usize,
    pub delta: f64,
    pub n_sets: usize,
    pub argmin_set: SiteSet,
}

pub fn volume_gap_scan(
    h: &OperatorSum,
    lattice: &Lattice,
    state: &ProductState,
    max_size: usize,
    mode: BoundaryMode,
    constraint: Constraint,
) -> Result<Vec<VolumeGapRecord>> {
    let sets = lattice.enumerate_connected_subsets(max_size)?;
    let gaps: Vec<Result<(usize, WindowGap)>> = sets
        .par_iter()
        .map(|s| window_gap(h, s, state, mode, constraint, false).map(|g| (s.len(), g)))
        .collect();
    let mut best: Vec<Option<VolumeGapRecord>> = vec![None; max_size + 1];
    for g in gaps {
        let (size, g) = g?;
        let slot = &mut best[size];
        match slot {
            Some(b) if b.delta <= g.delta => b.n_sets += 1,
            Some(b) => {
                b.delta = g.delta;
                b.argmin_set = g.window;
                b.n_sets += 1;
            }
            None => {
                *slot = Some(VolumeGapRecord {
                    size,
                    delta: g.delta,
                    n_sets: 1,
                    argmin_set: g.window,
                })
            }
        }
    }
    Ok(best.into_iter().flatten().collect())
}

/// Local interaction norms: max over sites of the weighted sum of term
/// norms through that site.
#[derive(Debug, Clone, Copy)]
pub enum NormKind {
    /// weight e^{2μ·diam S} (interaction-range norm).
    Interaction { mu: f64 },
    /// weight e^{κ·max(1,diam S)^α} (stretched-exponential range norm).
    Stretched { kappa: f64, alpha: f64 },
    /// weight e^{K·|S|} (volume norm).
    Volume { k: f64 },
}

pub fn local_norm(op: &OperatorSum, lattice: &Lattice, kind: NormKind) -> Result<f64> {
    if op.n_sites() != lattice.n_sites() {
        return Err(Error::validation("operator/lattice size mismatch"));
    }
    let mut per_site = vec![0.0f64; op.n_sites()];
    for t in op.terms() {
        let norm = t.spectral_norm();
        let diam = lattice.diameter(&t.support)? as f64;
        let weight = match kind {
            NormKind::Interaction { mu } => (2.0 * mu * diam).exp(),
            NormKind::Stretched { kappa, alpha } => (kappa * diam.max(1.0).powf(alpha)).exp(),
            NormKind::Volume { k } => (k * t.support.len() as f64).exp(),
        };
        for s in t.support.iter() {
            per_site[s as usize] += norm * weight;
        }
    }
    Ok(per_site.into_iter().fold(0.0, f64::max))
}

/// Robustness of a certified (Δ, R) pair under an extra perturbation of
/// per-site strength ε on a d-dimensional lattice with growth constant c_d:
/// the degraded certificate (Δ/2, min(R, (Δ/(2 c_d ε))^{1/d})).
#[derive(Debug, Clone, Copy)]
pub struct RobustnessBound {
    pub delta: f64,
    pub radius: f64,
}

pub fn robustness_shrink(delta: f64, radius: usize, eps: f64, c_d: f64, d: usize) -> Result<RobustnessBound> {
    if delta <= 0.0 {
        return Err(Error::validation("robustness needs a positive gap"));
    }
    if eps < 0.0 || c_d <= 0.0 || d == 0 {
        return Err(Error::validation("need ε ≥ 0, c_d > 0, d ≥ 1"));
    }
    let r_new = if eps == 0.0 {
        radius as f64
    } else {
        (radius as f64).min((delta / (2.0 * c_d * eps)).powf(1.0 / d as f64))
    };
    Ok(RobustnessBound { delta: delta / 2.0, radius: r_new })
}

/// Full-space vector of the reference state with a local replacement φ on S.
pub fn excited_product_vector(
    state: &ProductState,
    s: &SiteSet,
    phi: &ArrayView1<Complex64>,
) -> Result<Array1<Complex64>> {
    let dims = state.dims().to_vec();
    let dim: usize = dims.iter().product();
    if dim > DENSE_CAP {
        return Err(Error::validation(format!("space dimension {dim} exceeds {DENSE_CAP}")));
    }
    let s_dims: Vec<usize> = s.iter().map(|x| dims[x as usize]).collect();
    let s_dim: usize = s_dims.iter().product();
    if phi.len() != s_dim {
        return Err(Error::validation("excitation length does not match the set"));
    }
    let mut out = Array1::zeros(dim);
    for idx in 0..dim {
        let d = digits(idx, &dims);
        let mut amp = Complex64::new(1.0, 0.0);
        for (site, &di) in d.iter().enumerate() {
            if !s.contains(site as u32) {
                amp *= state.factor(site as u32)[di];
            }
            if amp.norm_sqr() == 0.0 {
                break;
            }
        }
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let local: Vec<usize> = s.iter().map(|x| d[x as usize]).collect();
        out[idx] = amp * phi[compose(&local, &s_dims)];
    }
    Ok(out)
}

/// Spectral-tail probe: for an H0 that stabilizes ψ0 (eigenstate), a local
/// excitation orthogonal to ψ0 must place at least Δ/(4·h0·|S|) of its
/// weight above energy Δ/2 — the quantitative statement behind lifetime
/// bounds. One dense diagonalization up front makes each check cheap.
pub struct TailChecker {
    vals: Array1<f64>,
    vecs: ndarray::Array2<Complex64>,
    state: ProductState,
    /// max_i Σ_{S∋i} ‖H0_S‖ (unweighted local norm of H0).
    pub h0_strength: f64,
    pub e0: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TailCheck {
    /// ‖Π_{E > E0 + Δ/2} |φ⊗ψ0⟩‖.
    pub tail_weight: f64,
    /// Δ/(4·h0·|S|) · ‖φ⊗ψ0⟩‖.
    pub bound: f64,
    pub holds: bool,
}

impl TailChecker {
    pub fn new(h0: &OperatorSum, lattice: &Lattice, state: &ProductState) -> Result<Self> {
        let dense = h0.to_dense(DENSE_CAP)?;
        let psi = state.full_vector(DENSE_CAP)?;
        let hp = dense.dot(&psi);
        let e0 = linalg::inner(&psi.view(), &hp.view()).re;
        let mut resid = hp;
        ndarray::Zip::from(&mut resid)
            .and(&psi)
            .for_each(|r, &p| *r -= Complex64::new(e0, 0.0) * p);
        let scale = linalg::operator_norm(&dense).max(1e-300);
        if linalg::norm2(&resid.view()) > 1e-9 * scale {
            return Err(Error::validation(
                "reference state is not an eigenstate of the unperturbed Hamiltonian",
            ));
        }
        let (vals, vecs) = linalg::hermitian_eigen(&dense)?;
        let h0_strength = local_norm(h0, lattice, NormKind::Interaction { mu: 0.0 })?;
        Ok(TailChecker { vals, vecs, state: state.clone(), h0_strength, e0 })
    }

    /// Checks the tail bound for the excitation φ on S with gap Δ.
    pub fn check(&self, s: &SiteSet, phi: &ArrayView1<Complex64>, delta: f64) -> Result<TailCheck> {
        if delta <= 0.0 {
            return Err(Error::validation("tail check needs Δ > 0"));
        }
        // φ ⊥ ψ0 on S is part of the hypothesis
        let psi_s = self.state.restricted(s);
        let ov = linalg::inner(&psi_s.view(), phi);
        if ov.norm() > 1e-9 * linalg::norm2(phi).max(1e-300) {
            return Err(Error::validation("excitation is not orthogonal to the reference state"));
        }
        let full = excited_product_vector(&self.state, s, phi)?;
        let total = linalg::norm2(&full.view());
        let threshold = self.e0 + delta / 2.0;
        let mut tail_sq = 0.0;
        for (k, &e) in self.vals.iter().enumerate() {
            if e > threshold {
                tail_sq += linalg::inner(&self.vecs.column(k), &full.view()).norm_sqr();
            }
        }
        let bound = delta / (4.0 * self.h0_strength * s.len() as f64) * total;
        let tail_weight = tail_sq.sqrt();
        Ok(TailCheck { tail_weight, bound, holds: tail_weight + 1e-12 >= bound })
    }
}

//! Prethermal splitting H = H0 + V around a product state.
//!
//! Every local term is rotated into the frame where the reference state is
//! |𝟎⟩ (one single-site unitary per site) and split exactly:
//!
//! * the part preserving the |𝟎⟩-block — P0 T P0 + P0⊥ T P0⊥ — goes to H0,
//!   so H0 always has ψ0 as an exact eigenstate;
//! * the flipping part P0⊥ T |𝟎⟩⟨𝟎| + h.c. is decomposed by flip pattern.
//!   For a term of diameter ≤ r each pattern is transplanted onto the ball
//!   of radius r around its anchor site and merged with every other
//!   contribution to that ball, V_𝓑 = ε_𝓑 (|φ_𝓑⟩⟨𝟎_𝓑| + h.c.); the exact
//!   transplant residue (which annihilates |𝟎⟩) is kept in H0, so
//!   H0 + V reproduces H with no approximation;
//! * terms wider than r contribute their flipping part to V unchanged.
//!
//! The merged V is a sum of rank-2 ball operators with pairwise-orthogonal
//! excited vectors, the normal form the filtered rotation machinery
//! consumes. Everything is rotated back to the original frame on output.

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, SiteSet};
use crate::metastability::{window_gap, BoundaryMode, GAP_TOL};
use crate::models;
use crate::quantum::operator::{compose, digits};
use crate::quantum::{linalg, Constraint, LocalTerm, OperatorSum, ProductState, DENSE_CAP};

const AMP_TOL: f64 = 1e-14;

/// Little-endian Kronecker product: index = i_a + dim_a · i_b.
fn kron_le(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let (da, db) = (a.nrows(), b.nrows());
    let mut out = Array2::zeros((da * db, da * db));
    for ib in 0..db {
        for jb in 0..db {
            let f = b[[ib, jb]];
            if f.norm_sqr() == 0.0 {
                continue;
            }
            for ia in 0..da {
                for ja in 0..da {
                    out[[ia + da * ib, ja + da * jb]] = a[[ia, ja]] * f;
                }
            }
        }
    }
    out
}

struct FrameRotation {
    /// Per-site unitaries with u|0⟩ = |ψ0 factor⟩.
    us: Vec<Array2<Complex64>>,
    trivial: Vec<bool>,
}

impl FrameRotation {
    fn new(state: &ProductState) -> Self {
        let us: Vec<Array2<Complex64>> = (0..state.n_sites() as u32)
            .map(|i| linalg::unitary_completing(&state.factor(i).view()))
            .collect();
        let trivial = us
            .iter()
            .map(|u| {
                let n = u.nrows();
                let mut dev: f64 = 0.0;
                for r in 0..n {
                    for c in 0..n {
                        let want = if r == c { 1.0 } else { 0.0 };
                        dev = dev.max((u[[r, c]] - Complex64::new(want, 0.0)).norm());
                    }
                }
                dev < 1e-14
            })
            .collect();
        FrameRotation { us, trivial }
    }

    fn support_unitary(&self, support: &SiteSet) -> Option<Array2<Complex64>> {
        if support.iter().all(|s| self.trivial[s as usize]) {
            return None;
        }
        let mut acc: Option<Array2<Complex64>> = None;
        for s in support.iter() {
            let u = &self.us[s as usize];
            acc = Some(match acc {
                None => u.clone(),
                Some(a) => kron_le(&a, u),
            });
        }
        acc
    }

    /// U† block U: the term as seen in the frame where ψ0 = |𝟎⟩.
    fn into_frame(&self, term: &LocalTerm) -> Array2<Complex64> {
        match self.support_unitary(&term.support) {
            None => term.block.clone(),
            Some(u) => {
                let udag = u.t().mapv(|z| z.conj());
                udag.dot(&term.block).dot(&u)
            }
        }
    }

    /// U block U†: back to the original frame.
    fn out_of_frame(&self, support: &SiteSet, block: Array2<Complex64>) -> LocalTerm {
        match self.support_unitary(support) {
            None => LocalTerm::new(support.clone(), block),
            Some(u) => {
                let udag = u.t().mapv(|z| z.conj());
                LocalTerm::new(support.clone(), u.dot(&block).dot(&udag))
            }
        }
    }
}

/// Smallest site whose radius-r ball covers the set.
fn ball_anchor(lattice: &Lattice, f: &SiteSet, r: usize) -> Result<u32> {
    for i in 0..lattice.n_sites() as u32 {
        if f.iter().all(|s| lattice.distance(i, s) <= r) {
            return Ok(i);
        }
    }
    Err(Error::validation("no ball of the cutoff radius covers a flip pattern"))
}

#[derive(Debug, Clone)]
pub struct BallStrength {
    pub anchor: u32,
    pub support: SiteSet,
    /// ε_𝓑 = ‖Σ flip patterns merged into this ball‖.
    pub eps: f64,
}

pub struct PrethermalSplit {
    pub h0: OperatorSum,
    pub v: OperatorSum,
    /// ⟨ψ0|H0|ψ0⟩ = ⟨ψ0|H|ψ0⟩ (the flipping parts are traceless on ψ0).
    pub e0: f64,
    pub r: usize,
    pub balls: Vec<BallStrength>,
    /// Count of terms too wide for the cutoff, whose flips went to V as-is.
    pub wide_terms: usize,
    /// max ‖H0-term |𝟎⟩ − (diagonal element)|𝟎⟩‖ in the rotated frame —
    /// zero up to rounding when the bookkeeping is exact.
    pub stabilization_residual: f64,
}

struct BallAccum {
    support: SiteSet,
    dims: Vec<usize>,
    col: BTreeMap<usize, Complex64>,
}

/// Splits `h` into H0 + V around `state` with flip-merging radius `r`.
pub fn prethermal_decompose(
    h: &OperatorSum,
    lattice: &Lattice,
    state: &ProductState,
    r: usize,
) -> Result<PrethermalSplit> {
    if h.n_sites() != lattice.n_sites() {
        return Err(Error::validation("operator/lattice size mismatch"));
    }
    if state.dims() != h.dims() {
        return Err(Error::validation("state/operator dimension mismatch"));
    }
    if !h.is_hermitian_flagged() {
        return Err(Error::validation("prethermal splitting needs a Hermitian operator"));
    }
    let rotation = FrameRotation::new(state);
    let dims_all = h.dims();
    let mut h0_terms: Vec<LocalTerm> = Vec::new();
    let mut v_terms: Vec<LocalTerm> = Vec::new();
    let mut balls: BTreeMap<u32, BallAccum> = BTreeMap::new();
    let mut e0 = 0.0;
    let mut wide_terms = 0usize;
    let mut stabilization_residual: f64 = 0.0;
    for t in h.terms() {
        let sup_sites: Vec<u32> = t.support.iter().collect();
        let sup_dims: Vec<usize> = sup_sites.iter().map(|&s| dims_all[s as usize]).collect();
        let block = rotation.into_frame(t);
        let m = block.nrows();
        let scale = linalg::max_abs(&block).max(1e-300);
        if block[[0, 0]].im.abs() > 1e-9 * scale {
            return Err(Error::numerical("term diagonal is not real"));
        }
        e0 += block[[0, 0]].re;
        // block-preserving part → H0
        let mut kept = block.clone();
        for i in 1..m {
            kept[[i, 0]] = Complex64::new(0.0, 0.0);
            kept[[0, i]] = Complex64::new(0.0, 0.0);
        }
        let flip = &block - &kept;
        h0_terms.push(rotation.out_of_frame(&t.support, kept));
        if linalg::max_abs(&flip) <= AMP_TOL * scale {
            continue;
        }
        let diam = lattice.diameter(&t.support)?;
        if diam > r {
            wide_terms += 1;
            v_terms.push(rotation.out_of_frame(&t.support, flip));
            continue;
        }
        // per-pattern transplant onto balls
        let mut corrections: BTreeMap<u32, (SiteSet, Array2<Complex64>)> = BTreeMap::new();
        for idx in 1..m {
            let amp = block[[idx, 0]];
            if amp.norm() <= AMP_TOL * scale {
                continue;
            }
            let d = digits(idx, &sup_dims);
            let f: SiteSet = sup_sites
                .iter()
                .zip(&d)
                .filter(|(_, &di)| di != 0)
                .map(|(&s, _)| s)
                .collect();
            let anchor = ball_anchor(lattice, &f, r)?;
            let accum = match balls.entry(anchor) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    let support = lattice.ball(&SiteSet::new(vec![anchor]), r);
                    let dims: Vec<usize> =
                        support.iter().map(|s| dims_all[s as usize]).collect();
                    let dim: usize = dims.iter().product();
                    if dim > DENSE_CAP {
                        return Err(Error::validation(format!(
                            "cutoff ball around site {anchor} has dimension {dim} > {DENSE_CAP}"
                        )));
                    }
                    e.insert(BallAccum { support, dims, col: BTreeMap::new() })
                }
            };
            // pattern digits placed inside the ball, zeros elsewhere
            let bidx = {
                let local: Vec<usize> = accum
                    .support
                    .iter()
                    .map(|s| match t.support.position(s) {
                        Some(p) if f.contains(s) => d[p],
                        _ => 0,
                    })
                    .collect();
                compose(&local, &accum.dims)
            };
            *accum.col.entry(bidx).or_insert(Complex64::new(0.0, 0.0)) += amp;
            // transplant residue on S ∪ 𝓑 (annihilates |𝟎⟩): subtract the
            // ball version, add back the original, both with identity legs
            // on the sites the other one lacks
            let ball_support = accum.support.clone();
            if ball_support == t.support {
                continue; // the transplant is exact already
            }
            let union = t.support.union(&ball_support);
            let u_dims: Vec<usize> = union.iter().map(|s| dims_all[s as usize]).collect();
            let u_dim: usize = u_dims.iter().product();
            if u_dim > DENSE_CAP {
                return Err(Error::validation(format!(
                    "transplant residue support has dimension {u_dim} > {DENSE_CAP}"
                )));
            }
            let (_, corr) = corrections
                .entry(anchor)
                .or_insert_with(|| (union.clone(), Array2::zeros((u_dim, u_dim))));
            add_identity_leg_flip(
                corr, &union, &u_dims, &f, &d, &sup_sites, &ball_support, -amp,
            );
            add_identity_leg_flip(
                corr, &union, &u_dims, &f, &d, &sup_sites, &t.support, amp,
            );
        }
        for (_, (support, mat)) in corrections {
            let herm = &mat + &mat.t().mapv(|z| z.conj());
            if linalg::max_abs(&herm) <= AMP_TOL * scale {
                continue;
            }
            // residue must annihilate |𝟎⟩: column 0 cancels exactly
            let col0_norm: f64 = (0..herm.nrows()).map(|i| herm[[i, 0]].norm_sqr()).sum();
            stabilization_residual = stabilization_residual.max(col0_norm.sqrt());
            h0_terms.push(rotation.out_of_frame(&support, herm));
        }
    }
    let mut ball_list = Vec::new();
    for (anchor, accum) in balls {
        let dim: usize = accum.dims.iter().product();
        let mut mat = Array2::zeros((dim, dim));
        let mut norm_sq = 0.0;
        for (&idx, &amp) in &accum.col {
            mat[[idx, 0]] = amp;
            mat[[0, idx]] = amp.conj();
            norm_sq += amp.norm_sqr();
        }
        if norm_sq.sqrt() <= AMP_TOL {
            continue;
        }
        ball_list.push(BallStrength {
            anchor,
            support: accum.support.clone(),
            eps: norm_sq.sqrt(),
        });
        v_terms.push(rotation.out_of_frame(&accum.support, mat));
    }
    let h0 = OperatorSum::hermitian(dims_all.to_vec(), h0_terms)?;
    let v = OperatorSum::hermitian(dims_all.to_vec(), v_terms)?;
    Ok(PrethermalSplit {
        h0,
        v,
        e0,
        r,
        balls: ball_list,
        wide_terms,
        stabilization_residual,
    })
}

/// Adds `amp` · |pattern⟩⟨𝟎| ⊗ identity to `mat` on the union support,
/// where the ⟨𝟎| bra covers `zero_cover` and the identity legs are the
/// union sites outside it. The flip pattern lives on `f` with digits taken
/// from the original term (`sup_sites`, `d`).
#[allow(clippy::too_many_arguments)]
fn add_identity_leg_flip(
    mat: &mut Array2<Complex64>,
    union: &SiteSet,
    u_dims: &[usize],
    f: &SiteSet,
    d: &[usize],
    sup_sites: &[u32],
    zero_cover: &SiteSet,
    amp: Complex64,
) {
    // identity sites: union ∖ zero_cover (f ⊆ zero_cover always holds)
    let ext_sites: Vec<usize> = union
        .iter()
        .enumerate()
        .filter(|(_, s)| !zero_cover.contains(*s))
        .map(|(pos, _)| pos)
        .collect();
    let ext_dims: Vec<usize> = ext_sites.iter().map(|&p| u_dims[p]).collect();
    let n_ext: usize = ext_dims.iter().product();
    // row pattern: digits of the flip on f, zeros on zero_cover ∖ f
    let mut row_base = vec![0usize; u_dims.len()];
    for (pos, s) in union.iter().enumerate() {
        if f.contains(s) {
            let p = sup_sites.iter().position(|&x| x == s).unwrap();
            row_base[pos] = d[p];
        }
    }
    for e in 0..n_ext {
        let ed = digits(e, &ext_dims);
        let mut row = row_base.clone();
        let mut colv = vec![0usize; u_dims.len()];
        for (k, &pos) in ext_sites.iter().enumerate() {
            row[pos] = ed[k];
            colv[pos] = ed[k];
        }
        mat[[compose(&row, u_dims), compose(&colv, u_dims)]] += amp;
    }
}

/// Flip-merging radius from the interaction data: with interaction norm h
/// at decay rate μ, target gap Δ, metastability radius R on a d-dimensional
/// lattice with growth constant c_d,
///
///   r = ⌊ ln(4 h R^d / (c_d Δ)) / (2μ) ⌋ + 1 ,
///
/// clamped to ≥ 0 (larger R buys a larger merging radius, logarithmically).
pub fn choose_cutoff_r(h_norm: f64, mu: f64, delta: f64, radius: usize, c_d: f64, d: usize) -> Result<usize> {
    if h_norm <= 0.0 || mu <= 0.0 || delta <= 0.0 || c_d <= 0.0 || d == 0 || radius == 0 {
        return Err(Error::validation("cutoff radius needs positive h, μ, Δ, c_d, d, R"));
    }
    let arg = 4.0 * h_norm * (radius as f64).powi(d as i32) / (c_d * delta);
    let raw = arg.ln() / (2.0 * mu);
    Ok(if raw.is_sign_negative() { 0 } else { raw.floor() as usize + 1 })
}

/// Least squares y = a·x + b with the coefficient of determination.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::validation("fit needs ≥ 2 matched points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("fit abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// One tilt strength in the radius scaling study.
#[derive(Debug, Clone, Copy)]
pub struct ScalingPoint {
    pub eps: f64,
    /// Metastability radius of the zero state under H0 = bonds + ε Σ Z
    /// (gap must stay positive).
    pub radius_h0: usize,
    /// Radius under the full H = bonds + ε Σ (Z + X) with the stricter
    /// floor Δ > 3ε: the window gap has to clear the scale the transverse
    /// part can feed back into the window.
    pub radius_full: usize,
}

#[derive(Debug, Clone)]
pub struct ScalingStudy {
    pub points: Vec<ScalingPoint>,
    pub slope_h0: f64,
    pub slope_full: f64,
}

/// How the metastability radius of the two-vacuum tilted chain shrinks with
/// the tilt ε. The radius at one ε is found by brute-force window growth:
/// R free sites between boundary qubits frozen to |0⟩ (an (R+2)-site chain
/// whose edge sites are contracted away), scanning R upward until the gap
/// criterion first fails.
pub fn radius_scaling_study(eps_values: &[f64], r_cap: usize) -> Result<ScalingStudy> {
    if eps_values.is_empty() {
        return Err(Error::validation("scaling study needs tilt values"));
    }
    let mut points = Vec::new();
    for &eps in eps_values {
        if eps <= 0.0 {
            return Err(Error::validation("tilt values must be positive"));
        }
        let radius_h0 = frozen_chain_radius(eps, r_cap, false)?;
        let radius_full = frozen_chain_radius(eps, r_cap, true)?;
        points.push(ScalingPoint { eps, radius_h0, radius_full });
    }
    let ln_eps: Vec<f64> = points.iter().map(|p| p.eps.ln()).collect();
    let fit = |get: fn(&ScalingPoint) -> usize| -> Result<f64> {
        let ln_r: Vec<f64> = points
            .iter()
            .map(|p| {
                let r = get(p);
                if r == 0 {
                    Err(Error::numerical("radius hit zero; no slope"))
                } else {
                    Ok((r as f64).ln())
                }
            })
            .collect::<Result<_>>()?;
        Ok(linear_fit(&ln_eps, &ln_r)?.slope)
    };
    Ok(ScalingStudy {
        slope_h0: fit(|p| p.radius_h0)?,
        slope_full: fit(|p| p.radius_full)?,
        points,
    })
}

/// Largest R ≤ cap such that every window of 1..=R free sites keeps its gap
/// above the floor (0 for H0, 3ε for the full Hamiltonian).
fn frozen_chain_radius(eps: f64, r_cap: usize, full: bool) -> Result<usize> {
    let mut radius = 0;
    for r in 1..=r_cap {
        let bundle = models::p00pp(r + 2, eps)?;
        let window = SiteSet::interval(1, r as u32 + 1);
        let zero = &bundle.state("zero")?.state;
        let op = if full { &bundle.h } else { &bundle.h0 };
        let gap = window_gap(op, &window, zero, BoundaryMode::Product, Constraint::None, false)?;
        let floor = if full { 3.0 * eps } else { GAP_TOL };
        if gap.delta > floor {
            radius = r;
        } else {
            return Ok(radius);
        }
    }
    Err(Error::numerical(format!(
        "radius exceeded the scan cap {r_cap}; raise the cap"
    )))
}

//! Local operator sums and product states.
//!
//! An `OperatorSum` is H = Σ_S H_S with each H_S a dense block on a sorted
//! site set S. Blocks use little-endian digit indexing (smallest site =
//! fastest digit). Hermiticity is enforced per term at construction for
//! Hamiltonians and observables; derived objects (single flipping parts,
//! generators) may opt out.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::SiteSet;

const HERMITICITY_TOL: f64 = 1e-12;

/// Product state ⊗_i |v_i⟩ with per-site qudit dimensions.
#[derive(Debug, Clone)]
pub struct ProductState {
    dims: Vec<usize>,
    factors: Vec<Array1<Complex64>>,
}

impl ProductState {
    /// Builds from per-site vectors, normalizing each factor.
    pub fn new(factors: Vec<Array1<Complex64>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::validation("product state needs ≥ 1 site"));
        }
        let dims: Vec<usize> = factors.iter().map(|f| f.len()).collect();
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::validation("site dimension must be ≥ 2"));
        }
        let mut norm_factors = Vec::with_capacity(factors.len());
        for f in factors {
            let n = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n < 1e-14 {
                return Err(Error::validation("zero site factor in product state"));
            }
            norm_factors.push(f.mapv(|z| z / n));
        }
        Ok(ProductState { dims, factors: norm_factors })
    }

    /// Computational basis state |d_0 d_1 ...⟩ with uniform qudit dimension.
    pub fn computational(q: usize, digits: &[usize]) -> Result<Self> {
        let factors = digits
            .iter()
            .map(|&d| {
                if d >= q {
                    return Err(Error::validation(format!("digit {d} out of range for q={q}")));
                }
                let mut v = Array1::zeros(q);
                v[d] = Complex64::new(1.0, 0.0);
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        ProductState::new(factors)
    }

    /// The same single-site vector on every one of `n` sites.
    pub fn uniform(n: usize, factor: Array1<Complex64>) -> Result<Self> {
        ProductState::new(vec![factor; n])
    }

    pub fn n_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn factor(&self, site: u32) -> &Array1<Complex64> {
        &self.factors[site as usize]
    }

    /// Tensor product of the factors on `set`, little-endian over sorted sites.
    pub fn restricted(&self, set: &SiteSet) -> Array1<Complex64> {
        let dim: usize = set.iter().map(|s| self.dims[s as usize]).product();
        let mut out = Array1::from_elem(dim, Complex64::new(1.0, 0.0));
        let mut stride = 1usize;
        for s in set.iter() {
            let q = self.dims[s as usize];
            let f = &self.factors[s as usize];
            // Multiply the digit-s factor into every amplitude.
            for idx in 0..dim {
                let d = (idx / stride) % q;
                out[idx] *= f[d];
            }
            stride *= q;
        }
        out
    }

    /// Full-space vector (little-endian); guarded by `max_dim`.
    pub fn full_vector(&self, max_dim: usize) -> Result<Array1<Complex64>> {
        let dim: usize = self.dims.iter().product();
        if dim > max_dim {
            return Err(Error::numerical(format!(
                "full product-state vector of dimension {dim} exceeds cap {max_dim}"
            )));
        }
        let all: SiteSet = (0..self.dims.len() as u32).collect();
        Ok(self.restricted(&all))
    }

    /// ⟨self|other⟩ = Π_i ⟨v_i|w_i⟩.
    pub fn overlap(&self, other: &ProductState) -> Result<Complex64> {
        if self.dims != other.dims {
            return Err(Error::validation("product-state dimension mismatch"));
        }
        let mut z = Complex64::new(1.0, 0.0);
        for (a, b) in self.factors.iter().zip(&other.factors) {
            z *= a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum::<Complex64>();
        }
        Ok(z)
    }
}

/// One dense block on a sorted support.
#[derive(Debug, Clone)]
pub struct LocalTerm {
    pub support: SiteSet,
    pub block: Array2<Complex64>,
}

impl LocalTerm {
    pub fn new(support: SiteSet, block: Array2<Complex64>) -> Self {
        LocalTerm { support, block }
    }

    /// Builds a term from single-site factors, e.g. [(i, X), (j, Z)].
    /// Sites are sorted internally; factor order does not matter.
    pub fn from_site_factors(factors: &[(u32, Array2<Complex64>)]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::validation("term needs ≥ 1 site factor"));
        }
        let mut sorted: Vec<&(u32, Array2<Complex64>)> = factors.iter().collect();
        sorted.sort_by_key(|(s, _)| *s);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::validation("duplicate site in term factors"));
            }
        }
        let support: SiteSet = sorted.iter().map(|(s, _)| *s).collect();
        let dims: Vec<usize> = sorted.iter().map(|(_, m)| m.nrows()).collect();
        let dim: usize = dims.iter().product();
        let mut block = Array2::zeros((dim, dim));
        for r in 0..dim {
            for c in 0..dim {
                let mut z = Complex64::new(1.0, 0.0);
                let (mut rr, mut cc) = (r, c);
                for (k, (_, m)) in sorted.iter().enumerate() {
                    let q = dims[k];
                    z *= m[(rr % q, cc % q)];
                    rr /= q;
                    cc /= q;
                    if z == Complex64::new(0.0, 0.0) {
                        break;
                    }
                }
                block[(r, c)] = z;
            }
        }
        Ok(LocalTerm { support, block })
    }

    pub fn dim(&self) -> usize {
        self.block.nrows()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let b = &self.block;
        let scale = 1.0 + b.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        for r in 0..b.nrows() {
            for c in r..b.ncols() {
                if (b[(r, c)] - b[(c, r)].conj()).norm() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Spectral norm ‖H_S‖ (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        crate::quantum::linalg::operator_norm(&self.block)
    }

    /// Tensor with identity: re-express the block on a larger support.
    pub fn embed(&self, into: &SiteSet, dims: &[usize]) -> Result<LocalTerm> {
        if !self.support.is_subset_of(into) {
            return Err(Error::validation("embed target does not contain support"));
        }
        let into_dims: Vec<usize> = into.iter().map(|s| dims[s as usize]).collect();
        let big: usize = into_dims.iter().product();
        // For each target position: Some(position in source) or None (identity leg).
        let map: Vec<Option<usize>> = into.iter().map(|s| self.support.position(s)).collect();
        let src_dims: Vec<usize> =
            self.support.iter().map(|s| dims[s as usize]).collect();
        let mut out = Array2::zeros((big, big));
        let d = self.dim();
        // Walk all (row, col) pairs of the small block times all identity digits.
        let ident_dim: usize = big / d;
        for r in 0..d {
            let rd = digits(r, &src_dims);
            for c in 0..d {
                let v = self.block[(r, c)];
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let cd = digits(c, &src_dims);
                for e in 0..ident_dim {
                    // Compose target digits from source digits + identity digits.
                    let (mut rr, mut cc, mut stride, mut erem) = (0usize, 0usize, 1usize, e);
                    for (pos, m) in map.iter().enumerate() {
                        let q = into_dims[pos];
                        let (dr, dc) = match m {
                            Some(k) => (rd[*k], cd[*k]),
                            None => {
                                let de = erem % q;
                                erem /= q;
                                (de, de)
                            }
                        };
                        rr += dr * stride;
                        cc += dc * stride;
                        stride *= q;
                    }
                    out[(rr, cc)] += v;
                }
            }
        }
        Ok(LocalTerm { support: into.clone(), block: out })
    }

    /// Sandwiches the exterior legs with a product state:
    /// ⟨ψ|_{S∖K} H_S |ψ⟩_{S∖K}, an operator on K = S ∩ keep.
    pub fn contract_exterior(&self, keep: &SiteSet, state: &ProductState) -> LocalTerm {
        let kept: SiteSet = self.support.iter().filter(|&s| keep.contains(s)).collect();
        let src_dims: Vec<usize> =
            self.support.iter().map(|s| state.dims()[s as usize]).collect();
        let kept_dim: usize = kept.iter().map(|s| state.dims()[s as usize]).product();
        let mut out = Array2::zeros((kept_dim, kept_dim));
        let kept_pos: Vec<bool> = self.support.iter().map(|s| kept.contains(s)).collect();
        let ext_factors: Vec<&Array1<Complex64>> =
            self.support.iter().map(|s| state.factor(s)).collect();
        let d = self.dim();
        for r in 0..d {
            let rd = digits(r, &src_dims);
            let (rk, rw) = split_weight(&rd, &kept_pos, &src_dims, &ext_factors);
            if rw == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..d {
                let v = self.block[(r, c)];
                if v == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let cd = digits(c, &src_dims);
                let (ck, cw) = split_weight(&cd, &kept_pos, &src_dims, &ext_factors);
                out[(rk, ck)] += rw.conj() * v * cw;
            }
        }
        LocalTerm { support: kept, block: out }
    }
}

/// Little-endian digit decomposition of `index` for the given dimensions.
pub fn digits(index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len());
    let mut n = index;
    for &q in dims {
        out.push(n % q);
        n /= q;
    }
    out
}

/// Little-endian composition, inverse of [`digits`].
pub fn compose(digits: &[usize], dims: &[usize]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for (d, &q) in digits.iter().zip(dims) {
        idx += d * stride;
        stride *= q;
    }
    idx
}

/// Kept-digit index plus the product of exterior amplitudes for one
/// digit string (helper for exterior contraction).
fn split_weight(
    ds: &[usize],
    kept: &[bool],
    dims: &[usize],
    factors: &[&Array1<Complex64>],
) -> (usize, Complex64) {
    let mut idx = 0usize;
    let mut stride = 1usize;
    let mut w = Complex64::new(1.0, 0.0);
    for (k, &d) in ds.iter().enumerate() {
        if kept[k] {
            idx += d * stride;
            stride *= dims[k];
        } else {
            w *= factors[k][d];
        }
    }
    (idx, w)
}

/// Sum of local terms on a fixed site layout.
#[derive(Debug, Clone)]
pub struct OperatorSum {
    dims: Vec<usize>,
    terms: Vec<LocalTerm>,
    hermitian: bool,
}

impl OperatorSum {
    /// Hermitian operator: every term is checked to 1e−12 (relative).
    pub fn hermitian(dims: Vec<usize>, terms: Vec<LocalTerm>) -> Result<Self> {
        Self::validate(&dims, &terms)?;
        for (k, t) in terms.iter().enumerate() {
            if !t.is_hermitian(HERMITICITY_TOL) {
                return Err(Error::validation(format!("term {k} is not Hermitian")));
            }
        }
        Ok(OperatorSum { dims, terms, hermitian: true })
    }

    /// General (possibly non-Hermitian) operator sum.
    pub fn general(dims: Vec<usize>, terms: Vec<LocalTerm>) -> Result<Self> {
        Self::validate(&dims, &terms)?;
        Ok(OperatorSum { dims, terms, hermitian: false })
    }

    fn validate(dims: &[usize], terms: &[LocalTerm]) -> Result<()> {
        if dims.is_empty() {
            return Err(Error::validation("operator needs ≥ 1 site"));
        }
        if dims.iter().any(|&d| d < 2 || d > 4) {
            return Err(Error::validation("site dimensions must be in 2..=4"));
        }
        for (k, t) in terms.iter().enumerate() {
            if t.support.is_empty() {
                return Err(Error::validation(format!("term {k} has empty support")));
            }
            let max = t.support.as_slice().last().copied().unwrap_or(0) as usize;
            if max >= dims.len() {
                return Err(Error::validation(format!(
                    "term {k} touches site {max} outside the {}-site layout",
                    dims.len()
                )));
            }
            let d: usize = t.support.iter().map(|s| dims[s as usize]).product();
            if t.block.nrows() != d || t.block.ncols() != d {
                return Err(Error::validation(format!(
                    "term {k} block is {}x{}, expected {d}x{d}",
                    t.block.nrows(),
                    t.block.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn is_hermitian_flagged(&self) -> bool {
        self.hermitian
    }

    pub fn full_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Uniform qudit dimension, if the layout has one.
    pub fn uniform_q(&self) -> Option<usize> {
        let q = self.dims[0];
        self.dims.iter().all(|&d| d == q).then_some(q)
    }

    /// ⟨ψ|H|ψ⟩ for a product state (term-by-term contraction).
    pub fn expectation_product(&self, state: &ProductState) -> Result<f64> {
        if state.dims() != self.dims.as_slice() {
            return Err(Error::validation("state/operator dimension mismatch"));
        }
        let mut e = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let v = state.restricted(&t.support);
            e += v
                .iter()
                .enumerate()
                .map(|(r, a)| {
                    a.conj() * t.block.row(r).iter().zip(v.iter()).map(|(b, c)| b * c).sum::<Complex64>()
                })
                .sum::<Complex64>();
        }
        if self.hermitian && e.im.abs() > 1e-9 * (1.0 + e.re.abs()) {
            return Err(Error::numerical(format!(
                "Hermitian expectation has imaginary part {:.3e}",
                e.im
            )));
        }
        Ok(e.re)
    }

    /// ⟨bra|H|ket⟩ for two product states.
    pub fn product_matrix_element(
        &self,
        bra: &ProductState,
        ket: &ProductState,
    ) -> Result<Complex64> {
        if bra.dims() != self.dims.as_slice() || ket.dims() != self.dims.as_slice() {
            return Err(Error::validation("state/operator dimension mismatch"));
        }
        // Per-site overlaps off the support; track zeros so a single
        // orthogonal spectator kills the term without dividing by zero.
        let site_overlap: Vec<Complex64> = (0..self.dims.len() as u32)
            .map(|i| {
                bra.factor(i)
                    .iter()
                    .zip(ket.factor(i).iter())
                    .map(|(a, b)| a.conj() * b)
                    .sum()
            })
            .collect();
        let mut total = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let mut outside = Complex64::new(1.0, 0.0);
            let mut dead = false;
            for (i, z) in site_overlap.iter().enumerate() {
                if t.support.contains(i as u32) {
                    continue;
                }
                if z.norm() < 1e-300 {
                    dead = true;
                    break;
                }
                outside *= z;
            }
            if dead {
                continue;
            }
            let vb = bra.restricted(&t.support);
            let vk = ket.restricted(&t.support);
            let mut me = Complex64::new(0.0, 0.0);
            for r in 0..vb.len() {
                if vb[r].norm() < 1e-300 {
                    continue;
                }
                me += vb[r].conj()
                    * t.block.row(r).iter().zip(vk.iter()).map(|(b, c)| b * c).sum::<Complex64>();
            }
            total += outside * me;
        }
        Ok(total)
    }

    /// Merges another operator into this one (same layout).
    pub fn plus(&self, other: &OperatorSum) -> Result<OperatorSum> {
        if self.dims != other.dims {
            return Err(Error::validation("operator layout mismatch"));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(OperatorSum { dims: self.dims.clone(), terms, hermitian: self.hermitian && other.hermitian })
    }

    pub fn scaled(&self, factor: f64) -> OperatorSum {
        let terms = self
            .terms
            .iter()
            .map(|t| LocalTerm::new(t.support.clone(), t.block.mapv(|z| z * factor)))
            .collect();
        OperatorSum { dims: self.dims.clone(), terms, hermitian: self.hermitian }
    }

    /// Dense matrix on the full space, guarded by `cap`.
    pub fn to_dense(&self, cap: usize) -> Result<Array2<Complex64>> {
        let dim = self.full_dim();
        if dim > cap {
            return Err(Error::numerical(format!(
                "dense assembly of dimension {dim} exceeds cap {cap}"
            )));
        }
        let mut m = Array2::zeros((dim, dim));
        let all: SiteSet = (0..self.dims.len() as u32).collect();
        for t in &self.terms {
            let e = t.embed(&all, &self.dims)?;
            m += &e.block;
        }
        Ok(m)
    }

    /// Content hash of the layout and all blocks (stable across runs).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for &d in &self.dims {
            h.update((d as u64).to_le_bytes());
        }
        for t in &self.terms {
            h.update(b"T");
            for s in t.support.iter() {
                h.update(s.to_le_bytes());
            }
            for z in t.block.iter() {
                h.update(z.re.to_le_bytes());
                h.update(z.im.to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }
}

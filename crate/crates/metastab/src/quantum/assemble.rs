//! Backends that turn an `OperatorSum` into something that acts on vectors.
//!
//! Four regimes, picked by space size and structure:
//!
//! * dense full-space matrix (small spaces, ≤ `DENSE_CAP`),
//! * term-by-term application on the full tensor space (large spaces,
//!   matrix never formed),
//! * compressed sparse rows over a constrained configuration basis,
//! * dense or iterative operators in a symmetry sector.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quantum::basis::{ConstrainedBasis, SectorBasis};
use crate::quantum::operator::{digits, LocalTerm, OperatorSum};
use crate::quantum::DENSE_CAP;

const SPARSE_DROP_TOL: f64 = 1e-15;

/// Anything that can be applied to a state vector.
pub trait LinOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &ArrayView1<Complex64>) -> Array1<Complex64>;
}

/// Dense matrix operator.
pub struct DenseOp {
    pub matrix: Array2<Complex64>,
}

impl LinOp for DenseOp {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &ArrayView1<Complex64>) -> Array1<Complex64> {
        self.matrix.dot(x)
    }
}

/// Full-space dense matrix (guarded by `DENSE_CAP`).
pub fn assemble_dense(op: &OperatorSum) -> Result<DenseOp> {
    Ok(DenseOp { matrix: op.to_dense(DENSE_CAP)? })
}

/// Applies each local term directly to full-space amplitudes; the matrix is
/// never materialized. Exterior configurations of one term touch disjoint
/// index sets, so they are processed in parallel.
pub struct TermwiseOp {
    dims: Vec<usize>,
    dim: usize,
    terms: Vec<PreparedTerm>,
}

struct PreparedTerm {
    /// Full-space offsets of the local basis states of the block.
    offsets: Vec<usize>,
    /// Strides of the sites *not* in the support, for base-point enumeration.
    ext_strides: Vec<usize>,
    ext_dims: Vec<usize>,
    block: Array2<Complex64>,
}

struct SendPtr(*mut Complex64);
// Writers touch disjoint indices (distinct exterior base points).
unsafe impl Send for SendPtr {}
unsafe impl Sync for SendPtr {}

pub fn termwise(op: &OperatorSum) -> Result<TermwiseOp> {
    let dims = op.dims().to_vec();
    let dim = op.full_dim();
    let mut strides = vec![1usize; dims.len()];
    for i in 1..dims.len() {
        strides[i] = strides[i - 1] * dims[i - 1];
    }
    let mut terms = Vec::with_capacity(op.terms().len());
    for t in op.terms() {
        terms.push(prepare_term(t, &dims, &strides));
    }
    Ok(TermwiseOp { dims, dim, terms })
}

fn prepare_term(t: &LocalTerm, dims: &[usize], strides: &[usize]) -> PreparedTerm {
    let sup: Vec<usize> = t.support.iter().map(|s| s as usize).collect();
    let sup_dims: Vec<usize> = sup.iter().map(|&s| dims[s]).collect();
    let block_dim = t.block.nrows();
    let mut offsets = vec![0usize; block_dim];
    for (loc, off) in offsets.iter_mut().enumerate() {
        let d = digits(loc, &sup_dims);
        *off = d.iter().zip(&sup).map(|(&di, &s)| di * strides[s]).sum();
    }
    let mut ext_strides = Vec::new();
    let mut ext_dims = Vec::new();
    for i in 0..dims.len() {
        if !sup.contains(&i) {
            ext_strides.push(strides[i]);
            ext_dims.push(dims[i]);
        }
    }
    PreparedTerm { offsets, ext_strides, ext_dims, block: t.block.clone() }
}

impl TermwiseOp {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn apply_term(&self, t: &PreparedTerm, x: &ArrayView1<Complex64>, out: &mut Array1<Complex64>) {
        let n_ext: usize = t.ext_dims.iter().product();
        let ptr = SendPtr(out.as_mut_ptr());
        let xs = x.as_slice().expect("contiguous input");
        let block_dim = t.block.nrows();
        (0..n_ext).into_par_iter().for_each(|e| {
            let _ = &ptr;
            let mut base = 0usize;
            let mut rem = e;
            for (k, &d) in t.ext_dims.iter().enumerate() {
                base += (rem % d) * t.ext_strides[k];
                rem /= d;
            }
            // Gather the local amplitudes, multiply by the block, scatter.
            let mut local = vec![Complex64::new(0.0, 0.0); block_dim];
            for (c, l) in local.iter_mut().enumerate() {
                *l = xs[base + t.offsets[c]];
            }
            for r in 0..block_dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..block_dim {
                    acc += t.block[[r, c]] * local[c];
                }
                if acc.norm_sqr() > 0.0 {
                    unsafe {
                        *ptr.0.add(base + t.offsets[r]) += acc;
                    }
                }
            }
        });
    }
}

impl LinOp for TermwiseOp {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &ArrayView1<Complex64>) -> Array1<Complex64> {
        let mut out = Array1::zeros(self.dim);
        for t in &self.terms {
            self.apply_term(t, x, &mut out);
        }
        out
    }
}

/// Compressed sparse rows over a constrained configuration basis.
pub struct CsrOp {
    pub basis: Arc<ConstrainedBasis>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<Complex64>,
}

/// Builds the sparse matrix by applying every term to each basis
/// configuration. Fails if a term maps a configuration out of the
/// constrained space (the operator must conserve the constraint).
pub fn constrained_csr(op: &OperatorSum, basis: &Arc<ConstrainedBasis>) -> Result<CsrOp> {
    check_space(op, basis)?;
    let space = basis.space;
    let sup_digits: Vec<Vec<usize>> = op
        .terms()
        .iter()
        .map(|t| t.support.iter().map(|s| s as usize).collect())
        .collect();
    let dim = basis.dim();
    // Column c of the matrix is H applied to configuration c; triplets are
    // then re-sorted by row to form CSR.
    let columns: Vec<Result<Vec<(u32, u32, Complex64)>>> = (0..dim)
        .into_par_iter()
        .map(|c| {
            let cfg = basis.configs()[c];
            let mut entries = Vec::new();
            for (t, sup) in op.terms().iter().zip(&sup_digits) {
                let mut c_loc = 0usize;
                let mut stride = 1usize;
                for &s in sup {
                    c_loc += space.digit(cfg, s) * stride;
                    stride *= space.q;
                }
                for r_loc in 0..t.block.nrows() {
                    let v = t.block[[r_loc, c_loc]];
                    if v.norm() <= SPARSE_DROP_TOL {
                        continue;
                    }
                    let mut target = cfg;
                    let mut rem = r_loc;
                    for &s in sup {
                        target = space.with_digit(target, s, rem % space.q);
                        rem /= space.q;
                    }
                    match basis.index_of(target) {
                        Some(r) => entries.push((r as u32, c as u32, v)),
                        None => {
                            return Err(Error::validation(
                                "operator maps a configuration out of the constrained space",
                            ))
                        }
                    }
                }
            }
            Ok(entries)
        })
        .collect();
    let mut triplets = Vec::new();
    for col in columns {
        triplets.extend(col?);
    }
    triplets.par_sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
    let mut row_ptr = vec![0usize; dim + 1];
    let mut cols = Vec::with_capacity(triplets.len());
    let mut vals: Vec<Complex64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(u32, u32)> = None;
    for (r, c, v) in triplets {
        if last == Some((r, c)) {
            // same (row, col) from different terms: merge
            *vals.last_mut().unwrap() += v;
        } else {
            cols.push(c);
            vals.push(v);
            row_ptr[r as usize + 1] = cols.len();
            last = Some((r, c));
        }
    }
    // forward-fill rows without entries
    for r in 1..=dim {
        if row_ptr[r] < row_ptr[r - 1] {
            row_ptr[r] = row_ptr[r - 1];
        }
    }
    Ok(CsrOp { basis: Arc::clone(basis), row_ptr, cols, vals })
}

fn check_space(op: &OperatorSum, basis: &Arc<ConstrainedBasis>) -> Result<()> {
    let space = basis.space;
    if op.n_sites() != space.n {
        return Err(Error::validation("operator/basis site count mismatch"));
    }
    if op.dims().iter().any(|&d| d != space.q) {
        return Err(Error::validation("operator/basis local dimension mismatch"));
    }
    Ok(())
}

impl CsrOp {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

impl LinOp for CsrOp {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn apply(&self, x: &ArrayView1<Complex64>) -> Array1<Complex64> {
        let xs = x.as_slice().expect("contiguous input");
        let out: Vec<Complex64> = (0..self.dim())
            .into_par_iter()
            .map(|r| {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[k] * xs[self.cols[k] as usize];
                }
                acc
            })
            .collect();
        Array1::from_vec(out)
    }
}

/// Dense matrix of the operator restricted to a symmetry sector.
///
/// Column j is the operator applied to the symmetrized basis vector of
/// representative j, re-projected onto the sector. The operator must commute
/// with the symmetries used to build the sector; this is not checked here
/// (it shows up as a loss of hermiticity, which callers verify).
pub fn sector_dense(op: &OperatorSum, sector: &Arc<SectorBasis>) -> Result<Array2<Complex64>> {
    check_space(op, &sector.base)?;
    let dim = sector.dim();
    if dim > DENSE_CAP {
        return Err(Error::validation(format!(
            "sector dimension {dim} exceeds dense cap {DENSE_CAP}"
        )));
    }
    let space = sector.base.space;
    let sup_digits: Vec<Vec<usize>> = op
        .terms()
        .iter()
        .map(|t| t.support.iter().map(|s| s as usize).collect())
        .collect();
    let cols: Vec<Result<Vec<Complex64>>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut col = vec![Complex64::new(0.0, 0.0); dim];
            let nj = sector.norms()[j];
            // distinct configurations of orbit j with their character sums
            for (cfg, ch_j) in orbit_members(sector, sector.reps()[j]) {
                let w_in = Complex64::new(ch_j as f64 / nj, 0.0);
                for (t, sup) in op.terms().iter().zip(&sup_digits) {
                    let mut c_loc = 0usize;
                    let mut stride = 1usize;
                    for &s in sup {
                        c_loc += space.digit(cfg, s) * stride;
                        stride *= space.q;
                    }
                    for r_loc in 0..t.block.nrows() {
                        let v = t.block[[r_loc, c_loc]];
                        if v.norm() <= SPARSE_DROP_TOL {
                            continue;
                        }
                        let mut target = cfg;
                        let mut rem = r_loc;
                        for &s in sup {
                            target = space.with_digit(target, s, rem % space.q);
                            rem /= space.q;
                        }
                        if !sector.base.constraint.allows(&space, target) {
                            return Err(Error::validation(
                                "operator maps a configuration out of the constrained space",
                            ));
                        }
                        if let Some((i, ch_i)) = sector.member(target) {
                            col[i as usize] +=
                                w_in * v * ch_i as f64 / sector.norms()[i as usize];
                        }
                    }
                }
            }
            Ok(col)
        })
        .collect();
    let mut m = Array2::zeros((dim, dim));
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col?.into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

/// Distinct configurations of one orbit with their character sums.
fn orbit_members(sector: &SectorBasis, rep: u64) -> Vec<(u64, i32)> {
    let space = sector.base.space;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let translations: usize = if sector.momentum.is_some() { space.n } else { 1 };
    for refl in 0..=(sector.inversion.is_some() as usize) {
        let mut g = if refl == 1 { space.invert(rep) } else { rep };
        for _ in 0..translations {
            if seen.insert(g) {
                if let Some((_, ch)) = sector.member(g) {
                    out.push((g, ch));
                }
            }
            g = space.translate(g);
        }
    }
    out
}

/// Iterative sector operator: expand → sparse apply → project.
pub struct SectorOp {
    pub sector: Arc<SectorBasis>,
    inner: CsrOp,
}

pub fn sector_iterative(op: &OperatorSum, sector: &Arc<SectorBasis>) -> Result<SectorOp> {
    let inner = constrained_csr(op, &sector.base)?;
    Ok(SectorOp { sector: Arc::clone(sector), inner })
}

impl LinOp for SectorOp {
    fn dim(&self) -> usize {
        self.sector.dim()
    }

    fn apply(&self, x: &ArrayView1<Complex64>) -> Array1<Complex64> {
        let full = self.sector.expand(&x.to_owned()).expect("sector dim checked");
        let applied = self.inner.apply(&full.view());
        self.sector.project(&applied).expect("basis dim checked")
    }
}

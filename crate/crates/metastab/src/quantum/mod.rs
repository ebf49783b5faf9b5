//! Operators, states, symmetry-reduced bases, eigensolvers, and propagators.
//!
//! Everything downstream works with a few shared conventions:
//!
//! * qudit dimensions are per-site (q ≤ 4 for packed configurations);
//! * composite indices are little-endian: for a region S = {s0 < s1 < ...}
//!   the basis index is Σ_k d_k · Π_{l<k} q_{s_l}, so the smallest site is
//!   the fastest digit, and the same rule with global strides indexes the
//!   full Hilbert space;
//! * local operators are dense blocks on their (sorted) support;
//! * Hermitian diagonalization goes through one wrapper that fixes the
//!   eigenvector convention of the LAPACK backend.

pub mod assemble;
pub mod basis;
pub mod eigen;
pub mod krylov;
pub mod linalg;
pub mod operator;

pub use assemble::{assemble_dense, constrained_csr, sector_dense, sector_iterative, termwise, CsrOp, DenseOp, LinOp, SectorOp, TermwiseOp};
pub use basis::{ConstrainedBasis, Constraint, MomentumK, PackedSpace, SectorBasis};
pub use eigen::{dense_eigh, lanczos_lowest, EigenPairs, LanczosOptions};
pub use krylov::{evolve_krylov, KrylovOptions, KrylovReport};
pub use operator::{LocalTerm, OperatorSum, ProductState};

/// Dense-matrix dimension guard shared by every densifying code path.
pub const DENSE_CAP: usize = 4096;

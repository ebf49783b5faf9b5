//! Numerical laboratory for quantum many-body metastability.
//!
//! A state |ψ0⟩ of a lattice Hamiltonian H is called (Δ,R)-metastable when
//! every local operator O supported on a connected region S with diam S ≤ R
//! either stabilizes |ψ0⟩ or raises its mean energy by at least Δ:
//!
//!   H[|φ⟩_S ⊗ |ψ0⟩_{S^c}] − H[|ψ0⟩] ≥ Δ   for all |φ⟩_S ⊥ |ψ0⟩_S .
//!
//! The crate provides the machinery to measure (Δ,R) pairs by exact
//! diagonalization of windowed Hamiltonians, to split H = H0 + V into a
//! stabilizing part and an extensively small perturbation, to run two flavors
//! of Schrieffer–Wolff transformation (a spectral-filter construction for
//! generic H0 and a syndrome-resolved construction for commuting-projector
//! H0), and to probe the resulting lifetimes with Krylov time evolution.
//!
//! Modules mirror that pipeline: [`lattice`] (graphs, balls, windows),
//! [`quantum`] (operators, symmetry sectors, eigensolvers, propagators),
//! [`models`] (the bundled Hamiltonian families), [`metastability`] (gap
//! scans), [`decomposition`] (H = H0 + V splits), [`swt`] (filter-function
//! Schrieffer–Wolff), [`commuting`] (commuting-projector Schrieffer–Wolff),
//! [`dynamics`] (quenches, overlap spectra, entanglement), and [`cli`]
//! (the command-line front end).

pub mod cli;
pub mod commuting;
pub mod decomposition;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod metastability;
pub mod models;
pub mod quantum;
pub mod swt;

pub use error::{Error, Result};

//! Packed configurations, constrained spaces, and symmetry sectors.
//!
//! Configurations are packed little-endian into one 64-bit word: 1 bit per
//! site for qubits, 2 bits per site for q ∈ {3,4}. The packed value is used
//! as the canonical key for lookups and orbit bookkeeping.
//!
//! A sector basis collects orbit representatives under translation (by one
//! site, on rings) and optionally spatial inversion, with real characters:
//! momentum k ∈ {0, π} and inversion eigenvalue ±1. A basis vector is
//!
//!   |b_c⟩ = (1/√N_c) Σ_g χ(g) |g·c⟩ ,
//!
//! which is dropped when the character sum cancels on the orbit. All
//! coefficients stay real integers, so sector Hamiltonians of real models
//! stay real symmetric.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array1;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quantum::operator::ProductState;

/// Bit layout for packed configurations of `n` q-dimensional sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackedSpace {
    pub n: usize,
    pub q: usize,
    bits: u32,
}

impl PackedSpace {
    pub fn new(n: usize, q: usize) -> Result<Self> {
        if !(2..=4).contains(&q) {
            return Err(Error::validation(format!("packed space needs q in 2..=4, got {q}")));
        }
        let bits = if q == 2 { 1 } else { 2 };
        if n * bits as usize > 62 {
            return Err(Error::validation(format!(
                "{n} sites at q={q} exceed the 62-bit packed budget"
            )));
        }
        Ok(PackedSpace { n, q, bits })
    }

    #[inline]
    pub fn digit(&self, cfg: u64, site: usize) -> usize {
        ((cfg >> (self.bits as usize * site)) & ((1 << self.bits) - 1)) as usize
    }

    #[inline]
    pub fn with_digit(&self, cfg: u64, site: usize, d: usize) -> u64 {
        let shift = self.bits as usize * site;
        let mask = ((1u64 << self.bits) - 1) << shift;
        (cfg & !mask) | ((d as u64) << shift)
    }

    /// Translation by one site: digit(i) → digit(i+1 mod n).
    pub fn translate(&self, cfg: u64) -> u64 {
        let b = self.bits as usize;
        let total = b * self.n;
        let body = cfg << b;
        let wrap = cfg >> (total - b);
        (body | wrap) & ((1u64 << total) - 1)
    }

    /// Spatial inversion i → n−1−i.
    pub fn invert(&self, cfg: u64) -> u64 {
        let mut out = 0u64;
        for i in 0..self.n {
            out = self.with_digit(out, self.n - 1 - i, self.digit(cfg, i));
        }
        out
    }

    /// Full-space (mixed-radix) index of a packed configuration.
    pub fn dense_index(&self, cfg: u64) -> usize {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for i in 0..self.n {
            idx += self.digit(cfg, i) * stride;
            stride *= self.q;
        }
        idx
    }

    /// Packs explicit digits.
    pub fn pack(&self, digits: &[usize]) -> u64 {
        let mut cfg = 0u64;
        for (i, &d) in digits.iter().enumerate() {
            cfg = self.with_digit(cfg, i, d);
        }
        cfg
    }

    /// ⟨cfg|ψ⟩ for a product state.
    pub fn product_amplitude(&self, cfg: u64, state: &ProductState) -> Complex64 {
        let mut z = Complex64::new(1.0, 0.0);
        for i in 0..self.n {
            z *= state.factor(i as u32)[self.digit(cfg, i)];
            if z.norm_sqr() == 0.0 {
                break;
            }
        }
        z
    }
}

/// Constraint on the configuration space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Full q^n space.
    None,
    /// No two adjacent 1-digits (Rydberg blockade); `periodic` closes the ring.
    NoAdjacentOnes { periodic: bool },
}

impl Constraint {
    pub fn allows(&self, space: &PackedSpace, cfg: u64) -> bool {
        match *self {
            Constraint::None => true,
            Constraint::NoAdjacentOnes { periodic } => {
                for i in 0..space.n - 1 {
                    if space.digit(cfg, i) == 1 && space.digit(cfg, i + 1) == 1 {
                        return false;
                    }
                }
                !(periodic && space.digit(cfg, space.n - 1) == 1 && space.digit(cfg, 0) == 1)
            }
        }
    }
}

/// Sorted list of admissible configurations with binary-search lookup.
#[derive(Debug, Clone)]
pub struct ConstrainedBasis {
    pub space: PackedSpace,
    pub constraint: Constraint,
    configs: Vec<u64>,
}

impl ConstrainedBasis {
    pub fn new(space: PackedSpace, constraint: Constraint) -> Result<Arc<Self>> {
        let mut configs = Vec::new();
        let mut partial = vec![0u64];
        // Site-by-site odometer with early pruning of the open-chain part of
        // the constraint; the wrap bond is checked at the end.
        for site in 0..space.n {
            let mut next = Vec::with_capacity(partial.len() * space.q);
            for &cfg in &partial {
                for d in 0..space.q {
                    let c = space.with_digit(cfg, site, d);
                    let ok = match constraint {
                        Constraint::None => true,
                        Constraint::NoAdjacentOnes { .. } => {
                            !(site > 0 && d == 1 && space.digit(c, site - 1) == 1)
                        }
                    };
                    if ok {
                        next.push(c);
                    }
                }
            }
            partial = next;
        }
        for cfg in partial {
            if constraint.allows(&space, cfg) {
                configs.push(cfg);
            }
        }
        configs.sort_unstable();
        if configs.is_empty() {
            return Err(Error::validation("constraint admits no configurations"));
        }
        Ok(Arc::new(ConstrainedBasis { space, constraint, configs }))
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[u64] {
        &self.configs
    }

    pub fn index_of(&self, cfg: u64) -> Option<usize> {
        self.configs.binary_search(&cfg).ok()
    }

    /// Amplitudes ⟨cfg|ψ⟩ of a product state on this basis.
    pub fn project_product(&self, state: &ProductState) -> Result<Array1<Complex64>> {
        if state.n_sites() != self.space.n {
            return Err(Error::validation("state size mismatch"));
        }
        Ok(Array1::from_iter(
            self.configs.iter().map(|&c| self.space.product_amplitude(c, state)),
        ))
    }
}

/// Real momentum label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumK {
    Zero,
    Pi,
}

impl MomentumK {
    fn phase(&self, steps: usize) -> i32 {
        match self {
            MomentumK::Zero => 1,
            MomentumK::Pi => {
                if steps % 2 == 0 {
                    1
                } else {
                    -1
                }
            }
        }
    }
}

/// Symmetry-reduced basis over a (possibly constrained) ring.
#[derive(Debug)]
pub struct SectorBasis {
    pub base: Arc<ConstrainedBasis>,
    pub momentum: Option<MomentumK>,
    pub inversion: Option<i8>,
    reps: Vec<u64>,
    norms: Vec<f64>,
    /// cfg → (representative index, integer character sum on that cfg).
    members: HashMap<u64, (u32, i32)>,
}

impl SectorBasis {
    /// Builds the sector. Momentum requires a ring (the constraint, if any,
    /// must be the periodic flavor); k = π additionally requires even n.
    pub fn build(
        base: Arc<ConstrainedBasis>,
        momentum: Option<MomentumK>,
        inversion: Option<i8>,
    ) -> Result<Arc<Self>> {
        let space = base.space;
        if momentum == Some(MomentumK::Pi) && space.n % 2 != 0 {
            return Err(Error::validation("k = π needs an even ring"));
        }
        if let Some(s) = inversion {
            if s != 1 && s != -1 {
                return Err(Error::validation("inversion sign must be ±1"));
            }
        }
        let mut reps = Vec::new();
        let mut norms = Vec::new();
        let mut members: HashMap<u64, (u32, i32)> = HashMap::new();
        let mut visited: HashMap<u64, ()> = HashMap::new();
        for &cfg in base.configs() {
            if visited.contains_key(&cfg) {
                continue;
            }
            // Accumulate character sums over the whole symmetry group orbit.
            let mut coeff: HashMap<u64, i32> = HashMap::new();
            let translations: usize = if momentum.is_some() { space.n } else { 1 };
            for refl in 0..=(inversion.is_some() as usize) {
                let mut g = if refl == 1 { space.invert(cfg) } else { cfg };
                let refl_sign = if refl == 1 { inversion.unwrap() as i32 } else { 1 };
                for a in 0..translations {
                    let chi = refl_sign * momentum.map_or(1, |k| k.phase(a));
                    *coeff.entry(g).or_insert(0) += chi;
                    g = space.translate(g);
                }
            }
            for &g in coeff.keys() {
                visited.insert(g, ());
            }
            let norm_sq: i64 = coeff.values().map(|&c| (c as i64) * (c as i64)).sum();
            if norm_sq == 0 {
                continue; // character sum cancels: orbit absent in this sector
            }
            let rep = *coeff.keys().min().unwrap();
            let idx = reps.len() as u32;
            reps.push(rep);
            norms.push((norm_sq as f64).sqrt());
            for (g, &ch) in coeff.iter() {
                if ch != 0 {
                    members.insert(*g, (idx, ch));
                }
            }
        }
        if reps.is_empty() {
            return Err(Error::validation("sector is empty"));
        }
        Ok(Arc::new(SectorBasis { base, momentum, inversion, reps, norms, members }))
    }

    pub fn dim(&self) -> usize {
        self.reps.len()
    }

    pub fn reps(&self) -> &[u64] {
        &self.reps
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn member(&self, cfg: u64) -> Option<(u32, i32)> {
        self.members.get(&cfg).copied()
    }

    /// Human-readable sector label, e.g. "k=0,I=+1".
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        match self.momentum {
            Some(MomentumK::Zero) => parts.push("k=0".to_string()),
            Some(MomentumK::Pi) => parts.push("k=pi".to_string()),
            None => {}
        }
        if let Some(s) = self.inversion {
            parts.push(format!("I={}", if s > 0 { "+1" } else { "-1" }));
        }
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join(",")
        }
    }

    /// Sector amplitudes ⟨b_r|ψ⟩ of a product state.
    pub fn project_product(&self, state: &ProductState) -> Result<Array1<Complex64>> {
        if state.n_sites() != self.base.space.n {
            return Err(Error::validation("state size mismatch"));
        }
        let space = self.base.space;
        let mut out = Array1::zeros(self.dim());
        for (i, &rep) in self.reps.iter().enumerate() {
            // ⟨b_r|ψ⟩ = Σ_cfg coeff(cfg)/N · ⟨cfg|ψ⟩; walk the orbit of rep.
            let mut acc = Complex64::new(0.0, 0.0);
            let mut seen: HashMap<u64, ()> = HashMap::new();
            let translations: usize = if self.momentum.is_some() { space.n } else { 1 };
            for refl in 0..=(self.inversion.is_some() as usize) {
                let mut g = if refl == 1 { space.invert(rep) } else { rep };
                for _ in 0..translations {
                    if seen.insert(g, ()).is_none() {
                        if let Some((idx, ch)) = self.member(g) {
                            debug_assert_eq!(idx as usize, i);
                            acc += Complex64::new(ch as f64, 0.0)
                                * space.product_amplitude(g, state);
                        }
                    }
                    g = space.translate(g);
                }
            }
            out[i] = acc / self.norms[i];
        }
        Ok(out)
    }

    /// Expands sector amplitudes to the underlying constrained basis.
    pub fn expand(&self, v: &Array1<Complex64>) -> Result<Array1<Complex64>> {
        if v.len() != self.dim() {
            return Err(Error::validation("sector vector length mismatch"));
        }
        let mut out = Array1::zeros(self.base.dim());
        for (j, &cfg) in self.base.configs().iter().enumerate() {
            if let Some((idx, ch)) = self.member(cfg) {
                out[j] = v[idx as usize] * (ch as f64) / self.norms[idx as usize];
            }
        }
        Ok(out)
    }

    /// Projects constrained-basis amplitudes into the sector.
    pub fn project(&self, amps: &Array1<Complex64>) -> Result<Array1<Complex64>> {
        if amps.len() != self.base.dim() {
            return Err(Error::validation("constrained vector length mismatch"));
        }
        let mut out = Array1::zeros(self.dim());
        for (j, &cfg) in self.base.configs().iter().enumerate() {
            if let Some((idx, ch)) = self.member(cfg) {
                out[idx as usize] += amps[j] * (ch as f64) / self.norms[idx as usize];
            }
        }
        Ok(out)
    }
}

//! Lattice graphs, regions, and the growth constants that control locality.
//!
//! Sites live on a chain or a square grid (open or periodic). Distances are
//! graph distances, so on the square lattice d(i,j) is the ℓ1 (Manhattan)
//! metric. A region S is a set of sites; the quantities used throughout are
//!
//!   diam S           = max_{i,j ∈ S} d(i,j),
//!   ∂S               = { i ∈ S : d(i, S^c) = 1 },
//!   B(S, r)          = { i : d(i, S) ≤ r },
//!
//! and the empirical growth constant c_d, the smallest c with
//! |∂S| ≤ c·max(1, diam S)^{d−1} and |S| ≤ c·max(1, diam S)^d over connected
//! subsets, together with the reverse (isoperimetric) constant c′_d with
//! |∂S| ≥ c′_d·|S|^{1−1/d}.
//!
//! Maximal windows of diameter r are the regions a gap scan needs to visit:
//! on a chain they are intervals of r+1 sites; on the square lattice they are
//! diamonds, best seen in rotated coordinates u = x+y, v = x−y where the ℓ1
//! metric becomes ℓ∞ and a maximal window is a coordinate box
//! u0 ≤ u ≤ u0+r, v0 ≤ v ≤ v0+r (clipped by the boundary of a finite grid).

use crate::error::{Error, Result};

/// Distance matrices are cached up to this many sites; larger lattices fall
/// back to a BFS per query.
const DIST_CACHE_CAP: usize = 4096;

/// Sorted, duplicate-free set of site indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteSet(Vec<u32>);

impl SiteSet {
    /// Builds a set from arbitrary indices, sorting and deduplicating.
    pub fn new(mut sites: Vec<u32>) -> Self {
        sites.sort_unstable();
        sites.dedup();
        SiteSet(sites)
    }

    /// Contiguous range [a, b).
    pub fn interval(a: u32, b: u32) -> Self {
        SiteSet((a..b).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, site: u32) -> bool {
        self.0.binary_search(&site).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    /// Position of `site` within the sorted order, if present.
    pub fn position(&self, site: u32) -> Option<usize> {
        self.0.binary_search(&site).ok()
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        SiteSet::new(v)
    }

    pub fn is_subset_of(&self, other: &SiteSet) -> bool {
        self.0.iter().all(|&s| other.contains(s))
    }

    pub fn intersects(&self, other: &SiteSet) -> bool {
        // Merge walk over the two sorted lists.
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    pub fn difference(&self, other: &SiteSet) -> SiteSet {
        SiteSet(self.0.iter().copied().filter(|&s| !other.contains(s)).collect())
    }
}

impl FromIterator<u32> for SiteSet {
    fn from_iter<T: IntoIterator<Item = u32>>(iter: T) -> Self {
        SiteSet::new(iter.into_iter().collect())
    }
}

/// Lattice topology tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeKind {
    Chain { n: usize, periodic: bool },
    Square { lx: usize, ly: usize, periodic: bool },
}

/// Site graph with cached BFS distances.
#[derive(Debug, Clone)]
pub struct Lattice {
    kind: LatticeKind,
    n_sites: usize,
    adj: Vec<Vec<u32>>,
    coords: Vec<[i32; 2]>,
    dist: Option<Vec<u16>>,
}

/// Empirical growth constants over connected subsets up to a size cap.
#[derive(Debug, Clone, Copy)]
pub struct GrowthConstants {
    /// Smallest c with |∂S| ≤ c·max(1,diam)^{d−1} and |S| ≤ c·max(1,diam)^d.
    pub c_d: f64,
    /// Largest c′ with |∂S| ≥ c′·|S|^{1−1/d}.
    pub c_lower: f64,
    /// Subset size cap the constants were measured at.
    pub size_cap: usize,
}

impl Lattice {
    /// Open or periodic chain of `n` sites.
    pub fn chain(n: usize, periodic: bool) -> Result<Lattice> {
        if n < 2 {
            return Err(Error::validation(format!("chain needs ≥ 2 sites, got {n}")));
        }
        if periodic && n < 3 {
            return Err(Error::validation("periodic chain needs ≥ 3 sites"));
        }
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            if i + 1 < n {
                adj[i].push((i + 1) as u32);
                adj[i + 1].push(i as u32);
            }
        }
        if periodic {
            adj[0].push((n - 1) as u32);
            adj[n - 1].push(0);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        let coords = (0..n).map(|i| [i as i32, 0]).collect();
        Ok(Lattice::finish(LatticeKind::Chain { n, periodic }, n, adj, coords))
    }

    /// Square grid of `lx × ly` sites, row-major (site = x + lx·y).
    pub fn square(lx: usize, ly: usize, periodic: bool) -> Result<Lattice> {
        if lx < 1 || ly < 1 || lx * ly < 2 {
            return Err(Error::validation(format!("square {lx}x{ly} too small")));
        }
        if periodic && (lx < 3 || ly < 3) {
            return Err(Error::validation("periodic square needs ≥ 3 sites per side"));
        }
        let n = lx * ly;
        let idx = |x: usize, y: usize| (x + lx * y) as u32;
        let mut adj = vec![Vec::new(); n];
        for y in 0..ly {
            for x in 0..lx {
                let i = idx(x, y) as usize;
                if x + 1 < lx {
                    adj[i].push(idx(x + 1, y));
                    adj[idx(x + 1, y) as usize].push(i as u32);
                } else if periodic {
                    adj[i].push(idx(0, y));
                    adj[idx(0, y) as usize].push(i as u32);
                }
                if y + 1 < ly {
                    adj[i].push(idx(x, y + 1));
                    adj[idx(x, y + 1) as usize].push(i as u32);
                } else if periodic {
                    adj[i].push(idx(x, 0));
                    adj[idx(x, 0) as usize].push(i as u32);
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let coords = (0..n).map(|i| [(i % lx) as i32, (i / lx) as i32]).collect();
        Ok(Lattice::finish(LatticeKind::Square { lx, ly, periodic }, n, adj, coords))
    }

    fn finish(kind: LatticeKind, n: usize, adj: Vec<Vec<u32>>, coords: Vec<[i32; 2]>) -> Lattice {
        let mut lat = Lattice { kind, n_sites: n, adj, coords, dist: None };
        if n <= DIST_CACHE_CAP {
            let mut dist = vec![0u16; n * n];
            for s in 0..n {
                let row = lat.bfs_from(s);
                for (j, &d) in row.iter().enumerate() {
                    dist[s * n + j] = d as u16;
                }
            }
            lat.dist = Some(dist);
        }
        lat
    }

    fn bfs_from(&self, s: usize) -> Vec<usize> {
        let mut d = vec![usize::MAX; self.n_sites];
        let mut queue = std::collections::VecDeque::new();
        d[s] = 0;
        queue.push_back(s as u32);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u as usize] {
                if d[v as usize] == usize::MAX {
                    d[v as usize] = d[u as usize] + 1;
                    queue.push_back(v);
                }
            }
        }
        d
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Spatial dimension d (1 for chains, 2 for grids).
    pub fn dim(&self) -> usize {
        match self.kind {
            LatticeKind::Chain { .. } => 1,
            LatticeKind::Square { .. } => 2,
        }
    }

    pub fn is_periodic(&self) -> bool {
        match self.kind {
            LatticeKind::Chain { periodic, .. } | LatticeKind::Square { periodic, .. } => periodic,
        }
    }

    pub fn neighbors(&self, site: u32) -> &[u32] {
        &self.adj[site as usize]
    }

    /// (x, y) grid coordinates of a site (y = 0 on chains).
    pub fn coords(&self, site: u32) -> [i32; 2] {
        self.coords[site as usize]
    }

    /// Graph distance between two sites.
    pub fn distance(&self, i: u32, j: u32) -> usize {
        if let Some(dist) = &self.dist {
            dist[i as usize * self.n_sites + j as usize] as usize
        } else {
            self.bfs_from(i as usize)[j as usize]
        }
    }

    /// Graph distance from a site to a region, d(i, S) = min_{j∈S} d(i,j).
    pub fn set_distance(&self, i: u32, set: &SiteSet) -> usize {
        set.iter().map(|j| self.distance(i, j)).min().unwrap_or(usize::MAX)
    }

    /// diam S = max pairwise graph distance (0 for singletons).
    pub fn diameter(&self, set: &SiteSet) -> Result<usize> {
        if set.is_empty() {
            return Err(Error::validation("diameter of empty set"));
        }
        self.check_sites(set)?;
        let mut d = 0;
        for (a, i) in set.iter().enumerate() {
            for j in set.iter().skip(a + 1) {
                d = d.max(self.distance(i, j));
            }
        }
        Ok(d)
    }

    /// Whether S induces a connected subgraph.
    pub fn is_connected_set(&self, set: &SiteSet) -> bool {
        if set.is_empty() {
            return false;
        }
        let mut seen = vec![false; set.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(p) = stack.pop() {
            let site = set.as_slice()[p];
            for &nb in self.neighbors(site) {
                if let Some(q) = set.position(nb) {
                    if !seen[q] {
                        seen[q] = true;
                        count += 1;
                        stack.push(q);
                    }
                }
            }
        }
        count == set.len()
    }

    /// Inner boundary ∂S = sites of S adjacent to the complement.
    pub fn boundary(&self, set: &SiteSet) -> SiteSet {
        set.iter()
            .filter(|&i| self.neighbors(i).iter().any(|&nb| !set.contains(nb)))
            .collect()
    }

    /// Ball B(S, r) = all sites within graph distance r of S.
    pub fn ball(&self, set: &SiteSet, r: usize) -> SiteSet {
        // Multi-source BFS out to depth r.
        let mut d = vec![usize::MAX; self.n_sites];
        let mut queue = std::collections::VecDeque::new();
        for i in set.iter() {
            d[i as usize] = 0;
            queue.push_back(i);
        }
        let mut out: Vec<u32> = set.iter().collect();
        while let Some(u) = queue.pop_front() {
            if d[u as usize] == r {
                continue;
            }
            for &v in self.neighbors(u) {
                if d[v as usize] == usize::MAX {
                    d[v as usize] = d[u as usize] + 1;
                    out.push(v);
                    queue.push_back(v);
                }
            }
        }
        SiteSet::new(out)
    }

    fn check_sites(&self, set: &SiteSet) -> Result<()> {
        if let Some(&max) = set.as_slice().last() {
            if max as usize >= self.n_sites {
                return Err(Error::validation(format!(
                    "site {max} out of range for lattice of {} sites",
                    self.n_sites
                )));
            }
        }
        Ok(())
    }

    /// All connected subsets with 1 ≤ |S| ≤ `max_size`, each exactly once.
    ///
    /// Canonical growth: a subset is discovered from its smallest site only,
    /// and a site retired at one branching level stays excluded from all
    /// later branches of that level, so no subset is ever revisited.
    pub fn enumerate_connected_subsets(&self, max_size: usize) -> Result<Vec<SiteSet>> {
        if max_size == 0 {
            return Err(Error::validation("max_size must be ≥ 1"));
        }
        let mut out = Vec::new();
        let mut seen = vec![false; self.n_sites];
        for s in 0..self.n_sites as u32 {
            // Sites below the anchor are permanently excluded in this pass.
            for x in &mut seen {
                *x = false;
            }
            for low in 0..=s {
                seen[low as usize] = true;
            }
            let mut current = vec![s];
            out.push(SiteSet(current.clone()));
            if max_size == 1 {
                continue;
            }
            let untried: Vec<u32> =
                self.neighbors(s).iter().copied().filter(|&v| v > s).collect();
            for &v in &untried {
                seen[v as usize] = true;
            }
            self.grow(&mut current, &untried, &mut seen, max_size, &mut out);
        }
        Ok(out)
    }

    fn grow(
        &self,
        current: &mut Vec<u32>,
        untried: &[u32],
        seen: &mut [bool],
        max_size: usize,
        out: &mut Vec<SiteSet>,
    ) {
        for (k, &v) in untried.iter().enumerate() {
            current.push(v);
            out.push(SiteSet::new(current.clone()));
            if current.len() < max_size {
                let mut next: Vec<u32> = untried[k + 1..].to_vec();
                let added: Vec<u32> = self
                    .neighbors(v)
                    .iter()
                    .copied()
                    .filter(|&x| !seen[x as usize])
                    .collect();
                for &x in &added {
                    seen[x as usize] = true;
                    next.push(x);
                }
                self.grow(current, &next, seen, max_size, out);
                for &x in &added {
                    seen[x as usize] = false;
                }
            }
            current.pop();
            // v stays marked: later siblings must not re-add it.
        }
    }

    /// Maximal connected windows of diameter ≤ r (every smaller region embeds
    /// into one of these, so a gap scan over them covers all of diam ≤ r).
    ///
    /// Chains: intervals (arcs) of r+1 sites. Square grids: diamonds, i.e.
    /// boxes in rotated coordinates u = x+y, v = x−y, clipped to the grid and
    /// pruned of clippings contained in other windows.
    pub fn maximal_windows(&self, r: usize) -> Result<Vec<SiteSet>> {
        match self.kind {
            LatticeKind::Chain { n, periodic } => {
                if !periodic {
                    if r + 1 > n {
                        return Err(Error::validation(format!(
                            "diameter {r} exceeds open chain of {n} sites"
                        )));
                    }
                    Ok((0..n - r).map(|a| SiteSet::interval(a as u32, (a + r + 1) as u32)).collect())
                } else {
                    // On a ring an arc of r+1 sites has diameter r only while
                    // the shortcut around the back is longer.
                    if 2 * (r + 1) > n {
                        return Err(Error::validation(format!(
                            "diameter {r} window does not embed in a ring of {n} sites"
                        )));
                    }
                    Ok((0..n)
                        .map(|a| (0..=r).map(|k| ((a + k) % n) as u32).collect())
                        .collect())
                }
            }
            LatticeKind::Square { lx, ly, periodic } => {
                if periodic {
                    return Err(Error::validation(
                        "maximal windows on periodic square lattices are not supported",
                    ));
                }
                let ri = r as i32;
                let (lxi, lyi) = (lx as i32, ly as i32);
                let mut cands: Vec<SiteSet> = Vec::new();
                // u = x+y ∈ [0, lx+ly−2], v = x−y ∈ [−(ly−1), lx−1].
                for u0 in -ri..=(lxi + lyi - 2) {
                    for v0 in (-(lyi - 1) - ri)..=(lxi - 1) {
                        let mut sites = Vec::new();
                        for y in 0..lyi {
                            for x in 0..lxi {
                                let (u, v) = (x + y, x - y);
                                if u >= u0 && u <= u0 + ri && v >= v0 && v <= v0 + ri {
                                    sites.push((x + lxi * y) as u32);
                                }
                            }
                        }
                        if !sites.is_empty() {
                            cands.push(SiteSet::new(sites));
                        }
                    }
                }
                cands.sort();
                cands.dedup();
                // Clipped diamonds near edges may sit inside a shifted one.
                let keep: Vec<SiteSet> = cands
                    .iter()
                    .filter(|s| {
                        !cands.iter().any(|t| t.len() > s.len() && s.is_subset_of(t))
                    })
                    .cloned()
                    .collect();
                Ok(keep)
            }
        }
    }

    /// Measures c_d and the reverse boundary constant c′_d by enumeration.
    pub fn growth_constants(&self, size_cap: usize) -> Result<GrowthConstants> {
        if size_cap >= self.n_sites {
            return Err(Error::validation(
                "size cap must be below the lattice size (full lattice has empty boundary)",
            ));
        }
        let d = self.dim() as f64;
        let subsets = self.enumerate_connected_subsets(size_cap)?;
        let mut c_d: f64 = 0.0;
        let mut c_lower = f64::INFINITY;
        for s in &subsets {
            let diam = self.diameter(s)? as f64;
            let base = diam.max(1.0);
            let vol = s.len() as f64;
            let bnd = self.boundary(s).len() as f64;
            c_d = c_d.max(vol / base.powf(d)).max(bnd / base.powf(d - 1.0));
            c_lower = c_lower.min(bnd / vol.powf(1.0 - 1.0 / d));
        }
        Ok(GrowthConstants { c_d, c_lower, size_cap })
    }
}

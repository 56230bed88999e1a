//! Finite lattice domains: interior/boundary site sets, oriented bonds,
//! adjacency, and erosions `D(r)`.
//!
//! A domain is a finite subgraph of `Z^2` with a distinguished interior.
//! The rectangle and disk constructors produce full sub-lattices whose
//! boundary is the edge-adjacent exterior ring (no diagonal corners).
//! `from_parts` additionally admits lower-dimensional test domains such as
//! the path graph, whose interior sites have degree two.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use thiserror::Error;

/// A lattice site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteIndex {
    pub x: i32,
    pub y: i32,
}

impl SiteIndex {
    pub const fn new(x: i32, y: i32) -> Self {
        SiteIndex { x, y }
    }

    pub fn l1_dist(&self, other: &SiteIndex) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    fn shifted(&self, dx: i32, dy: i32) -> SiteIndex {
        SiteIndex::new(self.x + dx, self.y + dy)
    }
}

/// An undirected nearest-neighbor bond stored in canonical orientation:
/// `to - from` is `(1,0)` or `(0,1)`. All gradient signs derive from it,
/// `grad h(b) = h(to) - h(from)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub from: SiteIndex,
    pub to: SiteIndex,
}

impl Bond {
    pub fn horizontal(&self) -> bool {
        self.to.x == self.from.x + 1
    }
}

/// Where a site lives inside a domain's dense storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteRef {
    Interior(usize),
    Boundary(usize),
}

/// One adjacency record of an interior site.
#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub site: SiteRef,
    /// Index into `bonds`.
    pub bond: usize,
    /// True when the owning site is the bond's `from` endpoint, so the
    /// gradient toward the neighbor is `h(neighbor) - h(self)`.
    pub outward: bool,
}

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("domain dimensions must be positive")]
    EmptyDimensions,
    #[error("domain has empty interior")]
    EmptyInterior,
    #[error("interior is not edge-connected")]
    Disconnected,
    #[error("boundary site {0:?} overlaps interior")]
    BoundaryOverlap(SiteIndex),
    #[error("boundary site {0:?} is not adjacent to the interior")]
    DanglingBoundary(SiteIndex),
    #[error("invalid domain JSON: {0}")]
    BadJson(String),
}

/// A finite lattice domain with dense row-major site indexing.
#[derive(Debug, Clone)]
pub struct LatticeDomain {
    interior: Vec<SiteIndex>,
    boundary: Vec<SiteIndex>,
    bonds: Vec<Bond>,
    bond_refs: Vec<(SiteRef, SiteRef)>,
    boundary_bonds: Vec<usize>,
    adj_offsets: Vec<usize>,
    adj: Vec<Neighbor>,
    boundary_adj: Vec<Vec<(usize, usize)>>,
    site_lookup: HashMap<SiteIndex, SiteRef>,
    dist_to_boundary: Vec<u32>,
    connected: bool,
    ring_boundary: bool,
}

#[derive(Serialize, Deserialize)]
struct DomainJson {
    interior: Vec<(i32, i32)>,
    boundary: Vec<(i32, i32)>,
}

const DIRS: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

impl LatticeDomain {
    /// Width x height block of interior sites with exterior-ring boundary.
    pub fn rectangle(width: u32, height: u32) -> Result<Arc<Self>, LatticeError> {
        if width == 0 || height == 0 {
            return Err(LatticeError::EmptyDimensions);
        }
        let mut interior = Vec::with_capacity((width * height) as usize);
        for y in 0..height as i32 {
            for x in 0..width as i32 {
                interior.push(SiteIndex::new(x, y));
            }
        }
        Self::from_interior(interior)
    }

    /// Integer sites strictly inside the scaled disk `|z| < radius * scale`.
    pub fn disk(radius: f64, scale: u32) -> Result<Arc<Self>, LatticeError> {
        if !radius.is_finite() || radius <= 0.0 || scale == 0 {
            return Err(LatticeError::EmptyDimensions);
        }
        let r = radius * f64::from(scale);
        let r2 = r * r;
        let bound = r.ceil() as i32;
        let mut interior = Vec::new();
        for y in -bound..=bound {
            for x in -bound..=bound {
                if f64::from(x * x + y * y) < r2 {
                    interior.push(SiteIndex::new(x, y));
                }
            }
        }
        if interior.is_empty() {
            return Err(LatticeError::EmptyInterior);
        }
        Self::from_interior(interior)
    }

    /// One-dimensional path with `n` interior sites `(1,0)..(n,0)` and the
    /// two end sites as boundary. Interior degree is two; used as the exact
    /// tridiagonal reference domain.
    pub fn path(n: u32) -> Result<Arc<Self>, LatticeError> {
        if n == 0 {
            return Err(LatticeError::EmptyDimensions);
        }
        let interior: Vec<_> = (1..=n as i32).map(|x| SiteIndex::new(x, 0)).collect();
        let boundary = vec![SiteIndex::new(0, 0), SiteIndex::new(n as i32 + 1, 0)];
        Self::from_parts(interior, boundary)
    }

    /// Build from an interior set; the boundary is the full edge-adjacent
    /// exterior ring and the bonds are every nearest-neighbor pair with at
    /// least one interior endpoint.
    pub fn from_interior(interior: Vec<SiteIndex>) -> Result<Arc<Self>, LatticeError> {
        let set: HashSet<SiteIndex> = interior.iter().copied().collect();
        if set.is_empty() {
            return Err(LatticeError::EmptyInterior);
        }
        let mut ring = HashSet::new();
        for s in &set {
            for (dx, dy) in DIRS {
                let z = s.shifted(dx, dy);
                if !set.contains(&z) {
                    ring.insert(z);
                }
            }
        }
        let boundary: Vec<_> = ring.into_iter().collect();
        let dom = Self::assemble(interior, boundary, true)?;
        if !dom.connected {
            return Err(LatticeError::Disconnected);
        }
        Ok(Arc::new(dom))
    }

    /// Build from explicit interior and boundary sets. The boundary may be a
    /// proper subset of the exterior ring (path graphs); every boundary site
    /// must still touch the interior.
    pub fn from_parts(
        interior: Vec<SiteIndex>,
        boundary: Vec<SiteIndex>,
    ) -> Result<Arc<Self>, LatticeError> {
        let dom = Self::assemble(interior, boundary, false)?;
        if !dom.connected {
            return Err(LatticeError::Disconnected);
        }
        Ok(Arc::new(dom))
    }

    /// As `from_interior` but tolerating a disconnected interior; used for
    /// slit-domain solves where a traced path may pinch off pockets.
    pub(crate) fn from_interior_components(
        interior: Vec<SiteIndex>,
    ) -> Result<Arc<Self>, LatticeError> {
        let set: HashSet<SiteIndex> = interior.iter().copied().collect();
        if set.is_empty() {
            return Err(LatticeError::EmptyInterior);
        }
        let mut ring = HashSet::new();
        for s in &set {
            for (dx, dy) in DIRS {
                let z = s.shifted(dx, dy);
                if !set.contains(&z) {
                    ring.insert(z);
                }
            }
        }
        let boundary: Vec<_> = ring.into_iter().collect();
        Ok(Arc::new(Self::assemble(interior, boundary, true)?))
    }

    fn assemble(
        mut interior: Vec<SiteIndex>,
        mut boundary: Vec<SiteIndex>,
        ring_boundary: bool,
    ) -> Result<Self, LatticeError> {
        interior.sort_by_key(|s| (s.y, s.x));
        interior.dedup();
        boundary.sort_by_key(|s| (s.y, s.x));
        boundary.dedup();
        if interior.is_empty() {
            return Err(LatticeError::EmptyInterior);
        }

        let mut site_lookup = HashMap::with_capacity(interior.len() + boundary.len());
        for (i, s) in interior.iter().enumerate() {
            site_lookup.insert(*s, SiteRef::Interior(i));
        }
        for (b, s) in boundary.iter().enumerate() {
            if site_lookup.insert(*s, SiteRef::Boundary(b)).is_some() {
                return Err(LatticeError::BoundaryOverlap(*s));
            }
        }

        // Canonical bonds: scan +x and +y from every site of the domain,
        // keep pairs with at least one interior endpoint.
        let mut bonds = Vec::new();
        let mut bond_refs = Vec::new();
        let mut boundary_bonds = Vec::new();
        let all_sites = interior.iter().chain(boundary.iter());
        for s in all_sites {
            for (dx, dy) in [(1, 0), (0, 1)] {
                let t = s.shifted(dx, dy);
                let (Some(&rf), Some(&rt)) = (site_lookup.get(s), site_lookup.get(&t)) else {
                    continue;
                };
                let interior_count = [rf, rt]
                    .iter()
                    .filter(|r| matches!(r, SiteRef::Interior(_)))
                    .count();
                if interior_count == 0 {
                    continue;
                }
                if interior_count == 1 {
                    boundary_bonds.push(bonds.len());
                }
                bonds.push(Bond { from: *s, to: t });
                bond_refs.push((rf, rt));
            }
        }

        // Interior adjacency, flattened.
        let n = interior.len();
        let mut lists: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
        let mut boundary_adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); boundary.len()];
        for (bidx, &(rf, rt)) in bond_refs.iter().enumerate() {
            match (rf, rt) {
                (SiteRef::Interior(i), SiteRef::Interior(j)) => {
                    lists[i].push(Neighbor { site: rt, bond: bidx, outward: true });
                    lists[j].push(Neighbor { site: rf, bond: bidx, outward: false });
                }
                (SiteRef::Interior(i), SiteRef::Boundary(b)) => {
                    lists[i].push(Neighbor { site: rt, bond: bidx, outward: true });
                    boundary_adj[b].push((i, bidx));
                }
                (SiteRef::Boundary(b), SiteRef::Interior(j)) => {
                    lists[j].push(Neighbor { site: rf, bond: bidx, outward: false });
                    boundary_adj[b].push((j, bidx));
                }
                (SiteRef::Boundary(_), SiteRef::Boundary(_)) => unreachable!(),
            }
        }
        for (b, s) in boundary.iter().enumerate() {
            if boundary_adj[b].is_empty() {
                return Err(LatticeError::DanglingBoundary(*s));
            }
        }
        let mut adj_offsets = Vec::with_capacity(n + 1);
        let mut adj = Vec::new();
        adj_offsets.push(0);
        for list in &lists {
            adj.extend_from_slice(list);
            adj_offsets.push(adj.len());
        }

        // L1 distance from each interior site to the nearest boundary site.
        let dist_to_boundary: Vec<u32> = interior
            .iter()
            .map(|s| boundary.iter().map(|z| s.l1_dist(z)).min().unwrap_or(0))
            .collect();

        // Edge-connectivity of the interior through interior-interior bonds.
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for nb in &adj[adj_offsets[i]..adj_offsets[i + 1]] {
                if let SiteRef::Interior(j) = nb.site {
                    if !seen[j] {
                        seen[j] = true;
                        count += 1;
                        stack.push(j);
                    }
                }
            }
        }

        Ok(LatticeDomain {
            interior,
            boundary,
            bonds,
            bond_refs,
            boundary_bonds,
            adj_offsets,
            adj,
            boundary_adj,
            site_lookup,
            dist_to_boundary,
            connected: count == n,
            ring_boundary,
        })
    }

    /// `D(r)`: the interior sites at lattice distance more than `r` from the
    /// exterior, rebuilt as a domain with its own ring. `None` when the
    /// eroded interior is empty.
    pub fn erode(&self, r: u32) -> Option<Arc<Self>> {
        if r == 0 {
            return Some(Arc::new(self.clone()));
        }
        let kept: Vec<SiteIndex> = self
            .interior
            .iter()
            .zip(&self.dist_to_boundary)
            .filter(|(_, &d)| d > r)
            .map(|(s, _)| *s)
            .collect();
        if kept.is_empty() {
            return None;
        }
        Some(Self::from_interior_components(kept).expect("nonempty erosion"))
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn interior_sites(&self) -> &[SiteIndex] {
        &self.interior
    }

    pub fn boundary_sites(&self) -> &[SiteIndex] {
        &self.boundary
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond_refs(&self) -> &[(SiteRef, SiteRef)] {
        &self.bond_refs
    }

    /// Indices into `bonds` of the bonds with exactly one interior endpoint.
    pub fn boundary_bond_indices(&self) -> &[usize] {
        &self.boundary_bonds
    }

    pub fn is_boundary_bond(&self, bond: usize) -> bool {
        let (a, b) = self.bond_refs[bond];
        matches!(a, SiteRef::Boundary(_)) || matches!(b, SiteRef::Boundary(_))
    }

    pub fn site_ref(&self, s: &SiteIndex) -> Option<SiteRef> {
        self.site_lookup.get(s).copied()
    }

    pub fn interior_index(&self, s: &SiteIndex) -> Option<usize> {
        match self.site_lookup.get(s) {
            Some(SiteRef::Interior(i)) => Some(*i),
            _ => None,
        }
    }

    pub fn boundary_index(&self, s: &SiteIndex) -> Option<usize> {
        match self.site_lookup.get(s) {
            Some(SiteRef::Boundary(b)) => Some(*b),
            _ => None,
        }
    }

    pub fn neighbors(&self, interior_idx: usize) -> &[Neighbor] {
        &self.adj[self.adj_offsets[interior_idx]..self.adj_offsets[interior_idx + 1]]
    }

    pub fn degree(&self, interior_idx: usize) -> usize {
        self.adj_offsets[interior_idx + 1] - self.adj_offsets[interior_idx]
    }

    /// For a boundary site: the `(interior index, bond index)` pairs of its
    /// interior contacts.
    pub fn boundary_contacts(&self, boundary_idx: usize) -> &[(usize, usize)] {
        &self.boundary_adj[boundary_idx]
    }

    /// L1 distance from an interior site to the nearest boundary site.
    pub fn boundary_distance(&self, interior_idx: usize) -> u32 {
        self.dist_to_boundary[interior_idx]
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// True when the boundary is the complete exterior ring of the interior.
    pub fn has_ring_boundary(&self) -> bool {
        self.ring_boundary
    }

    /// Interior site closest to the coordinate centroid.
    pub fn center_site(&self) -> SiteIndex {
        let n = self.interior.len() as f64;
        let cx = self.interior.iter().map(|s| f64::from(s.x)).sum::<f64>() / n;
        let cy = self.interior.iter().map(|s| f64::from(s.y)).sum::<f64>() / n;
        *self
            .interior
            .iter()
            .min_by(|a, b| {
                let da = (f64::from(a.x) - cx).powi(2) + (f64::from(a.y) - cy).powi(2);
                let db = (f64::from(b.x) - cx).powi(2) + (f64::from(b.y) - cy).powi(2);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
    }

    /// Maximum interior-index spread across a bond; the Cholesky band width.
    pub fn index_bandwidth(&self) -> usize {
        self.bond_refs
            .iter()
            .filter_map(|(a, b)| match (a, b) {
                (SiteRef::Interior(i), SiteRef::Interior(j)) => Some(i.abs_diff(*j)),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let dto = DomainJson {
            interior: self.interior.iter().map(|s| (s.x, s.y)).collect(),
            boundary: self.boundary.iter().map(|s| (s.x, s.y)).collect(),
        };
        serde_json::to_string(&dto).expect("domain serialization")
    }

    pub fn from_json(text: &str) -> Result<Arc<Self>, LatticeError> {
        let dto: DomainJson =
            serde_json::from_str(text).map_err(|e| LatticeError::BadJson(e.to_string()))?;
        let interior = dto.interior.iter().map(|&(x, y)| SiteIndex::new(x, y)).collect();
        let boundary = dto.boundary.iter().map(|&(x, y)| SiteIndex::new(x, y)).collect();
        Self::from_parts(interior, boundary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rectangle_counts() {
        let d = LatticeDomain::rectangle(3, 3).unwrap();
        assert_eq!(d.n_interior(), 9);
        assert_eq!(d.n_boundary(), 12);
        assert_eq!(d.n_bonds(), 24);
        assert_eq!(d.boundary_bond_indices().len(), 12);

        let d = LatticeDomain::rectangle(1, 1).unwrap();
        assert_eq!((d.n_interior(), d.n_boundary(), d.n_bonds()), (1, 4, 4));

        let d = LatticeDomain::rectangle(2, 1).unwrap();
        assert_eq!((d.n_interior(), d.n_boundary(), d.n_bonds()), (2, 6, 7));
    }

    #[test]
    fn rectangle_rejects_zero() {
        assert!(LatticeDomain::rectangle(0, 3).is_err());
        assert!(LatticeDomain::rectangle(3, 0).is_err());
    }

    #[test]
    fn disk_enumeration() {
        let d = LatticeDomain::disk(1.2, 1).unwrap();
        let mut sites: Vec<_> = d.interior_sites().to_vec();
        sites.sort();
        let mut expect = vec![
            SiteIndex::new(0, 0),
            SiteIndex::new(1, 0),
            SiteIndex::new(-1, 0),
            SiteIndex::new(0, 1),
            SiteIndex::new(0, -1),
        ];
        expect.sort();
        assert_eq!(sites, expect);

        // Brute-force oracle: all integer sites with x^2+y^2 < (1.2*2)^2.
        let d = LatticeDomain::disk(1.2, 2).unwrap();
        let mut oracle = 0;
        for x in -3..=3 {
            for y in -3..=3 {
                if f64::from(x * x + y * y) < 5.76 {
                    oracle += 1;
                }
            }
        }
        assert_eq!(oracle, 21);
        assert_eq!(d.n_interior(), 21);

        let d = LatticeDomain::disk(0.5, 1).unwrap();
        assert_eq!(d.interior_sites(), &[SiteIndex::new(0, 0)]);
    }

    #[test]
    fn erode_rectangle() {
        let d = LatticeDomain::rectangle(5, 5).unwrap();
        let e = d.erode(1).unwrap();
        assert_eq!(e.n_interior(), 9);
        let xs: Vec<_> = e.interior_sites().iter().map(|s| (s.x, s.y)).collect();
        assert!(xs.iter().all(|&(x, y)| (1..=3).contains(&x) && (1..=3).contains(&y)));

        let same = d.erode(0).unwrap();
        assert_eq!(same.interior_sites(), d.interior_sites());

        let d3 = LatticeDomain::rectangle(3, 3).unwrap();
        assert!(d3.erode(2).is_none());
    }

    #[test]
    fn path_graph_structure() {
        let d = LatticeDomain::path(3).unwrap();
        assert_eq!(d.n_interior(), 3);
        assert_eq!(d.n_boundary(), 2);
        assert_eq!(d.n_bonds(), 4);
        assert_eq!(d.degree(0), 2);
        assert_eq!(d.boundary_bond_indices().len(), 2);
    }

    #[test]
    fn json_round_trip() {
        for d in [
            LatticeDomain::rectangle(4, 2).unwrap(),
            LatticeDomain::path(5).unwrap(),
            LatticeDomain::disk(2.3, 1).unwrap(),
        ] {
            let j = d.to_json();
            let back = LatticeDomain::from_json(&j).unwrap();
            assert_eq!(back.interior_sites(), d.interior_sites());
            assert_eq!(back.boundary_sites(), d.boundary_sites());
            assert_eq!(back.n_bonds(), d.n_bonds());
        }
    }

    #[test]
    fn boundary_rebuild_idempotent() {
        let d = LatticeDomain::disk(2.7, 2).unwrap();
        let again = LatticeDomain::from_interior(d.interior_sites().to_vec()).unwrap();
        assert_eq!(again.boundary_sites(), d.boundary_sites());
    }

    fn degree_invariant(d: &LatticeDomain) {
        for i in 0..d.n_interior() {
            assert_eq!(d.degree(i), 4);
        }
        let interior_interior = d.n_bonds() - d.boundary_bond_indices().len();
        assert_eq!(
            d.n_bonds(),
            interior_interior + d.boundary_bond_indices().len()
        );
        for &bidx in d.boundary_bond_indices() {
            let (a, b) = d.bond_refs()[bidx];
            let interior_count = [a, b]
                .iter()
                .filter(|r| matches!(r, SiteRef::Interior(_)))
                .count();
            assert_eq!(interior_count, 1);
        }
    }

    proptest! {
        #[test]
        fn rect_degree_and_bond_split(w in 1u32..9, h in 1u32..9) {
            let d = LatticeDomain::rectangle(w, h).unwrap();
            // Full sub-lattice: every interior site has all four bonds.
            degree_invariant(&d);
            prop_assert_eq!(d.n_interior(), (w * h) as usize);
            prop_assert_eq!(d.n_boundary(), (2 * (w + h)) as usize);
        }

        #[test]
        fn erode_composes(w in 1u32..12, h in 1u32..12, r in 0u32..4, s in 0u32..4) {
            let d = LatticeDomain::rectangle(w, h).unwrap();
            let lhs = d.erode(r).and_then(|e| e.erode(s));
            let rhs = d.erode(r + s);
            match (lhs, rhs) {
                (None, None) => {}
                (Some(a), Some(b)) => prop_assert_eq!(a.interior_sites(), b.interior_sites()),
                (a, b) => prop_assert!(false, "mismatch: {:?} vs {:?}", a.is_some(), b.is_some()),
            }
        }

        #[test]
        fn disk_degree(r in 1.1f64..4.0, scale in 1u32..3) {
            let d = LatticeDomain::disk(r, scale).unwrap();
            degree_invariant(&d);
        }
    }
}

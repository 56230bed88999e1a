//! Two-sided boundary setup, zero-height contour tracing on the dual
//! lattice, and the harmonic observable of the traced interface.
//!
//! Dual vertices are unit squares identified by their lower-left corner;
//! a directed dual edge `(square, dir)` crosses the primal bond shared by
//! `square` and its `dir`-neighbor, and the traced interface keeps the
//! positive side on the left of the direction of travel. At each square the
//! next edge is the first sign-changing side scanning clockwise when the
//! current dual edge is horizontal and counterclockwise when it is
//! vertical; this is the tie-breaking convention that makes the trace
//! invariant under flipping all signs and exchanging the arcs.

use crate::gff::SampleBatch;
use crate::harmonic::{solve_dirichlet, FieldVector, Solver};
use crate::harness::stats;
use crate::lattice::{LatticeDomain, SiteIndex, SiteRef};
use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use thiserror::Error;

/// Compass direction of travel on the dual lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    North,
    East,
    South,
    West,
}

impl Dir {
    fn delta(self) -> (i32, i32) {
        match self {
            Dir::North => (0, 1),
            Dir::East => (1, 0),
            Dir::South => (0, -1),
            Dir::West => (-1, 0),
        }
    }

    fn clockwise(self) -> Dir {
        match self {
            Dir::North => Dir::East,
            Dir::East => Dir::South,
            Dir::South => Dir::West,
            Dir::West => Dir::North,
        }
    }

    fn counterclockwise(self) -> Dir {
        self.clockwise().clockwise().clockwise()
    }

    fn opposite(self) -> Dir {
        self.clockwise().clockwise()
    }

    fn horizontal(self) -> bool {
        matches!(self, Dir::East | Dir::West)
    }
}

/// A directed dual edge: from `square` toward its `dir` neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DualEdge {
    pub square: (i32, i32),
    pub dir: Dir,
}

impl DualEdge {
    pub fn head_square(&self) -> (i32, i32) {
        let (dx, dy) = self.dir.delta();
        (self.square.0 + dx, self.square.1 + dy)
    }

    /// Crossed primal bond as `(left site, right site)` relative to the
    /// direction of travel.
    pub fn crossed(&self) -> (SiteIndex, SiteIndex) {
        let (i, j) = self.square;
        match self.dir {
            Dir::North => (SiteIndex::new(i, j + 1), SiteIndex::new(i + 1, j + 1)),
            Dir::East => (SiteIndex::new(i + 1, j + 1), SiteIndex::new(i + 1, j)),
            Dir::South => (SiteIndex::new(i + 1, j), SiteIndex::new(i, j)),
            Dir::West => (SiteIndex::new(i, j), SiteIndex::new(i, j + 1)),
        }
    }

    /// Crossed bond with endpoints in canonical order (for set comparisons).
    pub fn crossed_unordered(&self) -> (SiteIndex, SiteIndex) {
        let (a, b) = self.crossed();
        if (a.y, a.x) <= (b.y, b.x) {
            (a, b)
        } else {
            (b, a)
        }
    }
}

/// Marked two-sided boundary: `+lambda` on the clockwise arc from `x` to
/// `y`, `-lambda` on the complementary arc, with the two portal dual edges
/// where the interface enters and exits.
#[derive(Debug, Clone)]
pub struct TwoSidedBoundary {
    pub lambda: f64,
    pub plus_arc: Vec<usize>,
    pub minus_arc: Vec<usize>,
    /// Entry dual edge, directed into the domain with the plus site on the
    /// left.
    pub x_star: DualEdge,
    /// Terminal portal bond (unordered endpoints).
    pub y_star_bond: (SiteIndex, SiteIndex),
    /// Boundary values per boundary index.
    pub psi: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum InterfaceError {
    #[error("lambda must be positive")]
    NonPositiveLambda,
    #[error("{0:?} is not a boundary site")]
    NotBoundary(SiteIndex),
    #[error("marked sites must be distinct")]
    DegenerateArcs,
    #[error("domain boundary is not a full ring")]
    NoRing,
    #[error("marked site {0:?} sits at a boundary corner; pick a flat stretch")]
    CornerPortal(SiteIndex),
    #[error("zero height at {0:?}; perturb the field")]
    ZeroHeight(SiteIndex),
    #[error("trace stuck at square {0:?}")]
    Stuck((i32, i32)),
    #[error("trace revisited a dual edge at {0:?}")]
    Revisit((i32, i32)),
    #[error("trace exceeded the bond budget")]
    TooLong,
    #[error("path prefix claims both sides of {0:?}")]
    InconsistentPrefix(SiteIndex),
    #[error("observable point {0:?} is not interior")]
    NotInterior(SiteIndex),
    #[error("too many replicas excluded: {excluded} of {total}")]
    TooManyExcluded { excluded: usize, total: usize },
}

/// Boundary ring in clockwise cyclic order (by decreasing angle around the
/// interior centroid; adequate for the star-shaped domains built here).
fn ring_clockwise(domain: &LatticeDomain) -> Vec<usize> {
    let n = domain.interior_sites().len() as f64;
    let cx = domain.interior_sites().iter().map(|s| f64::from(s.x)).sum::<f64>() / n;
    let cy = domain.interior_sites().iter().map(|s| f64::from(s.y)).sum::<f64>() / n;
    let mut order: Vec<usize> = (0..domain.n_boundary()).collect();
    order.sort_by(|&a, &b| {
        let sa = domain.boundary_sites()[a];
        let sb = domain.boundary_sites()[b];
        let aa = (f64::from(sa.y) - cy).atan2(f64::from(sa.x) - cx);
        let ab = (f64::from(sb.y) - cy).atan2(f64::from(sb.x) - cx);
        ab.partial_cmp(&aa).unwrap()
    });
    order
}

/// The directed dual edge crossing the bond `{plus, minus}` with the plus
/// site on the left.
fn portal_edge(plus: SiteIndex, minus: SiteIndex) -> DualEdge {
    if plus.y == minus.y {
        // Horizontal bond: vertical dual edge.
        let i = plus.x.min(minus.x);
        let j = plus.y - 1;
        if plus.x < minus.x {
            // Plus on the west: travel north.
            DualEdge { square: (i, j), dir: Dir::North }
        } else {
            DualEdge { square: (i, j + 1), dir: Dir::South }
        }
    } else {
        // Vertical bond: horizontal dual edge.
        let i = plus.x - 1;
        let j = plus.y.min(minus.y);
        if plus.y < minus.y {
            // Plus below: travel west.
            DualEdge { square: (i + 1, j), dir: Dir::West }
        } else {
            DualEdge { square: (i, j), dir: Dir::East }
        }
    }
}

/// Split the boundary ring at `x` and `y` into `+lambda` / `-lambda` arcs
/// and mark the portal dual edges.
pub fn make_two_sided(
    domain: &LatticeDomain,
    x: &SiteIndex,
    y: &SiteIndex,
    lambda: f64,
) -> Result<TwoSidedBoundary, InterfaceError> {
    if lambda <= 0.0 {
        return Err(InterfaceError::NonPositiveLambda);
    }
    if !domain.has_ring_boundary() {
        return Err(InterfaceError::NoRing);
    }
    let xb = domain.boundary_index(x).ok_or(InterfaceError::NotBoundary(*x))?;
    let yb = domain.boundary_index(y).ok_or(InterfaceError::NotBoundary(*y))?;
    if xb == yb {
        return Err(InterfaceError::DegenerateArcs);
    }
    let ring = ring_clockwise(domain);
    let pos = |b: usize| ring.iter().position(|&r| r == b).unwrap();
    let (px, py) = (pos(xb), pos(yb));
    let m = ring.len();
    let mut plus_arc = Vec::new();
    let mut k = px;
    while k != py {
        plus_arc.push(ring[k]);
        k = (k + 1) % m;
    }
    let mut minus_arc = Vec::new();
    while k != px {
        minus_arc.push(ring[k]);
        k = (k + 1) % m;
    }
    let mut psi = vec![0.0; m];
    for &b in &plus_arc {
        psi[b] = lambda;
    }
    for &b in &minus_arc {
        psi[b] = -lambda;
    }
    // Portals: x with its clockwise predecessor (minus side), y with its
    // clockwise predecessor (plus side). Both pairs must be lattice bonds.
    let pred = |p: usize| ring[(p + m - 1) % m];
    let x_minus = domain.boundary_sites()[pred(px)];
    let y_plus = domain.boundary_sites()[pred(py)];
    if x.l1_dist(&x_minus) != 1 {
        return Err(InterfaceError::CornerPortal(*x));
    }
    if y.l1_dist(&y_plus) != 1 {
        return Err(InterfaceError::CornerPortal(*y));
    }
    let x_star = portal_edge(*x, x_minus);
    let y_star = portal_edge(y_plus, *y);
    Ok(TwoSidedBoundary {
        lambda,
        plus_arc,
        minus_arc,
        x_star,
        y_star_bond: y_star.crossed_unordered(),
        psi,
    })
}

/// A traced interface: directed dual edges from the entry portal to the
/// exit portal, positive side on the left of each.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPath {
    pub edges: Vec<DualEdge>,
}

impl DualPath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn crossed_bond_set(&self) -> HashSet<(SiteIndex, SiteIndex)> {
        self.edges.iter().map(|e| e.crossed_unordered()).collect()
    }

    pub fn prefix(&self, t: usize) -> DualPath {
        DualPath { edges: self.edges[..t.min(self.edges.len())].to_vec() }
    }
}

fn sign_at(
    field: &FieldVector,
    psi: &[f64],
    site: &SiteIndex,
) -> Result<Option<bool>, InterfaceError> {
    let v = match field.domain.site_ref(site) {
        Some(SiteRef::Interior(i)) => field.interior[i],
        Some(SiteRef::Boundary(b)) => psi[b],
        None => return Ok(None),
    };
    if v == 0.0 {
        return Err(InterfaceError::ZeroHeight(*site));
    }
    Ok(Some(v > 0.0))
}

/// Trace the zero-height interface from `x*` to `y*` with the turning rule.
/// Deterministic in the field; errors on zero heights.
pub fn trace(field: &FieldVector, boundary: &TwoSidedBoundary) -> Result<DualPath, InterfaceError> {
    let budget = field.domain.n_bonds() + field.domain.n_boundary() * 4 + 8;
    let mut edges = vec![boundary.x_star];
    let mut crossed: HashSet<(SiteIndex, SiteIndex)> = HashSet::new();
    crossed.insert(boundary.x_star.crossed_unordered());
    let mut current = boundary.x_star;
    loop {
        if edges.len() > budget {
            return Err(InterfaceError::TooLong);
        }
        let square = current.head_square();
        let entered_through = current.dir.opposite();
        let rotate = if current.dir.horizontal() {
            Dir::clockwise
        } else {
            Dir::counterclockwise
        };
        let mut side = entered_through;
        let mut next: Option<DualEdge> = None;
        for _ in 0..3 {
            side = rotate(side);
            let candidate = DualEdge { square, dir: side };
            let (left, right) = candidate.crossed();
            let sl = sign_at(field, &boundary.psi, &left)?;
            let sr = sign_at(field, &boundary.psi, &right)?;
            if sl == Some(true) && sr == Some(false) {
                next = Some(candidate);
                break;
            }
        }
        let Some(candidate) = next else {
            return Err(InterfaceError::Stuck(square));
        };
        if !crossed.insert(candidate.crossed_unordered()) {
            return Err(InterfaceError::Revisit(candidate.square));
        }
        edges.push(candidate);
        if candidate.crossed_unordered() == boundary.y_star_bond {
            return Ok(DualPath { edges });
        }
        current = candidate;
    }
}

/// Harmonic observable of a path prefix: discrete harmonic away from the
/// path with values `+lambda` on the plus arc and the left side of the
/// prefix, `-lambda` on the minus arc and the right side. The slit is
/// realized by fixing the path-adjacent sites, so no influence crosses it.
pub fn observable(
    domain: &Arc<LatticeDomain>,
    prefix: &DualPath,
    boundary: &TwoSidedBoundary,
) -> Result<FieldVector, InterfaceError> {
    let mut fixed: HashMap<usize, f64> = HashMap::new();
    for edge in &prefix.edges {
        let (left, right) = edge.crossed();
        for (site, value) in [(left, boundary.lambda), (right, -boundary.lambda)] {
            match domain.site_ref(&site) {
                Some(SiteRef::Interior(i)) => {
                    if let Some(prev) = fixed.insert(i, value) {
                        if prev != value {
                            return Err(InterfaceError::InconsistentPrefix(site));
                        }
                    }
                }
                // Boundary endpoints already carry arc values; sites outside
                // the domain cannot occur on a traced prefix.
                Some(SiteRef::Boundary(_)) | None => {}
            }
        }
    }
    if fixed.is_empty() {
        let solver = Solver::new(domain).expect("laplacian");
        return Ok(solve_dirichlet(&solver, &boundary.psi));
    }
    let free: Vec<SiteIndex> = domain
        .interior_sites()
        .iter()
        .enumerate()
        .filter(|(i, _)| !fixed.contains_key(i))
        .map(|(_, s)| *s)
        .collect();
    let mut out = FieldVector {
        domain: domain.clone(),
        interior: vec![0.0; domain.n_interior()],
        boundary: boundary.psi.clone(),
    };
    for (&i, &v) in &fixed {
        out.interior[i] = v;
    }
    if free.is_empty() {
        return Ok(out);
    }
    let sub = LatticeDomain::from_interior_components(free).expect("nonempty free region");
    let sub_solver = Solver::new(&sub).expect("laplacian on slit domain");
    let bv: Vec<f64> = sub
        .boundary_sites()
        .iter()
        .map(|s| match domain.site_ref(s) {
            Some(SiteRef::Interior(i)) => fixed[&i],
            Some(SiteRef::Boundary(b)) => boundary.psi[b],
            None => unreachable!("slit ring lies in the parent domain"),
        })
        .collect();
    let ext = solve_dirichlet(&sub_solver, &bv);
    for (k, s) in sub.interior_sites().iter().enumerate() {
        out.interior[domain.interior_index(s).unwrap()] = ext.interior[k];
    }
    Ok(out)
}

/// Approximate-martingale diagnostic of the observable at a fixed point.
#[derive(Debug, Clone)]
pub struct MartingaleDiagnostic {
    /// Mean of `f_{t+s}(z) - f_t(z)` over kept replicas.
    pub estimate: f64,
    pub stderr: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Distance (euclidean) from `z` to the nearest site adjacent to the path.
fn path_distance(prefix: &DualPath, z: &SiteIndex) -> f64 {
    prefix
        .edges
        .iter()
        .flat_map(|e| {
            let (l, r) = e.crossed();
            [l, r]
        })
        .map(|s| {
            (f64::from(s.x - z.x).powi(2) + f64::from(s.y - z.y).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Across replica fields: trace, evaluate the observable at `z` for prefix
/// lengths `t` and `t + s`, and average the difference. Replicas whose
/// path comes within `min_dist` of `z` (or is shorter than `t + s`) are
/// excluded and counted.
pub fn martingale_diagnostic(
    batch: &SampleBatch,
    boundary: &TwoSidedBoundary,
    z: &SiteIndex,
    t: usize,
    s: usize,
    min_dist: f64,
) -> Result<MartingaleDiagnostic, InterfaceError> {
    let domain = &batch.domain;
    domain
        .interior_index(z)
        .ok_or(InterfaceError::NotInterior(*z))?;
    let mut diffs = Vec::new();
    let mut excluded = 0usize;
    for r in 0..batch.count() {
        let field = batch.field(r);
        let path = trace(&field, boundary)?;
        if path.len() < t + s || path_distance(&path.prefix(t + s), z) < min_dist {
            excluded += 1;
            continue;
        }
        let f_t = observable(domain, &path.prefix(t), boundary)?;
        let f_ts = observable(domain, &path.prefix(t + s), boundary)?;
        let zi = domain.interior_index(z).unwrap();
        diffs.push(f_ts.interior[zi] - f_t.interior[zi]);
    }
    let total = batch.count();
    if diffs.len() * 2 < total {
        return Err(InterfaceError::TooManyExcluded { excluded, total });
    }
    Ok(MartingaleDiagnostic {
        estimate: stats::mean(&diffs),
        stderr: stats::jackknife_mean_se(&diffs),
        used: diffs.len(),
        excluded,
    })
}

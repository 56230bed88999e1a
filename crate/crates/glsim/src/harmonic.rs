//! Discrete Laplacian, Dirichlet solver, Green's function, and harmonic
//! measure.
//!
//! One banded Cholesky factorization of `-Δ` (interior sites, Dirichlet
//! boundary) is built per domain and reused for Dirichlet solves, Green's
//! rows, and exact Gaussian sampling. The sign convention is
//! `G = (-Δ)^{-1}`, so field covariances `Cov(h(x), h(y)) = G(x, y)` are
//! nonnegative.

use crate::lattice::{LatticeDomain, SiteIndex, SiteRef};
use nalgebra::DMatrix;
use std::sync::Arc;
use thiserror::Error;

/// Values on a domain: one entry per interior site plus the boundary data.
#[derive(Debug, Clone)]
pub struct FieldVector {
    pub domain: Arc<LatticeDomain>,
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl FieldVector {
    pub fn zeros(domain: &Arc<LatticeDomain>) -> Self {
        FieldVector {
            domain: domain.clone(),
            interior: vec![0.0; domain.n_interior()],
            boundary: vec![0.0; domain.n_boundary()],
        }
    }

    pub fn from_fn(domain: &Arc<LatticeDomain>, mut f: impl FnMut(SiteIndex) -> f64) -> Self {
        FieldVector {
            domain: domain.clone(),
            interior: domain.interior_sites().iter().map(|s| f(*s)).collect(),
            boundary: domain.boundary_sites().iter().map(|s| f(*s)).collect(),
        }
    }

    #[inline]
    pub fn value(&self, r: SiteRef) -> f64 {
        match r {
            SiteRef::Interior(i) => self.interior[i],
            SiteRef::Boundary(b) => self.boundary[b],
        }
    }

    /// Signed gradient across a bond, `h(to) - h(from)`.
    #[inline]
    pub fn gradient(&self, bond: usize) -> f64 {
        let (f, t) = self.domain.bond_refs()[bond];
        self.value(t) - self.value(f)
    }

    pub fn is_finite(&self) -> bool {
        self.interior.iter().chain(self.boundary.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Error)]
pub enum HarmonicError {
    #[error("site {0:?} is not an interior site of the domain")]
    NotInterior(SiteIndex),
    #[error("dense Green's matrix limited to {limit} interior sites, domain has {actual}")]
    TooLargeForDense { limit: usize, actual: usize },
    #[error("Cholesky pivot failed at row {0}; operator not positive definite")]
    NotPositiveDefinite(usize),
}

/// Banded Cholesky factorization of `-Δ` on the interior of a domain.
///
/// Immutable after construction; concurrent solves are safe.
#[derive(Debug, Clone)]
pub struct Solver {
    domain: Arc<LatticeDomain>,
    band: Vec<f64>,
    bw: usize,
    n: usize,
}

/// Dense cap from the memory budget; larger domains use per-row solves.
pub const DENSE_GREENS_LIMIT: usize = 4096;

impl Solver {
    pub fn new(domain: &Arc<LatticeDomain>) -> Result<Self, HarmonicError> {
        let n = domain.n_interior();
        let bw = domain.index_bandwidth();
        let cols = bw + 1;
        // Lower band storage: band[i * cols + (j - i + bw)] = A(i, j), j in [i-bw, i].
        let mut band = vec![0.0f64; n * cols];
        for i in 0..n {
            band[i * cols + bw] = domain.degree(i) as f64;
        }
        for (a, b) in domain.bond_refs() {
            if let (SiteRef::Interior(i), SiteRef::Interior(j)) = (a, b) {
                let (lo, hi) = if i < j { (*i, *j) } else { (*j, *i) };
                band[hi * cols + (lo + bw - hi)] = -1.0;
            }
        }
        // In-place banded Cholesky.
        for i in 0..n {
            let jmin = i.saturating_sub(bw);
            for j in jmin..=i {
                let kmin = jmin.max(j.saturating_sub(bw));
                let mut sum = band[i * cols + (j + bw - i)];
                for k in kmin..j {
                    sum -= band[i * cols + (k + bw - i)] * band[j * cols + (k + bw - j)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(HarmonicError::NotPositiveDefinite(i));
                    }
                    band[i * cols + bw] = sum.sqrt();
                } else {
                    band[i * cols + (j + bw - i)] = sum / band[j * cols + bw];
                }
            }
        }
        Ok(Solver { domain: domain.clone(), band, bw, n })
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    /// Solve `(-Δ) u = rhs` in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        debug_assert_eq!(rhs.len(), self.n);
        let cols = self.bw + 1;
        // Forward: L y = rhs.
        for i in 0..self.n {
            let jmin = i.saturating_sub(self.bw);
            let mut sum = rhs[i];
            for j in jmin..i {
                sum -= self.band[i * cols + (j + self.bw - i)] * rhs[j];
            }
            rhs[i] = sum / self.band[i * cols + self.bw];
        }
        // Backward: L^T x = y.
        for i in (0..self.n).rev() {
            let jmax = (i + self.bw).min(self.n - 1);
            let mut sum = rhs[i];
            for j in (i + 1)..=jmax {
                sum -= self.band[j * cols + (i + self.bw - j)] * rhs[j];
            }
            rhs[i] = sum / self.band[i * cols + self.bw];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solve `L^T x = z`; maps iid standard normals to a zero-boundary
    /// Gaussian field with covariance `G`.
    pub fn back_substitute(&self, z: &mut [f64]) {
        debug_assert_eq!(z.len(), self.n);
        let cols = self.bw + 1;
        for i in (0..self.n).rev() {
            let jmax = (i + self.bw).min(self.n - 1);
            let mut sum = z[i];
            for j in (i + 1)..=jmax {
                sum -= self.band[j * cols + (i + self.bw - j)] * z[j];
            }
            z[i] = sum / self.band[i * cols + self.bw];
        }
    }

    /// One row of the Green's function, `G(y, .)`.
    pub fn greens_row(&self, y: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.n];
        e[y] = 1.0;
        self.solve_in_place(&mut e);
        e
    }
}

/// Apply the discrete Laplacian at every interior site:
/// `(Δ f)(x) = sum_{y ~ x} (f(y) - f(x))`, boundary values included.
pub fn laplacian_apply(field: &FieldVector) -> Vec<f64> {
    let d = &field.domain;
    (0..d.n_interior())
        .map(|i| {
            let fx = field.interior[i];
            d.neighbors(i).iter().map(|nb| field.value(nb.site) - fx).sum()
        })
        .collect()
}

/// Right-hand side of the Dirichlet system for given boundary data:
/// `rhs(x) = sum_{z ~ x, z boundary} bv(z)`.
fn boundary_rhs(domain: &LatticeDomain, boundary_values: &[f64]) -> Vec<f64> {
    let mut rhs = vec![0.0; domain.n_interior()];
    for i in 0..domain.n_interior() {
        for nb in domain.neighbors(i) {
            if let SiteRef::Boundary(b) = nb.site {
                rhs[i] += boundary_values[b];
            }
        }
    }
    rhs
}

/// Harmonic extension of boundary data into the interior.
pub fn solve_dirichlet(solver: &Solver, boundary_values: &[f64]) -> FieldVector {
    let domain = solver.domain();
    let mut rhs = boundary_rhs(domain, boundary_values);
    solver.solve_in_place(&mut rhs);
    let field = FieldVector {
        domain: domain.clone(),
        interior: rhs,
        boundary: boundary_values.to_vec(),
    };
    debug_assert!({
        let scale = 1.0 + boundary_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        laplacian_apply(&field).iter().all(|r| r.abs() <= 1e-10 * scale)
    });
    field
}

/// Max-norm residual of the Laplace equation for a candidate harmonic field.
pub fn dirichlet_residual(field: &FieldVector) -> f64 {
    laplacian_apply(field).iter().fold(0.0f64, |m, r| m.max(r.abs()))
}

/// Dense symmetric positive-definite Green's matrix over interior sites.
#[derive(Debug, Clone)]
pub struct GreensMatrix {
    pub domain: Arc<LatticeDomain>,
    pub entries: DMatrix<f64>,
}

impl GreensMatrix {
    pub fn get(&self, x: &SiteIndex, y: &SiteIndex) -> Option<f64> {
        let i = self.domain.interior_index(x)?;
        let j = self.domain.interior_index(y)?;
        Some(self.entries[(i, j)])
    }

    /// Debug export: one row per interior site, comma separated.
    pub fn to_csv(&self) -> String {
        let n = self.entries.nrows();
        let mut out = String::new();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| self.entries[(i, j)].to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Materialize `G = (-Δ)^{-1}` densely. Limited to
/// [`DENSE_GREENS_LIMIT`] interior sites; use [`Solver::greens_row`] above that.
pub fn greens_function(solver: &Solver) -> Result<GreensMatrix, HarmonicError> {
    let n = solver.domain().n_interior();
    if n > DENSE_GREENS_LIMIT {
        return Err(HarmonicError::TooLargeForDense { limit: DENSE_GREENS_LIMIT, actual: n });
    }
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let col = solver.greens_row(j);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    Ok(GreensMatrix { domain: solver.domain().clone(), entries: m })
}

/// Exit distribution of the simple random walk from `x`: one Dirichlet solve,
/// read off through the boundary contacts.
pub fn harmonic_measure(solver: &Solver, x: &SiteIndex) -> Result<Vec<f64>, HarmonicError> {
    let domain = solver.domain();
    let xi = domain
        .interior_index(x)
        .ok_or(HarmonicError::NotInterior(*x))?;
    let g = solver.greens_row(xi);
    let mut hm = vec![0.0; domain.n_boundary()];
    for b in 0..domain.n_boundary() {
        for &(i, _) in domain.boundary_contacts(b) {
            hm[b] += g[i];
        }
    }
    Ok(hm)
}

/// Worst gradient-to-boundary-distance ratio of the harmonic extension:
/// `max_b |g(x)-g(y)| * min(dist(x), dist(y)) / ||g_boundary||_inf` over
/// interior-interior bonds. Zero boundary data returns 0.
pub fn harmonic_gradient_check(solver: &Solver, boundary_values: &[f64]) -> f64 {
    let sup = boundary_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup == 0.0 {
        return 0.0;
    }
    let field = solve_dirichlet(solver, boundary_values);
    let domain = solver.domain();
    let mut worst = 0.0f64;
    for (bidx, (a, b)) in domain.bond_refs().iter().enumerate() {
        if let (SiteRef::Interior(i), SiteRef::Interior(j)) = (a, b) {
            let dist = domain.boundary_distance(*i).min(domain.boundary_distance(*j)) as f64;
            let ratio = field.gradient(bidx).abs() * dist / sup;
            worst = worst.max(ratio);
        }
    }
    worst
}

/// Dirichlet inner product `sum_b grad f(b) grad g(b)` over all bonds.
pub fn dirichlet_inner(f: &FieldVector, g: &FieldVector) -> f64 {
    (0..f.domain.n_bonds()).map(|b| f.gradient(b) * g.gradient(b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use approx::assert_relative_eq;

    fn path3() -> (Arc<LatticeDomain>, Solver) {
        let d = LatticeDomain::path(3).unwrap();
        let s = Solver::new(&d).unwrap();
        (d, s)
    }

    #[test]
    fn laplacian_of_linear_field_vanishes() {
        let d = LatticeDomain::rectangle(4, 3).unwrap();
        let f = FieldVector::from_fn(&d, |s| f64::from(s.x));
        for v in laplacian_apply(&f) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_indicator() {
        let d = LatticeDomain::rectangle(3, 3).unwrap();
        let z = SiteIndex::new(1, 1);
        let zi = d.interior_index(&z).unwrap();
        let mut f = FieldVector::zeros(&d);
        f.interior[zi] = 1.0;
        let lap = laplacian_apply(&f);
        assert_relative_eq!(lap[zi], -4.0);
        for nb in [(0, 1), (2, 1), (1, 0), (1, 2)] {
            let i = d.interior_index(&SiteIndex::new(nb.0, nb.1)).unwrap();
            assert_relative_eq!(lap[i], 1.0);
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_two() {
        let d = LatticeDomain::rectangle(5, 4).unwrap();
        let f = FieldVector::from_fn(&d, |s| f64::from(s.x * s.x));
        for v in laplacian_apply(&f) {
            assert_relative_eq!(v, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dirichlet_path_linear_interpolation() {
        let (d, s) = path3();
        let mut bv = vec![0.0; 2];
        bv[d.boundary_index(&SiteIndex::new(4, 0)).unwrap()] = 4.0;
        let f = solve_dirichlet(&s, &bv);
        for (i, expect) in [(1, 1.0), (2, 2.0), (3, 3.0)] {
            let idx = d.interior_index(&SiteIndex::new(i, 0)).unwrap();
            assert_relative_eq!(f.interior[idx], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn dirichlet_constant_boundary() {
        let d = LatticeDomain::disk(2.5, 1).unwrap();
        let s = Solver::new(&d).unwrap();
        let bv = vec![3.25; d.n_boundary()];
        let f = solve_dirichlet(&s, &bv);
        for v in &f.interior {
            assert_relative_eq!(*v, 3.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn dirichlet_3x3_matches_dense_oracle() {
        let d = LatticeDomain::rectangle(3, 3).unwrap();
        let s = Solver::new(&d).unwrap();
        // Boundary = 1 on the three sites of the y = -1 side, 0 elsewhere.
        let mut bv = vec![0.0; d.n_boundary()];
        for x in 0..3 {
            bv[d.boundary_index(&SiteIndex::new(x, -1)).unwrap()] = 1.0;
        }
        let f = solve_dirichlet(&s, &bv);
        assert!(dirichlet_residual(&f) <= 1e-10 * 2.0);

        // Independent dense oracle over the 9x9 system.
        let n = d.n_interior();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = d.degree(i) as f64;
            for nb in d.neighbors(i) {
                if let SiteRef::Interior(j) = nb.site {
                    a[(i, j)] = -1.0;
                }
            }
        }
        let mut rhs = nalgebra::DVector::zeros(n);
        for i in 0..n {
            for nb in d.neighbors(i) {
                if let SiteRef::Boundary(b) = nb.site {
                    rhs[i] += bv[b];
                }
            }
        }
        let dense = a.lu().solve(&rhs).unwrap();
        for i in 0..n {
            assert_relative_eq!(f.interior[i], dense[i], epsilon = 1e-10);
        }
        // Frozen oracle value: center of the 3x3 block with one hot side.
        let c = d.interior_index(&SiteIndex::new(1, 1)).unwrap();
        assert_relative_eq!(f.interior[c], 0.25, epsilon = 1e-10);
    }

    #[test]
    fn greens_path_values() {
        let (_d, s) = path3();
        let g = greens_function(&s).unwrap();
        let site = |x| SiteIndex::new(x, 0);
        assert_relative_eq!(g.get(&site(1), &site(1)).unwrap(), 0.75, epsilon = 1e-12);
        assert_relative_eq!(g.get(&site(2), &site(2)).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(g.get(&site(1), &site(3)).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn greens_single_site() {
        let d = LatticeDomain::rectangle(1, 1).unwrap();
        let s = Solver::new(&d).unwrap();
        let g = greens_function(&s).unwrap();
        assert_relative_eq!(g.entries[(0, 0)], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn greens_symmetry_and_row_identity() {
        let d = LatticeDomain::disk(2.2, 1).unwrap();
        let s = Solver::new(&d).unwrap();
        let g = greens_function(&s).unwrap();
        let n = d.n_interior();
        for i in 0..n {
            let row = s.greens_row(i);
            for j in 0..n {
                assert_relative_eq!(g.entries[(i, j)], g.entries[(j, i)], epsilon = 1e-11);
                assert_relative_eq!(g.entries[(i, j)], row[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn harmonic_measure_single_site_uniform() {
        let d = LatticeDomain::rectangle(1, 1).unwrap();
        let s = Solver::new(&d).unwrap();
        let hm = harmonic_measure(&s, &SiteIndex::new(0, 0)).unwrap();
        for p in hm {
            assert_relative_eq!(p, 0.25, epsilon = 1e-13);
        }
    }

    #[test]
    fn harmonic_measure_path_gamblers_ruin() {
        let (d, s) = path3();
        let hm = harmonic_measure(&s, &SiteIndex::new(1, 0)).unwrap();
        let left = d.boundary_index(&SiteIndex::new(0, 0)).unwrap();
        let right = d.boundary_index(&SiteIndex::new(4, 0)).unwrap();
        assert_relative_eq!(hm[left], 0.75, epsilon = 1e-12);
        assert_relative_eq!(hm[right], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn harmonic_measure_center_symmetry_classes() {
        let d = LatticeDomain::rectangle(3, 3).unwrap();
        let s = Solver::new(&d).unwrap();
        let hm = harmonic_measure(&s, &SiteIndex::new(1, 1)).unwrap();
        let total: f64 = hm.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
        // The four side-midpoints form one symmetry class.
        let mids = [(1, -1), (1, 3), (-1, 1), (3, 1)];
        let p0 = hm[d.boundary_index(&SiteIndex::new(1, -1)).unwrap()];
        for (x, y) in mids {
            let p = hm[d.boundary_index(&SiteIndex::new(x, y)).unwrap()];
            assert_relative_eq!(p, p0, epsilon = 1e-12);
        }
    }

    #[test]
    fn harmonic_measure_pairs_with_dirichlet_solve() {
        let d = LatticeDomain::disk(2.8, 1).unwrap();
        let s = Solver::new(&d).unwrap();
        let mut rng = StreamRng::new(5, "hm-pairing");
        let bv: Vec<f64> = (0..d.n_boundary()).map(|_| rng.gaussian()).collect();
        let f = solve_dirichlet(&s, &bv);
        for (i, x) in d.interior_sites().iter().enumerate() {
            let hm = harmonic_measure(&s, x).unwrap();
            let paired: f64 = hm.iter().zip(&bv).map(|(p, v)| p * v).sum();
            assert_relative_eq!(paired, f.interior[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn summation_by_parts() {
        let d = LatticeDomain::rectangle(6, 5).unwrap();
        let mut rng = StreamRng::new(11, "sbp");
        // f, g vanish on the boundary.
        let mut f = FieldVector::zeros(&d);
        let mut g = FieldVector::zeros(&d);
        for i in 0..d.n_interior() {
            f.interior[i] = rng.gaussian();
            g.interior[i] = rng.gaussian();
        }
        let lhs = dirichlet_inner(&f, &g);
        let lap_g = laplacian_apply(&g);
        let rhs: f64 = -(0..d.n_interior()).map(|i| f.interior[i] * lap_g[i]).sum::<f64>();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn gradient_check_on_path() {
        let (d, s) = path3();
        let mut bv = vec![0.0; 2];
        bv[d.boundary_index(&SiteIndex::new(4, 0)).unwrap()] = 4.0;
        let ratio = harmonic_gradient_check(&s, &bv);
        assert_relative_eq!(ratio, 0.25, epsilon = 1e-12);
        assert!(harmonic_gradient_check(&s, &[2.0, 2.0]).abs() < 1e-12);
    }

    #[test]
    fn gradient_check_checkerboard_bounded() {
        let d = LatticeDomain::rectangle(15, 15).unwrap();
        let s = Solver::new(&d).unwrap();
        let bv: Vec<f64> = d
            .boundary_sites()
            .iter()
            .map(|z| if (z.x + z.y).rem_euclid(2) == 0 { 1.0 } else { -1.0 })
            .collect();
        let ratio = harmonic_gradient_check(&s, &bv);
        assert!(ratio > 0.0 && ratio <= 4.0, "ratio {ratio}");
    }

    #[test]
    fn banded_solver_matches_dense_on_disk() {
        let d = LatticeDomain::disk(3.4, 1).unwrap();
        let s = Solver::new(&d).unwrap();
        let n = d.n_interior();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = d.degree(i) as f64;
            for nb in d.neighbors(i) {
                if let SiteRef::Interior(j) = nb.site {
                    a[(i, j)] = -1.0;
                }
            }
        }
        let mut rng = StreamRng::new(3, "banded-vs-dense");
        let rhs: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let x = s.solve(&rhs);
        let dense = a.lu().solve(&nalgebra::DVector::from_vec(rhs)).unwrap();
        for i in 0..n {
            assert_relative_eq!(x[i], dense[i], epsilon = 1e-10);
        }
    }
}

//! The macroscopic gradient functional
//! `xi^{eps}(grad f) = eps sum_b grad f(eps b) grad h(b)` and its Gaussian
//! limit diagnostics, plus the homogenized coefficient estimate and the
//! comparison-inequality checks (Brascamp-Lieb, FKG) that calibrate it
//! against the exact Gaussian reference.

use crate::gff::SampleBatch;
use crate::harmonic::Solver;
use crate::harness::stats;
use crate::lattice::{LatticeDomain, SiteRef};
use crate::potential::Potential;
use std::sync::Arc;
use thiserror::Error;

/// A smooth compactly supported test function, given through its gradient.
#[derive(Clone)]
pub struct TestFunction {
    grad: Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>,
    /// Support box `(xmin, ymin, xmax, ymax)` outside which the gradient
    /// vanishes identically.
    pub support: (f64, f64, f64, f64),
    pub name: String,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("support", &self.support)
            .finish()
    }
}

impl TestFunction {
    /// `C-infinity` bump `exp(-1/(1 - rho^2))` of the scaled radius
    /// `rho = |p - c| / radius`, zero outside the disk.
    pub fn bump(cx: f64, cy: f64, radius: f64) -> Self {
        let grad = move |x: f64, y: f64| -> (f64, f64) {
            let ux = (x - cx) / radius;
            let uy = (y - cy) / radius;
            let u = ux * ux + uy * uy;
            if u >= 1.0 {
                return (0.0, 0.0);
            }
            let f = (-1.0 / (1.0 - u)).exp();
            let dfdu = -f / ((1.0 - u) * (1.0 - u));
            (dfdu * 2.0 * ux / radius, dfdu * 2.0 * uy / radius)
        };
        TestFunction {
            grad: Arc::new(grad),
            support: (cx - radius, cy - radius, cx + radius, cy + radius),
            name: format!("bump({cx},{cy};{radius})"),
        }
    }

    /// Gradient scaled by `lambda`; the functional is linear in `f`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let inner = self.grad.clone();
        TestFunction {
            grad: Arc::new(move |x, y| {
                let (gx, gy) = inner(x, y);
                (lambda * gx, lambda * gy)
            }),
            support: self.support,
            name: format!("{}*{lambda}", self.name),
        }
    }

    #[inline]
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        (self.grad)(x, y)
    }
}

#[derive(Debug, Error)]
pub enum CltError {
    #[error("test function support reaches a boundary bond at ({0}, {1})")]
    SupportViolation(f64, f64),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("degenerate (zero variance) functional samples")]
    DegenerateSamples,
}

/// Evaluate `xi = eps sum_b grad f(eps . midpoint) . grad h(b)` for one
/// interior field; lattice points map to the continuum as `eps * site`.
pub fn field_functional_interior(
    domain: &LatticeDomain,
    interior: &[f64],
    boundary: &[f64],
    f: &TestFunction,
    epsilon: f64,
) -> Result<f64, CltError> {
    let mut xi = 0.0;
    for (bidx, bond) in domain.bonds().iter().enumerate() {
        let mx = epsilon * 0.5 * f64::from(bond.from.x + bond.to.x);
        let my = epsilon * 0.5 * f64::from(bond.from.y + bond.to.y);
        let (gx, gy) = f.gradient(mx, my);
        let gf = if bond.horizontal() { gx } else { gy };
        if gf == 0.0 {
            continue;
        }
        if domain.is_boundary_bond(bidx) {
            return Err(CltError::SupportViolation(mx, my));
        }
        let (rf, rt) = domain.bond_refs()[bidx];
        let v = |r: SiteRef| match r {
            SiteRef::Interior(i) => interior[i],
            SiteRef::Boundary(b) => boundary[b],
        };
        xi += gf * (v(rt) - v(rf));
    }
    Ok(epsilon * xi)
}

/// Functional samples for a whole batch.
pub fn field_functional_batch(
    batch: &SampleBatch,
    f: &TestFunction,
    epsilon: f64,
) -> Result<Vec<f64>, CltError> {
    batch
        .fields
        .iter()
        .map(|fld| field_functional_interior(&batch.domain, fld, &batch.boundary, f, epsilon))
        .collect()
}

/// Exact variance of the functional under the zero-boundary Gaussian
/// reference: `eps^2 w^T G w` with `w` the discrete divergence of the test
/// gradient; one Dirichlet solve, no dense Green's matrix.
pub fn xi_variance_gaussian(solver: &Solver, f: &TestFunction, epsilon: f64) -> f64 {
    let domain = solver.domain();
    let mut w = vec![0.0; domain.n_interior()];
    for (bidx, bond) in domain.bonds().iter().enumerate() {
        let mx = epsilon * 0.5 * f64::from(bond.from.x + bond.to.x);
        let my = epsilon * 0.5 * f64::from(bond.from.y + bond.to.y);
        let (gx, gy) = f.gradient(mx, my);
        let gf = if bond.horizontal() { gx } else { gy };
        if gf == 0.0 {
            continue;
        }
        let (rf, rt) = domain.bond_refs()[bidx];
        if let SiteRef::Interior(i) = rf {
            w[i] -= gf;
        }
        if let SiteRef::Interior(i) = rt {
            w[i] += gf;
        }
    }
    let gw = solver.solve(&w);
    epsilon * epsilon * w.iter().zip(&gw).map(|(a, b)| a * b).sum::<f64>()
}

/// Anderson-Darling normality gate at significance 0.01.
pub fn gaussianity_test(samples: &[f64]) -> Result<stats::AndersonDarling, CltError> {
    if samples.len() < 500 {
        return Err(CltError::TooFewSamples { min: 500, got: samples.len() });
    }
    if stats::variance(samples) <= 0.0 {
        return Err(CltError::DegenerateSamples);
    }
    Ok(stats::anderson_darling_normal(samples))
}

/// Bulk estimate of the homogenized coefficient `a_V = E V''(grad h(b))`.
#[derive(Debug, Clone)]
pub struct HomogenizedCoefficient {
    pub value: f64,
    pub stderr: f64,
    /// Per-bond means and standard errors (bond-independence diagnostics).
    pub per_bond: Vec<(usize, f64, f64)>,
}

/// Bonds whose erosion depth is at least `sqrt(diam)`: far enough from the
/// boundary to count as bulk at these domain sizes.
pub fn bulk_bonds(domain: &LatticeDomain) -> Vec<usize> {
    let diam = domain
        .interior_sites()
        .iter()
        .map(|s| s.x.max(s.y))
        .max()
        .unwrap_or(0) as f64;
    let depth = diam.sqrt().ceil() as u32;
    (0..domain.n_bonds())
        .filter(|&b| {
            let (rf, rt) = domain.bond_refs()[b];
            let d = |r: SiteRef| match r {
                SiteRef::Interior(i) => domain.boundary_distance(i),
                SiteRef::Boundary(_) => 0,
            };
            d(rf).min(d(rt)) >= depth
        })
        .collect()
}

pub fn estimate_a_v(
    batch: &SampleBatch,
    potential: &Potential,
    bonds: &[usize],
) -> HomogenizedCoefficient {
    let mut per_bond = Vec::with_capacity(bonds.len());
    let mut pooled = Vec::new();
    for &b in bonds {
        let series: Vec<f64> = batch
            .gradient_series(b)
            .into_iter()
            .map(|g| potential.v2(g))
            .collect();
        let m = stats::mean(&series);
        let se = stats::jackknife_mean_se(&series);
        per_bond.push((b, m, se));
        pooled.push(m);
    }
    let value = stats::mean(&pooled);
    // Bond means share samples; the conservative error is the mean of the
    // per-bond standard errors rather than the pooled-iid one.
    let stderr = per_bond.iter().map(|(_, _, se)| se).sum::<f64>() / bonds.len() as f64;
    HomogenizedCoefficient { value, stderr, per_bond }
}

/// One-sided FKG check: sample covariance of the monotone pair
/// `(h(x), h(y))` with its jackknife error; acceptance is `cov >= -4 se`.
pub fn fkg_pair_covariances(
    batch: &SampleBatch,
    pairs: &[(usize, usize)],
) -> Vec<(f64, f64)> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let xs = batch.site_series(i);
            let ys = batch.site_series(j);
            stats::jackknife_covariance(&xs, &ys)
        })
        .collect()
}

/// Brascamp-Lieb variance domination of a linear functional by the exact
/// Gaussian reference: `Var <nu, h> <= (1/a) nu^T G nu`.
#[derive(Debug, Clone)]
pub struct BlVarianceReport {
    pub var_sample: f64,
    pub var_se: f64,
    pub gaussian_bound: f64,
    pub pass: bool,
}

pub fn bl_variance_check(
    batch: &SampleBatch,
    solver: &Solver,
    nu: &[(usize, f64)],
    a_lower: f64,
) -> BlVarianceReport {
    let series = batch.linear_series(nu);
    let (var_sample, var_se) = stats::jackknife_variance(&series);
    let mut w = vec![0.0; solver.domain().n_interior()];
    for &(i, v) in nu {
        w[i] += v;
    }
    let gw = solver.solve(&w);
    let sigma2 = w.iter().zip(&gw).map(|(a, b)| a * b).sum::<f64>();
    let gaussian_bound = sigma2 / a_lower;
    BlVarianceReport {
        var_sample,
        var_se,
        gaussian_bound,
        pass: var_sample <= gaussian_bound + 3.0 * var_se,
    }
}

/// Exponential Brascamp-Lieb at unit tilt: the centered moment generating
/// function against the exact Gaussian value `exp(sigma*^2 / (2 a))`.
#[derive(Debug, Clone)]
pub struct BlExponentialReport {
    pub mgf_sample: f64,
    pub mgf_se: f64,
    pub gaussian_bound: f64,
    pub pass: bool,
}

pub fn bl_exponential_check(
    batch: &SampleBatch,
    solver: &Solver,
    nu: &[(usize, f64)],
    a_lower: f64,
) -> BlExponentialReport {
    let series = batch.linear_series(nu);
    let m = stats::mean(&series);
    let exps: Vec<f64> = series.iter().map(|v| (v - m).exp()).collect();
    let mgf_sample = stats::mean(&exps);
    let mgf_se = stats::jackknife_mean_se(&exps);
    let mut w = vec![0.0; solver.domain().n_interior()];
    for &(i, v) in nu {
        w[i] += v;
    }
    let gw = solver.solve(&w);
    let sigma2 = w.iter().zip(&gw).map(|(a, b)| a * b).sum::<f64>();
    let gaussian_bound = (sigma2 / (2.0 * a_lower)).exp();
    BlExponentialReport {
        mgf_sample,
        mgf_se,
        gaussian_bound,
        pass: mgf_sample <= gaussian_bound + 3.0 * mgf_se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gff::sample_dgff;
    use crate::harmonic::FieldVector;
    use crate::lattice::SiteIndex;
    use crate::rng::StreamRng;
    use approx::assert_relative_eq;

    fn setup(n: u32) -> (Arc<LatticeDomain>, Solver, TestFunction, f64) {
        let d = LatticeDomain::rectangle(n, n).unwrap();
        let s = Solver::new(&d).unwrap();
        let eps = 1.0 / f64::from(n);
        let f = TestFunction::bump(0.5 * f64::from(n - 1) * eps, 0.5 * f64::from(n - 1) * eps, 0.3);
        (d, s, f, eps)
    }

    #[test]
    fn constant_field_gives_zero() {
        let (d, _, f, eps) = setup(16);
        let field = FieldVector::from_fn(&d, |_| 3.7);
        let xi = field_functional_interior(&d, &field.interior, &field.boundary, &f, eps).unwrap();
        assert_eq!(xi, 0.0);
    }

    #[test]
    fn zero_gradient_test_function_gives_zero() {
        let (d, _, f, eps) = setup(16);
        let zero = f.scaled(0.0);
        let mut rng = StreamRng::new(41, "xi");
        let field = FieldVector::from_fn(&d, |_| rng.gaussian());
        let xi =
            field_functional_interior(&d, &field.interior, &field.boundary, &zero, eps).unwrap();
        assert_eq!(xi, 0.0);
    }

    #[test]
    fn support_touching_boundary_rejected() {
        let d = LatticeDomain::rectangle(8, 8).unwrap();
        let f = TestFunction::bump(0.0, 0.0, 0.5);
        let field = FieldVector::from_fn(&d, |s| f64::from(s.x));
        assert!(matches!(
            field_functional_interior(&d, &field.interior, &field.boundary, &f, 1.0 / 8.0),
            Err(CltError::SupportViolation(_, _))
        ));
    }

    #[test]
    fn bilinear_in_field_and_test_function() {
        let (d, _, f, eps) = setup(12);
        let mut rng = StreamRng::new(42, "bilin");
        let mk = |rng: &mut StreamRng| {
            let mut fv = FieldVector::zeros(&d);
            for v in fv.interior.iter_mut() {
                *v = rng.gaussian();
            }
            fv
        };
        let h1 = mk(&mut rng);
        let h2 = mk(&mut rng);
        let sum: Vec<f64> = h1.interior.iter().zip(&h2.interior).map(|(a, b)| a + b).collect();
        let xi = |fv: &[f64], tf: &TestFunction| {
            field_functional_interior(&d, fv, &h1.boundary, tf, eps).unwrap()
        };
        assert_relative_eq!(
            xi(&sum, &f),
            xi(&h1.interior, &f) + xi(&h2.interior, &f),
            epsilon = 1e-10
        );
        let f2 = f.scaled(2.5);
        assert_relative_eq!(xi(&h1.interior, &f2), 2.5 * xi(&h1.interior, &f), epsilon = 1e-10);
    }

    #[test]
    fn dgff_variance_matches_quadratic_form_oracle() {
        let (d, s, f, eps) = setup(16);
        let n = 4000;
        let batch = sample_dgff(&s, &vec![0.0; d.n_boundary()], n, 43);
        let xs = field_functional_batch(&batch, &f, eps).unwrap();
        let (var, var_se) = stats::jackknife_variance(&xs);
        let oracle = xi_variance_gaussian(&s, &f, eps);
        assert!(
            (var - oracle).abs() <= 3.0 * var_se,
            "var {var} oracle {oracle} se {var_se}"
        );
        assert!(gaussianity_test(&xs).unwrap().passes());
    }

    #[test]
    fn exponential_fake_samples_fail_normality() {
        let mut rng = StreamRng::new(44, "fake");
        let fake: Vec<f64> = (0..1500).map(|_| rng.exponential()).collect();
        assert!(!gaussianity_test(&fake).unwrap().passes());
        assert!(gaussianity_test(&fake[..100]).is_err());
    }

    #[test]
    fn mesh_refinement_variance_stable() {
        // Same continuum bump on n = 17 and n = 34 lattices; the exact
        // Gaussian variances must agree within 10%.
        let f = TestFunction::bump(0.5, 0.5, 0.3);
        let mut vars = Vec::new();
        for n in [17u32, 34] {
            let d = LatticeDomain::rectangle(n - 1, n - 1).unwrap();
            let s = Solver::new(&d).unwrap();
            // map site + 1 -> eps (site + 1): shift the bump instead.
            let eps = 1.0 / f64::from(n);
            let fs = TestFunction::bump(0.5 - eps, 0.5 - eps, 0.3);
            vars.push(xi_variance_gaussian(&s, &fs, eps));
            let _ = &f;
        }
        let rel = (vars[0] - vars[1]).abs() / vars[1];
        assert!(rel < 0.10, "vars {vars:?} rel {rel}");
    }

    #[test]
    fn quadratic_a_v_is_exactly_one() {
        let d = LatticeDomain::rectangle(8, 8).unwrap();
        let s = Solver::new(&d).unwrap();
        let batch = sample_dgff(&s, &vec![0.0; d.n_boundary()], 200, 45);
        let bonds = bulk_bonds(&d);
        assert!(!bonds.is_empty());
        let est = estimate_a_v(&batch, &Potential::quadratic(), &bonds);
        assert_relative_eq!(est.value, 1.0);
        for (_, m, _) in est.per_bond {
            assert_relative_eq!(m, 1.0);
        }
    }

    #[test]
    fn fkg_nonnegative_on_dgff() {
        // DGFF covariances are exactly G >= 0; the one-sided check passes.
        let d = LatticeDomain::rectangle(6, 6).unwrap();
        let s = Solver::new(&d).unwrap();
        let batch = sample_dgff(&s, &vec![0.0; d.n_boundary()], 4000, 46);
        let mut rng = StreamRng::new(9, "fkgpairs");
        let pairs: Vec<(usize, usize)> = (0..20)
            .map(|_| (rng.below(d.n_interior()), rng.below(d.n_interior())))
            .collect();
        for (cov, se) in fkg_pair_covariances(&batch, &pairs) {
            assert!(cov >= -4.0 * se, "cov {cov} se {se}");
        }
    }

    #[test]
    fn bl_checks_tight_for_gaussian_reference() {
        // With a = 1 the bounds are equalities in law for the DGFF itself.
        let d = LatticeDomain::rectangle(8, 8).unwrap();
        let s = Solver::new(&d).unwrap();
        let batch = sample_dgff(&s, &vec![0.0; d.n_boundary()], 6000, 47);
        let c = d.interior_index(&SiteIndex::new(4, 4)).unwrap();
        let l = d.interior_index(&SiteIndex::new(3, 4)).unwrap();
        let r = d.interior_index(&SiteIndex::new(5, 4)).unwrap();
        let nu = [(c, 1.0), (l, 0.5), (r, -0.25)];
        let var = bl_variance_check(&batch, &s, &nu, 1.0);
        assert!(var.pass, "{var:?}");
        assert!((var.var_sample - var.gaussian_bound).abs() <= 4.0 * var.var_se);
        let mgf = bl_exponential_check(&batch, &s, &nu, 1.0);
        assert!(mgf.pass, "{mgf:?}");
    }
}

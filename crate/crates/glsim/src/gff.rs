//! Exact sampling of the discrete Gaussian free field.
//!
//! Fields are drawn as `L^{-T} z` plus the harmonic extension of the
//! boundary data, where `L L^T = -Δ`; the law is exact (mean = harmonic
//! extension, covariance = Green's function), which is what makes these
//! batches usable as the reference oracle for every comparison inequality.

use crate::harmonic::{solve_dirichlet, FieldVector, Solver};
use crate::lattice::{LatticeDomain, SiteIndex, SiteRef};
use crate::rng;
use rayon::prelude::*;
use std::sync::Arc;
use thiserror::Error;

/// A set of replica fields over one domain with shared boundary data.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub domain: Arc<LatticeDomain>,
    pub boundary: Vec<f64>,
    /// Interior values, one vector per replica.
    pub fields: Vec<Vec<f64>>,
    pub seed: u64,
    pub label: String,
    /// Dynamics sample times when the batch came from a trajectory.
    pub times: Option<Vec<f64>>,
}

impl SampleBatch {
    pub fn count(&self) -> usize {
        self.fields.len()
    }

    pub fn field(&self, replica: usize) -> FieldVector {
        FieldVector {
            domain: self.domain.clone(),
            interior: self.fields[replica].clone(),
            boundary: self.boundary.clone(),
        }
    }

    /// Per-replica series of the value at one interior site.
    pub fn site_series(&self, interior_idx: usize) -> Vec<f64> {
        self.fields.iter().map(|f| f[interior_idx]).collect()
    }

    /// Per-replica series of a linear functional of the interior values.
    pub fn linear_series(&self, weights: &[(usize, f64)]) -> Vec<f64> {
        self.fields
            .iter()
            .map(|f| weights.iter().map(|&(i, w)| w * f[i]).sum())
            .collect()
    }

    /// Per-replica series of the signed gradient across a bond.
    pub fn gradient_series(&self, bond: usize) -> Vec<f64> {
        let (rf, rt) = self.domain.bond_refs()[bond];
        self.fields
            .iter()
            .map(|f| {
                let v = |r: SiteRef| match r {
                    SiteRef::Interior(i) => f[i],
                    SiteRef::Boundary(b) => self.boundary[b],
                };
                v(rt) - v(rf)
            })
            .collect()
    }

    /// Mean interior field across replicas.
    pub fn mean_field(&self) -> Vec<f64> {
        let n = self.domain.n_interior();
        let mut m = vec![0.0; n];
        for f in &self.fields {
            for (acc, v) in m.iter_mut().zip(f) {
                *acc += v;
            }
        }
        let c = self.count() as f64;
        m.iter_mut().for_each(|v| *v /= c);
        m
    }
}

#[derive(Debug, Error)]
pub enum GffError {
    #[error("need at least {min} replicas, got {got}")]
    TooFewReplicas { min: usize, got: usize },
    #[error("subdomain site {0:?} is not interior to the domain")]
    NotInterior(SiteIndex),
    #[error("subdomain touches the domain boundary at {0:?}")]
    TouchesBoundary(SiteIndex),
}

/// Draw `count` exact DGFF replicas.
pub fn sample_dgff(
    solver: &Solver,
    boundary_values: &[f64],
    count: usize,
    seed: u64,
) -> SampleBatch {
    let domain = solver.domain().clone();
    let extension = solve_dirichlet(solver, boundary_values);
    let n = domain.n_interior();
    let stream = rng::stream_label(seed, "gff");
    let fields: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|replica| {
            let sub = rng::mix(seed, &[stream, replica as u64]);
            let mut z: Vec<f64> =
                (0..n).map(|i| rng::gaussian(seed, sub, i as u64)).collect();
            solver.back_substitute(&mut z);
            for (v, m) in z.iter_mut().zip(&extension.interior) {
                *v += m;
            }
            z
        })
        .collect();
    SampleBatch {
        domain,
        boundary: boundary_values.to_vec(),
        fields,
        seed,
        label: "dgff".into(),
        times: None,
    }
}

/// Covariance estimate with a jackknife standard error for one site pair.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub x: SiteIndex,
    pub y: SiteIndex,
    pub estimate: f64,
    pub stderr: f64,
}

/// Unbiased sample covariances for the requested site pairs.
pub fn empirical_covariance(
    batch: &SampleBatch,
    pairs: &[(SiteIndex, SiteIndex)],
) -> Result<Vec<CovarianceEstimate>, GffError> {
    if batch.count() < 100 {
        return Err(GffError::TooFewReplicas { min: 100, got: batch.count() });
    }
    pairs
        .iter()
        .map(|(x, y)| {
            let xi = batch
                .domain
                .interior_index(x)
                .ok_or(GffError::NotInterior(*x))?;
            let yi = batch
                .domain
                .interior_index(y)
                .ok_or(GffError::NotInterior(*y))?;
            let xs = batch.site_series(xi);
            let ys = batch.site_series(yi);
            let (estimate, stderr) = crate::harness::stats::jackknife_covariance(&xs, &ys);
            Ok(CovarianceEstimate { x: *x, y: *y, estimate, stderr })
        })
        .collect()
}

/// Markov-property diagnostic over a subdomain `W`.
#[derive(Debug, Clone)]
pub struct MarkovDiagnostic {
    /// Largest |sample correlation| between the zero-boundary part inside W
    /// and the field outside W.
    pub max_abs_correlation: f64,
    pub pairs: usize,
    /// Standard error of a single correlation under independence.
    pub stderr: f64,
}

/// Decompose each replica on `W` into zero-boundary part plus harmonic
/// extension of its trace on the ring of `W`, and correlate the zero part
/// against the field outside `W`. `subtract_extension = false` is the
/// broken variant used as a negative control.
pub fn markov_split(
    batch: &SampleBatch,
    w_sites: &[SiteIndex],
    subtract_extension: bool,
) -> Result<MarkovDiagnostic, GffError> {
    if w_sites.is_empty() {
        return Ok(MarkovDiagnostic { max_abs_correlation: 0.0, pairs: 0, stderr: 0.0 });
    }
    let domain = &batch.domain;
    let mut w_idx = Vec::with_capacity(w_sites.len());
    for s in w_sites {
        let i = domain.interior_index(s).ok_or(GffError::NotInterior(*s))?;
        for nb in domain.neighbors(i) {
            if matches!(nb.site, SiteRef::Boundary(_)) {
                return Err(GffError::TouchesBoundary(*s));
            }
        }
        w_idx.push(i);
    }
    let sub = LatticeDomain::from_interior_components(w_sites.to_vec())
        .expect("nonempty subdomain");
    let sub_solver = Solver::new(&sub).expect("laplacian on subdomain");
    // Ring sites of W live in the interior of the parent domain.
    let ring_parent: Vec<usize> = sub
        .boundary_sites()
        .iter()
        .map(|s| domain.interior_index(s).ok_or(GffError::NotInterior(*s)))
        .collect::<Result<_, _>>()?;

    let in_w: std::collections::HashSet<usize> = w_idx.iter().copied().collect();
    let outside: Vec<usize> = (0..domain.n_interior()).filter(|i| !in_w.contains(i)).collect();

    // Zero-boundary parts per replica.
    let nrep = batch.count();
    let mut zero_parts: Vec<Vec<f64>> = Vec::with_capacity(nrep);
    for f in &batch.fields {
        let bv: Vec<f64> = ring_parent.iter().map(|&i| f[i]).collect();
        let ext = solve_dirichlet(&sub_solver, &bv);
        let part: Vec<f64> = sub
            .interior_sites()
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let parent = domain.interior_index(s).unwrap();
                if subtract_extension {
                    f[parent] - ext.interior[k]
                } else {
                    f[parent]
                }
            })
            .collect();
        zero_parts.push(part);
    }

    let mut max_abs = 0.0f64;
    let mut pairs = 0usize;
    for k in 0..w_idx.len() {
        let zs: Vec<f64> = zero_parts.iter().map(|p| p[k]).collect();
        let sz = crate::harness::stats::variance(&zs).sqrt();
        if sz == 0.0 {
            continue;
        }
        for &o in &outside {
            let os = batch.site_series(o);
            let so = crate::harness::stats::variance(&os).sqrt();
            if so == 0.0 {
                continue;
            }
            let corr = crate::harness::stats::covariance(&zs, &os) / (sz * so);
            max_abs = max_abs.max(corr.abs());
            pairs += 1;
        }
    }
    Ok(MarkovDiagnostic {
        max_abs_correlation: max_abs,
        pairs,
        stderr: 1.0 / (nrep as f64).sqrt(),
    })
}

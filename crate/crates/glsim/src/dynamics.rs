//! Euler-Maruyama integration of the Langevin dynamics
//! `dh(x) = sum_{b ~ x} V'(grad (h v psi)(b)) dt + sqrt(2) dW(x)`, with
//! optional reflecting bands `a(x) <= h(x) <= b(x)`.
//!
//! The update is simultaneous (all sites advance from the old field) and the
//! bands are enforced by coordinatewise clamping; the clamp magnitudes
//! accumulate in the local-time fields. Under the step bound
//! `dt <= 1/(4 A)` the coupled-difference map is a coordinatewise monotone
//! contraction, which is what turns the pathwise comparison statements into
//! exact per-step assertions in the coupling module.

use crate::gff::SampleBatch;
use crate::harmonic::{solve_dirichlet, FieldVector, Solver};
use crate::harness::stats;
use crate::lattice::{LatticeDomain, SiteIndex};
use crate::potential::{anharmonic_v1, Potential, PotentialKind};
use crate::rng::NoiseStream;
use std::sync::Arc;
use thiserror::Error;

/// Per-site conditioning window; infinities disable the constraint.
#[derive(Debug, Clone)]
pub struct BandSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BandSpec {
    pub fn unconstrained(n: usize) -> Self {
        BandSpec { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    /// Positive conditioning `h >= 0` at every site.
    pub fn positive(n: usize) -> Self {
        BandSpec { lower: vec![0.0; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn is_unconstrained_at(&self, i: usize) -> bool {
        self.lower[i] == f64::NEG_INFINITY && self.upper[i] == f64::INFINITY
    }

    pub fn validate(&self) -> bool {
        self.lower.len() == self.upper.len()
            && self.lower.iter().zip(&self.upper).all(|(a, b)| a <= b)
    }
}

/// One Langevin trajectory: mutable interior field, fixed boundary, bands,
/// and the reflection local times.
#[derive(Debug, Clone)]
pub struct DynState {
    pub field: FieldVector,
    pub time: f64,
    pub step_index: u64,
    pub bands: BandSpec,
    pub local_time_lower: Vec<f64>,
    pub local_time_upper: Vec<f64>,
    pub potential: Potential,
    scratch: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum DynError {
    #[error("dt = {dt} exceeds the stability bound 1/(4A) = {bound}")]
    DtTooLarge { dt: f64, bound: f64 },
    #[error("invalid band specification (lower > upper or length mismatch)")]
    BadBands,
    #[error("field became non-finite at step {0}")]
    NonFinite(u64),
    #[error("site {0:?} is conditioned; operation requires an unconditioned site")]
    ConditionedSite(SiteIndex),
    #[error("site {0:?} is not interior")]
    NotInterior(SiteIndex),
}

/// Default step size `0.1 / A`, well inside the stability bound.
pub fn default_dt(potential: &Potential) -> f64 {
    0.1 / potential.a_upper
}

/// Stability bound on the step size.
pub fn max_dt(potential: &Potential) -> f64 {
    1.0 / (4.0 * potential.a_upper)
}

/// Smallest Dirichlet eigenvalue of the simple-walk Laplacian on the
/// bounding box of the domain; conservative for subsets.
fn lambda_min_box(domain: &LatticeDomain) -> f64 {
    let xs: Vec<i32> = domain.interior_sites().iter().map(|s| s.x).collect();
    let ys: Vec<i32> = domain.interior_sites().iter().map(|s| s.y).collect();
    let w = (xs.iter().max().unwrap() - xs.iter().min().unwrap() + 1) as f64;
    let h = (ys.iter().max().unwrap() - ys.iter().min().unwrap() + 1) as f64;
    let lam = |n: f64| 2.0 * (1.0 - (std::f64::consts::PI / (n + 1.0)).cos());
    if h <= 1.0 {
        // Path graphs have no transverse modes.
        lam(w)
    } else {
        lam(w) + lam(h)
    }
}

/// Spectral estimate of the autocorrelation time (in steps) of the slowest
/// mode of the dynamics.
pub fn estimated_iat_steps(domain: &LatticeDomain, potential: &Potential, dt: f64) -> usize {
    let lam = lambda_min_box(domain) * potential.a_lower;
    (2.0 / (dt * lam)).ceil().max(1.0) as usize
}

/// Default burn-in: 20 estimated autocorrelation times, at least 1000 steps.
pub fn default_burnin(domain: &LatticeDomain, potential: &Potential, dt: f64) -> usize {
    (20 * estimated_iat_steps(domain, potential, dt)).max(1000)
}

impl DynState {
    /// Start from the harmonic extension of the boundary data clamped into
    /// the bands.
    pub fn new(
        solver: &Solver,
        psi: &[f64],
        bands: BandSpec,
        potential: Potential,
    ) -> Result<Self, DynError> {
        if !bands.validate() || bands.lower.len() != solver.domain().n_interior() {
            return Err(DynError::BadBands);
        }
        let mut field = solve_dirichlet(solver, psi);
        for (i, v) in field.interior.iter_mut().enumerate() {
            *v = v.clamp(bands.lower[i], bands.upper[i]);
        }
        let n = field.interior.len();
        Ok(DynState {
            field,
            time: 0.0,
            step_index: 0,
            bands,
            local_time_lower: vec![0.0; n],
            local_time_upper: vec![0.0; n],
            potential,
            scratch: vec![0.0; n],
        })
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.field.domain
    }
}

/// Drift at one interior site: `sum_{y ~ x} V'((h v psi)(y) - h(x))`.
/// Equals the discrete Laplacian for the quadratic interaction.
pub fn drift(state: &DynState, x: &SiteIndex) -> Result<f64, DynError> {
    let i = state
        .field
        .domain
        .interior_index(x)
        .ok_or(DynError::NotInterior(*x))?;
    Ok(drift_at(state, i))
}

#[inline]
fn drift_at(state: &DynState, i: usize) -> f64 {
    let d = &state.field.domain;
    let hx = state.field.interior[i];
    let mut s = 0.0;
    match state.potential.kind() {
        PotentialKind::Quadratic => {
            for nb in d.neighbors(i) {
                s += state.field.value(nb.site) - hx;
            }
        }
        PotentialKind::Anharmonic => {
            for nb in d.neighbors(i) {
                s += anharmonic_v1(state.field.value(nb.site) - hx);
            }
        }
        PotentialKind::Custom => {
            for nb in d.neighbors(i) {
                s += state.potential.v1(state.field.value(nb.site) - hx);
            }
        }
    }
    s
}

/// Accumulate the drift of every interior site into `out`. Bond-major:
/// one `V'` evaluation per bond, scattered with opposite signs to the two
/// endpoints (`V'` is odd).
pub(crate) fn accumulate_drift(
    domain: &LatticeDomain,
    interior: &[f64],
    boundary: &[f64],
    potential: &Potential,
    out: &mut [f64],
) {
    out.fill(0.0);
    let refs = domain.bond_refs();
    macro_rules! bond_loop {
        ($v1:expr) => {
            for (rf, rt) in refs {
                let (vf, fi) = match rf {
                    crate::lattice::SiteRef::Interior(i) => (interior[*i], Some(*i)),
                    crate::lattice::SiteRef::Boundary(b) => (boundary[*b], None),
                };
                let (vt, ti) = match rt {
                    crate::lattice::SiteRef::Interior(i) => (interior[*i], Some(*i)),
                    crate::lattice::SiteRef::Boundary(b) => (boundary[*b], None),
                };
                let flux = $v1(vt - vf);
                if let Some(i) = fi {
                    out[i] += flux;
                }
                if let Some(i) = ti {
                    out[i] -= flux;
                }
            }
        };
    }
    match potential.kind() {
        PotentialKind::Quadratic => bond_loop!(|g: f64| g),
        PotentialKind::Anharmonic => bond_loop!(anharmonic_v1),
        PotentialKind::Custom => bond_loop!(|g: f64| potential.v1(g)),
    }
}

/// Core update shared by the live and test integrators: `noise(i, step)`
/// supplies the standard Gaussian increment for site `i`.
pub(crate) fn step_with(
    state: &mut DynState,
    dt: f64,
    noise: impl Fn(usize, u64) -> f64,
) {
    let n = state.field.interior.len();
    let sq = (2.0 * dt).sqrt();
    let step = state.step_index;
    // Simultaneous update: drifts from the old field.
    let mut drift_buf = std::mem::take(&mut state.scratch);
    accumulate_drift(
        &state.field.domain,
        &state.field.interior,
        &state.field.boundary,
        &state.potential,
        &mut drift_buf,
    );
    for i in 0..n {
        let u = state.field.interior[i] + dt * drift_buf[i] + sq * noise(i, step);
        let lo = state.bands.lower[i];
        let hi = state.bands.upper[i];
        let clamped = u.clamp(lo, hi);
        if u < lo {
            state.local_time_lower[i] += lo - u;
        } else if u > hi {
            state.local_time_upper[i] += u - hi;
        }
        state.field.interior[i] = clamped;
        debug_assert!(clamped >= lo && clamped <= hi);
    }
    state.scratch = drift_buf;
    state.time += dt;
    state.step_index += 1;
}

/// One Euler-Maruyama step with band clamping and local-time accounting.
pub fn step(state: &mut DynState, dt: f64, noise: &NoiseStream) -> Result<(), DynError> {
    let bound = max_dt(&state.potential);
    if dt > bound {
        return Err(DynError::DtTooLarge { dt, bound });
    }
    step_with(state, dt, |i, s| noise.gaussian(i as u64, s));
    Ok(())
}

/// Sampling run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dt: f64,
    pub burnin: usize,
    pub samples: usize,
    pub thin: usize,
    pub seed: u64,
}

impl RunConfig {
    /// Spectral defaults for a domain/potential pair.
    pub fn defaults(domain: &LatticeDomain, potential: &Potential, samples: usize, seed: u64) -> Self {
        let dt = default_dt(potential);
        RunConfig {
            dt,
            burnin: default_burnin(domain, potential, dt),
            samples,
            thin: estimated_iat_steps(domain, potential, dt).max(1),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunDiagnostics {
    /// Autocorrelation time (in recorded samples) of the total height.
    pub iat_total_height: f64,
    /// Split R-hat agreement statistic of the total-height series.
    pub rhat: f64,
    pub max_abs_drift: f64,
    pub max_abs_gradient: f64,
    /// Total reflection mass accumulated at either band.
    pub local_time_total: f64,
}

/// Integrate, discard burn-in, and return thinned samples plus diagnostics.
pub fn run(
    solver: &Solver,
    psi: &[f64],
    bands: BandSpec,
    potential: Potential,
    cfg: &RunConfig,
) -> Result<(SampleBatch, RunDiagnostics), DynError> {
    let bound = max_dt(&potential);
    if cfg.dt > bound {
        return Err(DynError::DtTooLarge { dt: cfg.dt, bound });
    }
    let mut state = DynState::new(solver, psi, bands, potential)?;
    let noise = NoiseStream::new(cfg.seed, "langevin");
    for _ in 0..cfg.burnin {
        step_with(&mut state, cfg.dt, |i, s| noise.gaussian(i as u64, s));
    }
    let thin = cfg.thin.max(1);
    let mut fields = Vec::with_capacity(cfg.samples);
    let mut times = Vec::with_capacity(cfg.samples);
    let mut height_series = Vec::with_capacity(cfg.samples);
    let mut max_drift = 0.0f64;
    let mut max_grad = 0.0f64;
    let n = state.field.interior.len();
    for _ in 0..cfg.samples {
        for _ in 0..thin {
            step_with(&mut state, cfg.dt, |i, s| noise.gaussian(i as u64, s));
        }
        if !state.field.interior.iter().all(|v| v.is_finite()) {
            return Err(DynError::NonFinite(state.step_index));
        }
        for i in 0..n {
            max_drift = max_drift.max(drift_at(&state, i).abs());
        }
        for b in 0..state.field.domain.n_bonds() {
            max_grad = max_grad.max(state.field.gradient(b).abs());
        }
        height_series.push(state.field.interior.iter().sum::<f64>());
        times.push(state.time);
        fields.push(state.field.interior.clone());
    }
    let iat = stats::autocorrelation_time(&height_series);
    let rhat = if height_series.len() >= 8 {
        stats::split_rhat(&[&height_series])
    } else {
        1.0
    };
    let local_time_total = state.local_time_lower.iter().sum::<f64>()
        + state.local_time_upper.iter().sum::<f64>();
    let batch = SampleBatch {
        domain: solver.domain().clone(),
        boundary: psi.to_vec(),
        fields,
        seed: cfg.seed,
        label: format!("langevin:{}", state.potential.name),
        times: Some(times),
    };
    Ok((
        batch,
        RunDiagnostics {
            iat_total_height: iat,
            rhat,
            max_abs_drift: max_drift,
            max_abs_gradient: max_grad,
            local_time_total,
        },
    ))
}

/// Stationarity check from Lemma-level flow balance: the Monte-Carlo
/// estimate of `sum_{b ~ x} V'(grad h(b))` with a batch-means CI. The CI
/// covering zero is the acceptance condition; `x` must be unconditioned.
pub fn flow_balance(
    batch: &SampleBatch,
    potential: &Potential,
    bands: &BandSpec,
    x: &SiteIndex,
) -> Result<(f64, f64), DynError> {
    let i = batch
        .domain
        .interior_index(x)
        .ok_or(DynError::NotInterior(*x))?;
    if !bands.is_unconstrained_at(i) {
        return Err(DynError::ConditionedSite(*x));
    }
    let d = &batch.domain;
    let series: Vec<f64> = batch
        .fields
        .iter()
        .map(|f| {
            let hx = f[i];
            d.neighbors(i)
                .iter()
                .map(|nb| {
                    let hv = match nb.site {
                        crate::lattice::SiteRef::Interior(j) => f[j],
                        crate::lattice::SiteRef::Boundary(b) => batch.boundary[b],
                    };
                    potential.v1(hv - hx)
                })
                .sum::<f64>()
        })
        .collect();
    let batches = (series.len() / 4).clamp(2, 32);
    Ok(stats::batch_means(&series, batches))
}

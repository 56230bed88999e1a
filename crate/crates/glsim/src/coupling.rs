//! Synchronous (shared-noise) coupling of two Langevin trajectories.
//!
//! Both chains consume identical Gaussian increments per `(site, step)`.
//! The difference field then evolves by the linear conductance operator
//! whose bond coefficients are the secant quotients
//! `c(b) = [V'(grad h) - V'(grad h~)] / grad (h - h~)`, which the mean value
//! theorem pins inside `[a, A]`. Under `dt <= 1/(4A)` the one-step map
//! `I + dt L` is a monotone L2-contraction, so the energy inequality,
//! stochastic domination, and the contraction property hold exactly per
//! step; this module logs the ledgers and monitors that certify them.

use crate::dynamics::{accumulate_drift, max_dt, DynError, DynState};
use crate::gff::SampleBatch;
use crate::harmonic::{solve_dirichlet, Solver};
use crate::harness::stats;
use crate::lattice::{LatticeDomain, SiteIndex, SiteRef};
use crate::potential::Potential;
use crate::rng::NoiseStream;
use std::sync::Arc;
use thiserror::Error;

/// Two trajectories driven by one noise stream.
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub a: DynState,
    pub b: DynState,
    pub noise: NoiseStream,
    pub same_bands: bool,
    drift_a: Vec<f64>,
    drift_b: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("chains live on different domains")]
    DomainMismatch,
    #[error(transparent)]
    Dynamics(#[from] DynError),
    #[error("ledger range {s}..{t} outside recorded {len} rows")]
    BadRange { s: usize, t: usize, len: usize },
    #[error("boundary data are not ordered pointwise")]
    UnorderedBoundary,
    #[error("erosion radius {0} empties the domain")]
    EmptyErosion(u32),
}

/// Per-step ledger entry. `sum_sq` is the squared L2 norm of the difference
/// after the step; the increments are computed from the pre-step difference.
#[derive(Debug, Clone, Copy)]
pub struct LedgerRow {
    pub t: f64,
    pub sum_sq: f64,
    /// `dt * sum_{interior bonds} |grad hbar|^2`.
    pub dirichlet: f64,
    /// `dt * sum_{boundary bonds} |psibar(x_b)| |grad hbar(b)|`.
    pub boundary_flux: f64,
    /// `dt^2 * sum_x (drift_a - drift_b)^2`.
    pub slack: f64,
}

/// Monitors accumulated over a coupled run.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub rows: Vec<LedgerRow>,
    pub min_conductance: f64,
    pub max_conductance: f64,
    /// First step at which some site had `h_a < h_b` (exact comparison).
    pub first_order_violation: Option<u64>,
    /// First step at which `sum hbar^2` increased (meaningful for equal
    /// boundary data and shared bands).
    pub first_contraction_violation: Option<u64>,
}

/// Discrete energy inequality accounting between two recorded rows.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub violated: bool,
}

impl CoupledState {
    pub fn new(a: DynState, b: DynState, noise: NoiseStream) -> Result<Self, CouplingError> {
        if !Arc::ptr_eq(&a.field.domain, &b.field.domain) {
            return Err(CouplingError::DomainMismatch);
        }
        let same_bands = a.bands.lower == b.bands.lower && a.bands.upper == b.bands.upper;
        let n = a.field.interior.len();
        Ok(CoupledState { a, b, noise, same_bands, drift_a: vec![0.0; n], drift_b: vec![0.0; n] })
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.a.field.domain
    }

    pub fn difference(&self) -> Vec<f64> {
        self.a
            .field
            .interior
            .iter()
            .zip(&self.b.field.interior)
            .map(|(x, y)| x - y)
            .collect()
    }

    fn grad_pair(&self, rf: SiteRef, rt: SiteRef) -> (f64, f64) {
        let ga = self.a.field.value(rt) - self.a.field.value(rf);
        let gb = self.b.field.value(rt) - self.b.field.value(rf);
        (ga, gb)
    }
}

/// Secant conductance of one bond; the zero-gradient limit takes `V''`.
/// Below the cancellation threshold the quotient of nearly equal fluxes is
/// numerically meaningless, and the midpoint `V''` is the same value up to
/// `O(L |ga - gb|)`.
#[inline]
fn secant_conductance(p: &Potential, ga: f64, gb: f64) -> f64 {
    let spread = (ga - gb).abs();
    if spread <= 1e-7 * (1.0 + ga.abs() + gb.abs()) {
        p.v2(0.5 * (ga + gb))
    } else {
        (p.v1(ga) - p.v1(gb)) / (ga - gb)
    }
}

/// Advance both chains one step with identical noise, recording the ledger
/// increments and the conductance window of the pre-step difference.
pub fn step_coupled(cs: &mut CoupledState, dt: f64) -> Result<LedgerRow, CouplingError> {
    let bound = max_dt(&cs.a.potential).min(max_dt(&cs.b.potential));
    if dt > bound {
        return Err(DynError::DtTooLarge { dt, bound }.into());
    }
    step_coupled_with(cs, dt, true)
}

/// Internal variant: `shared = false` gives the chains independent noise
/// (the negative control for the domination and contraction monitors).
pub(crate) fn step_coupled_with(
    cs: &mut CoupledState,
    dt: f64,
    shared: bool,
) -> Result<LedgerRow, CouplingError> {
    let domain = cs.domain().clone();
    let potential = cs.a.potential.clone();

    // Pre-step ledger increments.
    let mut dirichlet = 0.0;
    let mut flux = 0.0;
    for (bidx, &(rf, rt)) in domain.bond_refs().iter().enumerate() {
        let (ga, gb) = cs.grad_pair(rf, rt);
        let gbar = ga - gb;
        if domain.is_boundary_bond(bidx) {
            let psibar = match (rf, rt) {
                (SiteRef::Boundary(z), _) => cs.a.field.boundary[z] - cs.b.field.boundary[z],
                (_, SiteRef::Boundary(z)) => cs.a.field.boundary[z] - cs.b.field.boundary[z],
                _ => unreachable!(),
            };
            flux += psibar.abs() * gbar.abs();
        } else {
            dirichlet += gbar * gbar;
        }
    }

    accumulate_drift(
        &domain,
        &cs.a.field.interior,
        &cs.a.field.boundary,
        &potential,
        &mut cs.drift_a,
    );
    accumulate_drift(
        &domain,
        &cs.b.field.interior,
        &cs.b.field.boundary,
        &potential,
        &mut cs.drift_b,
    );
    let slack: f64 = cs
        .drift_a
        .iter()
        .zip(&cs.drift_b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        * dt
        * dt;

    let noise_b = if shared { cs.noise } else { cs.noise.substream(1) };
    let sq = (2.0 * dt).sqrt();
    let n = cs.a.field.interior.len();
    let step = cs.a.step_index;
    for i in 0..n {
        let za = cs.noise.gaussian(i as u64, step);
        let zb = if shared { za } else { noise_b.gaussian(i as u64, step) };
        let ua = cs.a.field.interior[i] + dt * cs.drift_a[i] + sq * za;
        let ub = cs.b.field.interior[i] + dt * cs.drift_b[i] + sq * zb;
        clamp_into(&mut cs.a, i, ua);
        clamp_into(&mut cs.b, i, ub);
    }
    cs.a.time += dt;
    cs.b.time += dt;
    cs.a.step_index += 1;
    cs.b.step_index += 1;

    let sum_sq = cs.difference().iter().map(|v| v * v).sum();
    Ok(LedgerRow { t: cs.a.time, sum_sq, dirichlet: dt * dirichlet, boundary_flux: dt * flux, slack })
}

#[inline]
fn clamp_into(state: &mut DynState, i: usize, u: f64) {
    let lo = state.bands.lower[i];
    let hi = state.bands.upper[i];
    let c = u.clamp(lo, hi);
    if u < lo {
        state.local_time_lower[i] += lo - u;
    } else if u > hi {
        state.local_time_upper[i] += u - hi;
    }
    state.field.interior[i] = c;
}

/// Run `steps` coupled steps, recording the full ledger and the exact
/// monitors. Row 0 is the initial state.
pub fn run_coupled(
    cs: &mut CoupledState,
    dt: f64,
    steps: usize,
    shared: bool,
) -> Result<CoupledRun, CouplingError> {
    let bound = max_dt(&cs.a.potential).min(max_dt(&cs.b.potential));
    if dt > bound {
        return Err(DynError::DtTooLarge { dt, bound }.into());
    }
    let domain = cs.domain().clone();
    let potential = cs.a.potential.clone();
    let mut rows = Vec::with_capacity(steps + 1);
    let start_sum_sq = cs.difference().iter().map(|v| v * v).sum();
    rows.push(LedgerRow { t: cs.a.time, sum_sq: start_sum_sq, dirichlet: 0.0, boundary_flux: 0.0, slack: 0.0 });
    let mut min_c = f64::INFINITY;
    let mut max_c = f64::NEG_INFINITY;
    let mut first_order = None;
    let mut first_contraction = None;
    let mut prev_sum_sq = start_sum_sq;
    for k in 0..steps {
        // Conductance window of the pre-step configuration.
        for &(rf, rt) in domain.bond_refs() {
            let (ga, gb) = cs.grad_pair(rf, rt);
            let c = secant_conductance(&potential, ga, gb);
            min_c = min_c.min(c);
            max_c = max_c.max(c);
        }
        let row = step_coupled_with(cs, dt, shared)?;
        if first_order.is_none()
            && cs
                .a
                .field
                .interior
                .iter()
                .zip(&cs.b.field.interior)
                .any(|(x, y)| x < y)
        {
            first_order = Some(k as u64 + 1);
        }
        // Strict fp comparison would flag last-bit jitter once the
        // difference has collapsed; allow one part in 1e12.
        if first_contraction.is_none()
            && row.sum_sq > prev_sum_sq * (1.0 + 1e-12) + 1e-28
        {
            first_contraction = Some(k as u64 + 1);
        }
        prev_sum_sq = row.sum_sq;
        rows.push(row);
    }
    Ok(CoupledRun {
        rows,
        min_conductance: min_c,
        max_conductance: max_c,
        first_order_violation: first_order,
        first_contraction_violation: first_contraction,
    })
}

/// Evaluate the energy inequality between recorded rows `s < t` with the
/// declared convexity window.
pub fn energy_ledger(
    rows: &[LedgerRow],
    s: usize,
    t: usize,
    a_lower: f64,
    a_upper: f64,
) -> Result<EnergyReport, CouplingError> {
    if s >= t || t >= rows.len() {
        return Err(CouplingError::BadRange { s, t, len: rows.len() });
    }
    let mut dirichlet = 0.0;
    let mut flux = 0.0;
    let mut slack = 0.0;
    for row in &rows[s + 1..=t] {
        dirichlet += row.dirichlet;
        flux += row.boundary_flux;
        slack += row.slack;
    }
    let lhs = rows[t].sum_sq + 2.0 * a_lower * dirichlet;
    let rhs = rows[s].sum_sq + 2.0 * a_upper * flux;
    // Exact up to accumulated rounding; the epsilon guards 1e2-scale sums.
    let violated = lhs > rhs + slack + 1e-9 * (1.0 + lhs.abs() + rhs.abs());
    Ok(EnergyReport { lhs, rhs, slack, violated })
}

/// First step of a recorded run at which pointwise domination failed, if
/// any. Preconditions (ordered boundary data, shared bands, ordered start)
/// are the caller's; violations are exact comparisons.
pub fn domination_monitor(run: &CoupledRun) -> Option<u64> {
    run.first_order_violation
}

/// Thinned stationary sampling of a coupled pair; returns matching batches
/// for the two chains plus the run monitors of the sampling phase.
pub fn run_coupled_sampling(
    cs: &mut CoupledState,
    dt: f64,
    burnin: usize,
    samples: usize,
    thin: usize,
) -> Result<(SampleBatch, SampleBatch, CoupledRun), CouplingError> {
    for _ in 0..burnin {
        step_coupled(cs, dt)?;
    }
    let thin = thin.max(1);
    let mut fields_a = Vec::with_capacity(samples);
    let mut fields_b = Vec::with_capacity(samples);
    let mut times = Vec::with_capacity(samples);
    let domain = cs.domain().clone();
    let mut rows = Vec::new();
    let mut min_c = f64::INFINITY;
    let mut max_c = f64::NEG_INFINITY;
    for _ in 0..samples {
        let sub = run_coupled(cs, dt, thin, true)?;
        min_c = min_c.min(sub.min_conductance);
        max_c = max_c.max(sub.max_conductance);
        rows.extend_from_slice(&sub.rows[1..]);
        fields_a.push(cs.a.field.interior.clone());
        fields_b.push(cs.b.field.interior.clone());
        times.push(cs.a.time);
    }
    let seed = cs.noise.seed;
    let mk = |fields: Vec<Vec<f64>>, boundary: Vec<f64>, label: &str| SampleBatch {
        domain: domain.clone(),
        boundary,
        fields,
        seed,
        label: label.into(),
        times: Some(times.clone()),
    };
    let batch_a = mk(fields_a, cs.a.field.boundary.clone(), "coupled:a");
    let batch_b = mk(fields_b, cs.b.field.boundary.clone(), "coupled:b");
    Ok((
        batch_a,
        batch_b,
        CoupledRun {
            rows,
            min_conductance: min_c,
            max_conductance: max_c,
            first_order_violation: None,
            first_contraction_violation: None,
        },
    ))
}

/// Difference batch `h - h~` with boundary `psi - psi~`.
pub fn difference_batch(a: &SampleBatch, b: &SampleBatch) -> SampleBatch {
    assert_eq!(a.count(), b.count());
    let fields = a
        .fields
        .iter()
        .zip(&b.fields)
        .map(|(fa, fb)| fa.iter().zip(fb).map(|(x, y)| x - y).collect())
        .collect();
    let boundary = a.boundary.iter().zip(&b.boundary).map(|(x, y)| x - y).collect();
    SampleBatch {
        domain: a.domain.clone(),
        boundary,
        fields,
        seed: a.seed,
        label: "coupled:diff".into(),
        times: a.times.clone(),
    }
}

/// One annulus row of the gradient-decay profile.
#[derive(Debug, Clone)]
pub struct AnnulusRow {
    /// Inner erosion depth of the annulus `D(r)* \ D(r_next)*`.
    pub r: u32,
    pub annulus_sum: f64,
    pub annulus_se: f64,
    /// Cumulative `sum_{b in D(r)*} E |grad hbar(b)|^2`.
    pub cumulative_sum: f64,
    pub cumulative_se: f64,
}

/// Erosion depth at which a bond is still present: a bond belongs to
/// `D(r)*` when one endpoint survives erosion by `r`.
fn bond_depth(domain: &LatticeDomain, bond: usize) -> u32 {
    let (rf, rt) = domain.bond_refs()[bond];
    let d = |r: SiteRef| match r {
        SiteRef::Interior(i) => domain.boundary_distance(i),
        SiteRef::Boundary(_) => 0,
    };
    d(rf).max(d(rt)).saturating_sub(1)
}

/// Mean squared difference-gradient per erosion annulus, with jackknife
/// standard errors over replicas.
pub fn gradient_decay_profile(diff: &SampleBatch, radii: &[u32]) -> Vec<AnnulusRow> {
    let domain = &diff.domain;
    let nrep = diff.count();
    let depths: Vec<u32> = (0..domain.n_bonds()).map(|b| bond_depth(domain, b)).collect();
    // Per-replica sums per radius class.
    let mut rows = Vec::with_capacity(radii.len());
    for (k, &r) in radii.iter().enumerate() {
        let r_next = radii.get(k + 1).copied();
        let mut annulus = Vec::with_capacity(nrep);
        let mut cumulative = Vec::with_capacity(nrep);
        for f in &diff.fields {
            let mut ann = 0.0;
            let mut cum = 0.0;
            for (bidx, &(rf, rt)) in domain.bond_refs().iter().enumerate() {
                let v = |sr: SiteRef| match sr {
                    SiteRef::Interior(i) => f[i],
                    SiteRef::Boundary(b) => diff.boundary[b],
                };
                let g = v(rt) - v(rf);
                let g2 = g * g;
                if depths[bidx] >= r {
                    cum += g2;
                    if r_next.is_none_or(|rn| depths[bidx] < rn) {
                        ann += g2;
                    }
                }
            }
            annulus.push(ann);
            cumulative.push(cum);
        }
        rows.push(AnnulusRow {
            r,
            annulus_sum: stats::mean(&annulus),
            annulus_se: stats::jackknife_mean_se(&annulus),
            cumulative_sum: stats::mean(&cumulative),
            cumulative_se: stats::jackknife_mean_se(&cumulative),
        });
    }
    rows
}

/// Sup-norm deviation of the empirical mean field from its own harmonic
/// extension taken from the ring of `D(r)`.
#[derive(Debug, Clone)]
pub struct HarmonicDeviation {
    pub statistic: f64,
    pub stderr: f64,
    pub argmax: SiteIndex,
}

pub fn harmonic_deviation(batch: &SampleBatch, r: u32) -> Result<HarmonicDeviation, CouplingError> {
    let domain = &batch.domain;
    let eroded = domain.erode(r).ok_or(CouplingError::EmptyErosion(r))?;
    let mean = batch.mean_field();
    // Per-site standard errors via batch means on the replica series.
    let nrep = batch.count();
    let batches = (nrep / 4).clamp(2, 32);
    let se_of = |idx: usize| {
        let series = batch.site_series(idx);
        stats::batch_means(&series, batches).1 / 3.0
    };
    let bv: Vec<f64> = eroded
        .boundary_sites()
        .iter()
        .map(|s| {
            let i = domain
                .interior_index(s)
                .expect("erosion ring lies in the parent interior");
            mean[i]
        })
        .collect();
    let sub_solver = Solver::new(&eroded).expect("laplacian on eroded domain");
    let ext = solve_dirichlet(&sub_solver, &bv);
    let ring_se = eroded
        .boundary_sites()
        .iter()
        .map(|s| se_of(domain.interior_index(s).unwrap()))
        .fold(0.0f64, f64::max);
    let mut statistic = 0.0;
    let mut argmax = eroded.interior_sites()[0];
    for (k, s) in eroded.interior_sites().iter().enumerate() {
        let parent = domain.interior_index(s).unwrap();
        let dev = (mean[parent] - ext.interior[k]).abs();
        if dev > statistic {
            statistic = dev;
            argmax = *s;
        }
    }
    let se = se_of(domain.interior_index(&argmax).unwrap()) + ring_se;
    Ok(HarmonicDeviation { statistic, stderr: se, argmax })
}

/// Exact dirichlet energy of the harmonic extension of boundary data,
/// split by erosion annuli; the oracle for the quadratic decay profile.
pub fn harmonic_extension_profile(
    solver: &Solver,
    boundary_values: &[f64],
    radii: &[u32],
) -> Vec<f64> {
    let field = solve_dirichlet(solver, boundary_values);
    let domain = solver.domain();
    radii
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let r_next = radii.get(k + 1).copied();
            (0..domain.n_bonds())
                .filter(|&b| {
                    let d = bond_depth(domain, b);
                    d >= r && r_next.is_none_or(|rn| d < rn)
                })
                .map(|b| field.gradient(b).powi(2))
                .sum()
        })
        .collect()
}

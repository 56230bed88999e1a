//! The random walk in the recorded dynamic conductance environment.
//!
//! A dynamics trajectory induces time-varying bond rates
//! `c_t(b) = V''(grad (h_t v psi)(b))`, recorded densely per step. Walks are
//! simulated against the frozen recording (quenched view) by thinning with
//! the per-site majorant `4 A`, which is exact for rates that are piecewise
//! constant over the dynamics step. Annealed quantities average over an
//! ensemble of recorded environments.

use crate::dynamics::{max_dt, step_with, BandSpec, DynError, DynState};
use crate::harmonic::{harmonic_measure, Solver};
use crate::harness::stats;
use crate::lattice::{LatticeDomain, SiteIndex, SiteRef};
use crate::potential::{anharmonic_v2, Potential, PotentialKind};
use crate::rng::{NoiseStream, StreamRng};
use std::io::{Read, Write};
use std::sync::Arc;
use thiserror::Error;

/// A recorded conductance environment: per-step, per-bond rates in
/// canonical bond order.
#[derive(Debug, Clone)]
pub struct Environment {
    pub domain: Arc<LatticeDomain>,
    /// Boundary data of the source dynamics (not serialized).
    pub boundary: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    conductances: Vec<f32>,
    /// Observed conductance range; the walk majorant uses the upper end.
    pub c_min: f64,
    pub c_max: f64,
}

#[derive(Debug, Error)]
pub enum WalkError {
    #[error(transparent)]
    Dynamics(#[from] DynError),
    #[error("walk start {0:?} is not interior")]
    NotInterior(SiteIndex),
    #[error("time window [{t0}, {t1}] not covered by the recording")]
    WindowOutOfRange { t0: f64, t1: f64 },
    #[error("{frac:.3} of walks unabsorbed; horizon too short")]
    HorizonTooShort { frac: f64 },
    #[error("empty environment ensemble")]
    EmptyEnsemble,
    #[error("environment io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad environment file: {0}")]
    BadFormat(String),
}

impl Environment {
    #[inline]
    pub fn conductance(&self, step: usize, bond: usize) -> f64 {
        f64::from(self.conductances[step * self.domain.n_bonds() + bond])
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// Mean recorded conductance (the effective diffusion rate per bond).
    pub fn mean_conductance(&self) -> f64 {
        self.conductances.iter().map(|c| f64::from(*c)).sum::<f64>()
            / self.conductances.len() as f64
    }

    /// Recording slab containing time `t` (relative to the recording start).
    #[inline]
    fn slab(&self, t: f64) -> usize {
        ((t / self.dt) as usize).min(self.steps - 1)
    }

    /// Serialize as `glenv v1`: magic, domain JSON, dt, step count, then
    /// per-step f32 conductance rows in canonical bond order.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), WalkError> {
        w.write_all(b"glenv v1\n")?;
        let dj = self.domain.to_json();
        w.write_all(&(dj.len() as u32).to_le_bytes())?;
        w.write_all(dj.as_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&(self.steps as u32).to_le_bytes())?;
        for c in &self.conductances {
            w.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, WalkError> {
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic)?;
        if &magic != b"glenv v1\n" {
            return Err(WalkError::BadFormat("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let jlen = u32::from_le_bytes(u32buf) as usize;
        let mut jbuf = vec![0u8; jlen];
        r.read_exact(&mut jbuf)?;
        let dj = String::from_utf8(jbuf).map_err(|e| WalkError::BadFormat(e.to_string()))?;
        let domain = LatticeDomain::from_json(&dj)
            .map_err(|e| WalkError::BadFormat(e.to_string()))?;
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf)?;
        let dt = f64::from_le_bytes(f64buf);
        r.read_exact(&mut u32buf)?;
        let steps = u32::from_le_bytes(u32buf) as usize;
        let nb = domain.n_bonds();
        let mut conductances = vec![0f32; steps * nb];
        let mut cbuf = [0u8; 4];
        for c in conductances.iter_mut() {
            r.read_exact(&mut cbuf)?;
            *c = f32::from_le_bytes(cbuf);
        }
        let c_min = conductances.iter().copied().fold(f64::INFINITY, |m, v| m.min(f64::from(v)));
        let c_max = conductances.iter().copied().fold(0.0f64, |m, v| m.max(f64::from(v)));
        let boundary = vec![0.0; domain.n_boundary()];
        Ok(Environment { domain, boundary, dt, steps, conductances, c_min, c_max })
    }
}

/// Record `steps` slabs of conductances from a live trajectory, advancing it
/// in place. The slab for `[t, t+dt)` is computed from the pre-step field.
pub fn record_from_state(
    state: &mut DynState,
    dt: f64,
    steps: usize,
    noise: &NoiseStream,
) -> Environment {
    let domain = state.field.domain.clone();
    let nb = domain.n_bonds();
    let mut conductances = Vec::with_capacity(steps * nb);
    let mut c_min = f64::INFINITY;
    let mut c_max = 0.0f64;
    for _ in 0..steps {
        for b in 0..nb {
            let g = state.field.gradient(b);
            let c = match state.potential.kind() {
                PotentialKind::Quadratic => 1.0,
                PotentialKind::Anharmonic => anharmonic_v2(g),
                PotentialKind::Custom => state.potential.v2(g),
            };
            debug_assert!(
                c >= state.potential.a_lower - 1e-9 && c <= state.potential.a_upper + 1e-9,
                "conductance {c} outside declared window"
            );
            c_min = c_min.min(c);
            c_max = c_max.max(c);
            conductances.push(c as f32);
        }
        step_with(state, dt, |i, s| noise.gaussian(i as u64, s));
    }
    Environment {
        domain,
        boundary: state.field.boundary.clone(),
        dt,
        steps,
        conductances,
        c_min,
        c_max,
    }
}

/// Stationary environment source: one burned-in trajectory emitting
/// recording windows separated by a decorrelation gap.
pub struct EnvSource {
    state: DynState,
    noise: NoiseStream,
    dt: f64,
    gap: usize,
}

impl EnvSource {
    pub fn new(
        solver: &Solver,
        psi: &[f64],
        bands: BandSpec,
        potential: Potential,
        dt: f64,
        burnin: usize,
        gap: usize,
        seed: u64,
    ) -> Result<Self, WalkError> {
        let bound = max_dt(&potential);
        if dt > bound {
            return Err(DynError::DtTooLarge { dt, bound }.into());
        }
        let mut state = DynState::new(solver, psi, bands, potential)?;
        let noise = NoiseStream::new(seed, "env");
        for _ in 0..burnin {
            step_with(&mut state, dt, |i, s| noise.gaussian(i as u64, s));
        }
        Ok(EnvSource { state, noise, dt, gap })
    }

    pub fn next_env(&mut self, steps: usize) -> Environment {
        for _ in 0..self.gap {
            step_with(&mut self.state, self.dt, |i, s| self.noise.gaussian(i as u64, s));
        }
        record_from_state(&mut self.state, self.dt, steps, &self.noise)
    }
}

/// One simulated walk.
#[derive(Debug, Clone)]
pub struct WalkPath {
    /// Visited sites; `sites[0]` is the start.
    pub sites: Vec<SiteIndex>,
    /// Arrival times of `sites[1..]`.
    pub jump_times: Vec<f64>,
    pub exit_site: Option<SiteIndex>,
    pub exit_time: Option<f64>,
}

impl WalkPath {
    /// Total time spent at `y` before exit (or before the horizon).
    pub fn occupation(&self, y: &SiteIndex, horizon: f64) -> f64 {
        let mut total = 0.0;
        let end = self.exit_time.unwrap_or(horizon);
        let mut t_here = 0.0;
        for (k, s) in self.sites.iter().enumerate() {
            let t_leave = self.jump_times.get(k).copied().unwrap_or(end);
            if s == y {
                total += t_leave - t_here;
            }
            t_here = t_leave;
        }
        total
    }

    /// Site occupied at time `t`, or the exit site if already absorbed.
    pub fn position(&self, t: f64) -> SiteIndex {
        if let (Some(et), Some(es)) = (self.exit_time, self.exit_site) {
            if t >= et {
                return es;
            }
        }
        let k = self.jump_times.partition_point(|jt| *jt <= t);
        self.sites[k]
    }

    pub fn absorbed(&self) -> bool {
        self.exit_site.is_some()
    }
}

/// Simulate the time-inhomogeneous walk from `x0` over `[0, horizon)` in
/// recording time, jumping across bond `b` at instantaneous rate `c_t(b)`
/// and absorbing on the boundary. Exact thinning with majorant `4 c_max`.
pub fn simulate_walk(
    env: &Environment,
    x0: &SiteIndex,
    horizon: f64,
    rng: &mut StreamRng,
) -> Result<WalkPath, WalkError> {
    let domain = &env.domain;
    let mut here = domain
        .interior_index(x0)
        .ok_or(WalkError::NotInterior(*x0))?;
    if horizon > env.duration() + 1e-9 {
        return Err(WalkError::WindowOutOfRange { t0: 0.0, t1: horizon });
    }
    let majorant = 4.0 * env.c_max;
    let mut t = 0.0;
    let mut sites = vec![*x0];
    let mut jump_times = Vec::new();
    let mut exit_site = None;
    let mut exit_time = None;
    loop {
        t += rng.exponential() / majorant;
        if t >= horizon {
            break;
        }
        let slab = env.slab(t);
        let u = rng.uniform() * majorant;
        let mut acc = 0.0;
        let mut chosen: Option<&crate::lattice::Neighbor> = None;
        for nb in domain.neighbors(here) {
            acc += env.conductance(slab, nb.bond);
            if u < acc {
                chosen = Some(nb);
                break;
            }
        }
        let Some(nb) = chosen else {
            continue; // thinned: no jump at this proposal
        };
        match nb.site {
            SiteRef::Interior(j) => {
                here = j;
                sites.push(domain.interior_sites()[j]);
                jump_times.push(t);
            }
            SiteRef::Boundary(b) => {
                let z = domain.boundary_sites()[b];
                sites.push(z);
                jump_times.push(t);
                exit_site = Some(z);
                exit_time = Some(t);
                break;
            }
        }
    }
    Ok(WalkPath { sites, jump_times, exit_site, exit_time })
}

/// Annealed occupation-time estimate (the covariance representation):
/// mean over `(environment, walk)` of the time spent at `y` before exit.
#[derive(Debug, Clone)]
pub struct OccupationEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub unabsorbed_fraction: f64,
}

pub fn hs_covariance(
    envs: impl IntoIterator<Item = Environment>,
    x: &SiteIndex,
    y: &SiteIndex,
    walks_per_env: usize,
    seed: u64,
) -> Result<OccupationEstimate, WalkError> {
    let mut per_env = Vec::new();
    let mut unabsorbed = 0usize;
    let mut total = 0usize;
    for (k, env) in envs.into_iter().enumerate() {
        let horizon = env.duration();
        let mut acc = 0.0;
        for w in 0..walks_per_env {
            let mut rng =
                StreamRng::new(seed, "hswalk").substream((k * walks_per_env + w) as u64);
            let path = simulate_walk(&env, x, horizon, &mut rng)?;
            if !path.absorbed() {
                unabsorbed += 1;
            }
            total += 1;
            acc += path.occupation(y, horizon);
        }
        per_env.push(acc / walks_per_env as f64);
    }
    if per_env.is_empty() {
        return Err(WalkError::EmptyEnsemble);
    }
    let frac = unabsorbed as f64 / total as f64;
    if frac > 0.01 {
        return Err(WalkError::HorizonTooShort { frac });
    }
    Ok(OccupationEstimate {
        estimate: stats::mean(&per_env),
        stderr: stats::jackknife_mean_se(&per_env),
        unabsorbed_fraction: frac,
    })
}

/// Quadrature form of the mean representation:
/// `E h(x) = int_0^1 E^{r psi} psi(X_tau) dr`, Gauss-Legendre in `r`.
/// `make_envs(r)` must yield environments recorded from stationary dynamics
/// with boundary `r * psi`; the exit functional always evaluates the full
/// `psi`.
pub fn hs_mean(
    psi: &[f64],
    quadrature_nodes: usize,
    mut make_envs: impl FnMut(f64) -> Vec<Environment>,
    x: &SiteIndex,
    walks_per_env: usize,
    seed: u64,
) -> Result<(f64, f64), WalkError> {
    assert!(quadrature_nodes >= 2);
    let rule = stats::gauss_legendre_unit(quadrature_nodes);
    let mut estimate = 0.0;
    let mut var = 0.0;
    for (node_idx, (r, w)) in rule.iter().enumerate() {
        let envs = make_envs(*r);
        if envs.is_empty() {
            return Err(WalkError::EmptyEnsemble);
        }
        let mut per_env = Vec::new();
        for (k, env) in envs.into_iter().enumerate() {
            let horizon = env.duration();
            let mut acc = 0.0;
            let mut absorbed = 0usize;
            for wi in 0..walks_per_env {
                let mut rng = StreamRng::new(seed, "hsmean")
                    .substream((node_idx * 1_000_000 + k * walks_per_env + wi) as u64);
                let path = simulate_walk(&env, x, horizon, &mut rng)?;
                if let Some(z) = path.exit_site {
                    let zb = env.domain.boundary_index(&z).unwrap();
                    acc += psi[zb];
                    absorbed += 1;
                }
            }
            if absorbed == 0 {
                return Err(WalkError::HorizonTooShort { frac: 1.0 });
            }
            per_env.push(acc / absorbed as f64);
        }
        let m = stats::mean(&per_env);
        let se = stats::jackknife_mean_se(&per_env);
        estimate += w * m;
        var += w * w * se * se;
    }
    Ok((estimate, var.sqrt()))
}

/// Empirical exit law against the simple-random-walk harmonic measure.
#[derive(Debug, Clone)]
pub struct ExitLaw {
    /// Empirical exit probability per boundary site (domain order).
    pub probs: Vec<f64>,
    pub tv_to_harmonic: f64,
    /// Expected TV distance of a faithful sampler with this many walks.
    pub noise_floor: f64,
    pub walks: usize,
    pub unabsorbed_fraction: f64,
}

pub fn exit_law(
    envs: impl IntoIterator<Item = Environment>,
    solver: &Solver,
    x0: &SiteIndex,
    walks_per_env: usize,
    seed: u64,
) -> Result<ExitLaw, WalkError> {
    let hm = harmonic_measure(solver, x0).map_err(|_| WalkError::NotInterior(*x0))?;
    let mut counts = vec![0usize; hm.len()];
    let mut total = 0usize;
    let mut unabsorbed = 0usize;
    for (k, env) in envs.into_iter().enumerate() {
        let horizon = env.duration();
        for w in 0..walks_per_env {
            let mut rng =
                StreamRng::new(seed, "exitlaw").substream((k * walks_per_env + w) as u64);
            let path = simulate_walk(&env, x0, horizon, &mut rng)?;
            total += 1;
            match path.exit_site {
                Some(z) => counts[env.domain.boundary_index(&z).unwrap()] += 1,
                None => unabsorbed += 1,
            }
        }
    }
    if total == 0 {
        return Err(WalkError::EmptyEnsemble);
    }
    let absorbed = total - unabsorbed;
    if absorbed == 0 {
        return Err(WalkError::HorizonTooShort { frac: 1.0 });
    }
    let probs: Vec<f64> = counts.iter().map(|c| *c as f64 / absorbed as f64).collect();
    Ok(ExitLaw {
        tv_to_harmonic: stats::tv_distance(&probs, &hm),
        noise_floor: stats::tv_noise_floor(&hm, absorbed),
        probs,
        walks: total,
        unabsorbed_fraction: unabsorbed as f64 / total as f64,
    })
}

/// Fitted Nash-Aronson envelope constants at elapsed time `t`, with time
/// measured on the walk's diffusive clock `tau = (mean total jump rate) t`:
/// `C_hat = max_y p(y) (1 v tau) exp(|x0-y| / (1 v sqrt tau))` and
/// `delta_hat = min_{|x0-y| <= sqrt tau} p(y) (1 v tau)` over the killed
/// kernel. The rate-normalized clock keeps the fitted constants comparable
/// across potentials whose conductance scales differ; for unit rates it is
/// the lemma's own normalization.
#[derive(Debug, Clone)]
pub struct NashEnvelope {
    pub c_hat: f64,
    pub delta_hat: f64,
    pub survivor_fraction: f64,
    pub t: f64,
    /// Diffusive time `tau = 4 c_mean t`.
    pub tau: f64,
}

pub fn heat_kernel_envelope(
    envs: impl IntoIterator<Item = Environment>,
    x0: &SiteIndex,
    t: f64,
    walks_per_env: usize,
    seed: u64,
) -> Result<NashEnvelope, WalkError> {
    let mut counts: std::collections::HashMap<SiteIndex, usize> = std::collections::HashMap::new();
    let mut total = 0usize;
    let mut survivors = 0usize;
    let mut c_mean_sum = 0.0;
    let mut n_envs = 0usize;
    for (k, env) in envs.into_iter().enumerate() {
        c_mean_sum += env.mean_conductance();
        n_envs += 1;
        for w in 0..walks_per_env {
            let mut rng =
                StreamRng::new(seed, "nash").substream((k * walks_per_env + w) as u64);
            let path = simulate_walk(&env, x0, env.duration(), &mut rng)?;
            total += 1;
            // Killed kernel: only walks still alive at time t contribute.
            if path.exit_time.is_none_or(|et| et > t) {
                survivors += 1;
                *counts.entry(path.position(t)).or_default() += 1;
            }
        }
    }
    if total == 0 || n_envs == 0 {
        return Err(WalkError::EmptyEnsemble);
    }
    let tau = 4.0 * (c_mean_sum / n_envs as f64) * t;
    let norm = tau.max(1.0);
    let scale = tau.sqrt().max(1.0);
    let mut c_hat = 0.0f64;
    let mut delta_hat = f64::INFINITY;
    for (site, count) in &counts {
        let p = *count as f64 / total as f64;
        let dist = f64::from((site.x - x0.x).pow(2) + (site.y - x0.y).pow(2)).sqrt();
        c_hat = c_hat.max(p * norm * (dist / scale).exp());
    }
    // Sites never visited inside the diffusive ball force delta to zero, so
    // scan the ball explicitly.
    let rr = tau.sqrt().floor() as i32;
    for dx in -rr..=rr {
        for dy in -rr..=rr {
            if ((dx * dx + dy * dy) as f64).sqrt() > tau.sqrt() {
                continue;
            }
            let site = SiteIndex::new(x0.x + dx, x0.y + dy);
            let count = counts.get(&site).copied().unwrap_or(0);
            delta_hat = delta_hat.min(count as f64 / total as f64 * norm);
        }
    }
    Ok(NashEnvelope {
        c_hat,
        delta_hat,
        survivor_fraction: survivors as f64 / total as f64,
        t,
        tau,
    })
}

/// Empirical first-hitting probability `P[tau_A <= tau_{B(x0,R)}]` with the
/// fitted constant `c1 = p R^2 / |A|`.
#[derive(Debug, Clone)]
pub struct HittingEstimate {
    pub probability: f64,
    pub stderr: f64,
    pub c1_hat: f64,
}

pub fn hitting_lower_bound(
    envs: impl IntoIterator<Item = Environment>,
    x0: &SiteIndex,
    targets: &[SiteIndex],
    radius: f64,
    walks_per_env: usize,
    seed: u64,
) -> Result<HittingEstimate, WalkError> {
    let target_set: std::collections::HashSet<SiteIndex> = targets.iter().copied().collect();
    let mut per_env = Vec::new();
    for (k, env) in envs.into_iter().enumerate() {
        let horizon = env.duration();
        let mut hits = 0usize;
        for w in 0..walks_per_env {
            let mut rng =
                StreamRng::new(seed, "hitting").substream((k * walks_per_env + w) as u64);
            let path = simulate_walk(&env, x0, horizon, &mut rng)?;
            for s in &path.sites {
                let dist =
                    f64::from((s.x - x0.x).pow(2) + (s.y - x0.y).pow(2)).sqrt();
                if dist > radius {
                    break; // left the ball (or was absorbed outside it)
                }
                if target_set.contains(s) {
                    hits += 1;
                    break;
                }
            }
        }
        per_env.push(hits as f64 / walks_per_env as f64);
    }
    if per_env.is_empty() {
        return Err(WalkError::EmptyEnsemble);
    }
    let p = stats::mean(&per_env);
    let se = stats::jackknife_mean_se(&per_env);
    Ok(HittingEstimate {
        probability: p,
        stderr: se,
        c1_hat: p * radius * radius / targets.len() as f64,
    })
}

/// Exact one-jump exit law of a single-interior-site domain, integrated
/// from the recorded piecewise-constant rates; the enumeration oracle for
/// the thinning simulator.
pub fn one_jump_exit_law(env: &Environment) -> Vec<f64> {
    let domain = &env.domain;
    assert_eq!(domain.n_interior(), 1);
    let nb = domain.neighbors(0);
    let mut probs = vec![0.0; domain.n_boundary()];
    let mut survival = 1.0;
    for step in 0..env.steps {
        let total: f64 = nb.iter().map(|n| env.conductance(step, n.bond)).sum();
        let decay = (-total * env.dt).exp();
        for n in nb {
            if let SiteRef::Boundary(b) = n.site {
                probs[b] += survival * env.conductance(step, n.bond) / total * (1.0 - decay);
            }
        }
        survival *= decay;
    }
    // Conditional on absorption within the recording window.
    let mass: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= mass);
    probs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::default_burnin;
    use crate::harmonic::solve_dirichlet;
    use approx::assert_relative_eq;

    fn quadratic_env_source(domain: &Arc<LatticeDomain>, seed: u64) -> EnvSource {
        let solver = Solver::new(domain).unwrap();
        let p = Potential::quadratic();
        let dt = 0.1;
        EnvSource::new(
            &solver,
            &vec![0.0; domain.n_boundary()],
            BandSpec::unconstrained(domain.n_interior()),
            p,
            dt,
            default_burnin(domain, &Potential::quadratic(), dt),
            50,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn quadratic_conductances_are_one() {
        let d = LatticeDomain::rectangle(3, 3).unwrap();
        let mut src = quadratic_env_source(&d, 1);
        let env = src.next_env(20);
        for step in 0..env.steps {
            for b in 0..d.n_bonds() {
                assert_eq!(env.conductance(step, b), 1.0);
            }
        }
        assert_eq!(env.c_min, 1.0);
        assert_eq!(env.c_max, 1.0);
    }

    #[test]
    fn anharmonic_conductances_in_window() {
        let d = LatticeDomain::rectangle(4, 4).unwrap();
        let solver = Solver::new(&d).unwrap();
        let p = Potential::anharmonic();
        let dt = 0.9 * max_dt(&p);
        let mut src = EnvSource::new(
            &solver,
            &vec![1.0; d.n_boundary()],
            BandSpec::unconstrained(16),
            p.clone(),
            dt,
            2000,
            10,
            2,
        )
        .unwrap();
        let env = src.next_env(100);
        assert!(env.c_min >= p.a_lower && env.c_max <= p.a_upper);
    }

    #[test]
    fn environment_recording_is_deterministic() {
        let d = LatticeDomain::rectangle(3, 3).unwrap();
        let env1 = quadratic_env_source(&d, 9).next_env(30);
        let env2 = quadratic_env_source(&d, 9).next_env(30);
        assert_eq!(env1.conductances, env2.conductances);
    }

    #[test]
    fn environment_round_trips_through_binary() {
        let d = LatticeDomain::rectangle(3, 2).unwrap();
        let solver = Solver::new(&d).unwrap();
        let p = Potential::anharmonic();
        let dt = 0.5 * max_dt(&p);
        let mut src = EnvSource::new(
            &solver,
            &vec![0.5; d.n_boundary()],
            BandSpec::unconstrained(6),
            p,
            dt,
            500,
            5,
            3,
        )
        .unwrap();
        let env = src.next_env(40);
        let mut buf = Vec::new();
        env.write_to(&mut buf).unwrap();
        let back = Environment::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.steps, env.steps);
        assert_eq!(back.dt, env.dt);
        assert_eq!(back.conductances, env.conductances);
        assert_eq!(back.domain.interior_sites(), env.domain.interior_sites());
    }

    #[test]
    fn single_site_exit_uniform_and_one_jump_oracle() {
        let d = LatticeDomain::rectangle(1, 1).unwrap();
        let solver = Solver::new(&d).unwrap();
        let x0 = SiteIndex::new(0, 0);
        // Quadratic: exit law is uniform over the four boundary sites.
        let mut src = quadratic_env_source(&d, 4);
        let envs: Vec<Environment> = (0..10).map(|_| src.next_env(400)).collect();
        let law = exit_law(envs.clone().into_iter(), &solver, &x0, 400, 77).unwrap();
        assert!(law.unabsorbed_fraction < 1e-3);
        assert!(
            law.tv_to_harmonic <= 3.0 * law.noise_floor,
            "tv {} floor {}",
            law.tv_to_harmonic,
            law.noise_floor
        );

        // Anharmonic: walks must match the per-environment enumeration.
        let p = Potential::anharmonic();
        let dt = 0.9 * max_dt(&p);
        let mut src = EnvSource::new(
            &solver,
            &vec![0.7; 4],
            BandSpec::unconstrained(1),
            p,
            dt,
            2000,
            20,
            5,
        )
        .unwrap();
        let envs: Vec<Environment> = (0..8).map(|_| src.next_env(600)).collect();
        let mut oracle = vec![0.0; 4];
        for env in &envs {
            for (o, p) in oracle.iter_mut().zip(one_jump_exit_law(env)) {
                *o += p / 8.0;
            }
        }
        let walks = 1500;
        let law = exit_law(envs.into_iter(), &solver, &x0, walks, 78).unwrap();
        let tv = stats::tv_distance(&law.probs, &oracle);
        let floor = stats::tv_noise_floor(&oracle, 8 * walks);
        assert!(tv <= 3.0 * floor, "tv {tv} floor {floor}");
    }

    #[test]
    fn quadratic_occupation_time_matches_greens() {
        // Path graph: occupation(2,2) = G(2,2) = 1.0, occupation(1,3) = 0.25.
        let d = LatticeDomain::path(3).unwrap();
        let mut src = quadratic_env_source(&d, 6);
        let envs: Vec<Environment> = (0..40).map(|_| src.next_env(1500)).collect();
        let x = SiteIndex::new(2, 0);
        let est = hs_covariance(envs.clone().into_iter(), &x, &x, 120, 79).unwrap();
        assert!(
            (est.estimate - 1.0).abs() <= 3.0 * est.stderr,
            "occ {} +- {}",
            est.estimate,
            est.stderr
        );
        let est = hs_covariance(
            envs.into_iter(),
            &SiteIndex::new(1, 0),
            &SiteIndex::new(3, 0),
            120,
            80,
        )
        .unwrap();
        assert!(
            (est.estimate - 0.25).abs() <= 3.0 * est.stderr,
            "occ {} +- {}",
            est.estimate,
            est.stderr
        );
    }

    #[test]
    fn quadratic_exit_law_matches_harmonic_measure() {
        let d = LatticeDomain::rectangle(5, 5).unwrap();
        let solver = Solver::new(&d).unwrap();
        let mut src = quadratic_env_source(&d, 7);
        let envs: Vec<Environment> = (0..12).map(|_| src.next_env(3000)).collect();
        let x0 = SiteIndex::new(2, 2);
        let law = exit_law(envs.into_iter(), &solver, &x0, 800, 81).unwrap();
        assert!(law.unabsorbed_fraction < 0.01);
        assert!(
            law.tv_to_harmonic <= 2.0 * law.noise_floor,
            "tv {} floor {}",
            law.tv_to_harmonic,
            law.noise_floor
        );
    }

    #[test]
    fn hs_mean_constant_boundary_is_exact() {
        let d = LatticeDomain::rectangle(3, 3).unwrap();
        let mut src = quadratic_env_source(&d, 8);
        let psi = vec![2.5; d.n_boundary()];
        let mut bank: Vec<Vec<Environment>> = Vec::new();
        for _ in 0..4 {
            bank.push((0..4).map(|_| src.next_env(1200)).collect());
        }
        // Quadratic rates do not depend on the boundary scale, so reusing
        // the zero-boundary environments at every node is the exact law.
        let mut k = 0;
        let (est, _se) = hs_mean(
            &psi,
            4,
            |_r| {
                k += 1;
                bank[k - 1].clone()
            },
            &SiteIndex::new(1, 1),
            200,
            82,
        )
        .unwrap();
        assert_relative_eq!(est, 2.5, epsilon = 1e-9);
    }

    #[test]
    fn hs_mean_quadrature_matches_harmonic_extension() {
        let d = LatticeDomain::rectangle(3, 3).unwrap();
        let solver = Solver::new(&d).unwrap();
        let psi: Vec<f64> = d
            .boundary_sites()
            .iter()
            .map(|z| if z.x > 1 { 1.0 } else { -0.5 })
            .collect();
        let x = SiteIndex::new(1, 1);
        let ext = solve_dirichlet(&solver, &psi);
        let expect = ext.interior[d.interior_index(&x).unwrap()];
        let mut src = quadratic_env_source(&d, 9);
        let (est, se) = hs_mean(
            &psi,
            3,
            |_r| (0..6).map(|_| src.next_env(1200)).collect(),
            &x,
            400,
            83,
        )
        .unwrap();
        assert!((est - expect).abs() <= 3.0 * se, "est {est} expect {expect} se {se}");
    }

    #[test]
    fn envelope_short_time_limit() {
        // As t -> 0+ the killed kernel concentrates at the start, so
        // p(x0) -> 1 and the envelope stays finite (~1).
        let d = LatticeDomain::rectangle(5, 5).unwrap();
        let mut src = quadratic_env_source(&d, 31);
        let envs: Vec<Environment> = (0..3).map(|_| src.next_env(200)).collect();
        let env = heat_kernel_envelope(
            envs.into_iter(),
            &SiteIndex::new(2, 2),
            1e-4,
            400,
            32,
        )
        .unwrap();
        assert!(env.c_hat > 0.9 && env.c_hat <= 1.1, "c {}", env.c_hat);
        assert!(env.delta_hat > 0.9, "delta {}", env.delta_hat);
    }

    #[test]
    fn hs_mean_anharmonic_matches_direct_mean() {
        // Non-constant integrand in r: the quadrature against environments
        // recorded at boundary r*psi must agree with the direct Monte-Carlo
        // mean of the field.
        let d = LatticeDomain::rectangle(8, 8).unwrap();
        let solver = Solver::new(&d).unwrap();
        let p = Potential::anharmonic();
        let dt = 0.5 * max_dt(&p);
        let ts = crate::interface::make_two_sided(
            &d,
            &SiteIndex::new(4, -1),
            &SiteIndex::new(3, 8),
            1.0,
        )
        .unwrap();
        let x = SiteIndex::new(4, 4);
        // Direct mean from stationary dynamics.
        let cfg = crate::dynamics::RunConfig {
            dt,
            burnin: 20_000,
            samples: 1500,
            thin: 60,
            seed: 41,
        };
        let (batch, _) = crate::dynamics::run(
            &solver,
            &ts.psi,
            BandSpec::unconstrained(d.n_interior()),
            p.clone(),
            &cfg,
        )
        .unwrap();
        let series = batch.site_series(d.interior_index(&x).unwrap());
        let (direct, direct_hw) = crate::harness::stats::batch_means(&series, 25);
        let (est, se) = hs_mean(
            &ts.psi,
            4,
            |r| {
                let scaled: Vec<f64> = ts.psi.iter().map(|v| r * v).collect();
                let mut src = EnvSource::new(
                    &solver,
                    &scaled,
                    BandSpec::unconstrained(d.n_interior()),
                    p.clone(),
                    dt,
                    8_000,
                    200,
                    42 + (r * 1e6) as u64,
                )
                .unwrap();
                (0..6).map(|_| src.next_env(2500)).collect()
            },
            &x,
            300,
            43,
        )
        .unwrap();
        let joint = (se * se + (direct_hw / 3.0) * (direct_hw / 3.0)).sqrt();
        assert!(
            (est - direct).abs() <= 4.0 * joint,
            "hs mean {est} vs direct {direct} (joint se {joint})"
        );
    }

    #[test]
    fn walk_rates_within_degree_bounds() {
        // Thinning bookkeeping: per-site total rate within [deg a, deg A].
        let d = LatticeDomain::rectangle(4, 4).unwrap();
        let solver = Solver::new(&d).unwrap();
        let p = Potential::anharmonic();
        let dt = 0.9 * max_dt(&p);
        let mut src = EnvSource::new(
            &solver,
            &vec![0.0; d.n_boundary()],
            BandSpec::unconstrained(16),
            p.clone(),
            dt,
            1000,
            10,
            11,
        )
        .unwrap();
        let env = src.next_env(50);
        for step in 0..env.steps {
            for i in 0..d.n_interior() {
                let total: f64 = d
                    .neighbors(i)
                    .iter()
                    .map(|nb| env.conductance(step, nb.bond))
                    .sum();
                let deg = d.degree(i) as f64;
                assert!(total >= deg * p.a_lower - 1e-6);
                assert!(total <= deg * p.a_upper + 1e-6);
            }
        }
    }
}

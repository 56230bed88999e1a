//! `glsim`: sampling, dynamics, coupling, environment-walk, functional, and
//! interface runs from TOML configs, plus the acceptance-suite runner.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use glsim::dynamics::{self, BandSpec};
use glsim::gff::{sample_dgff, SampleBatch};
use glsim::harmonic::Solver;
use glsim::harness::config::ExperimentConfig;
use glsim::harness::report::{write_reports_csv, write_reports_json};
use glsim::harness::verify::{run_verify, Budget, Suite};
use glsim::hswalk::{self, Environment};
use glsim::interface;
use glsim::lattice::{LatticeDomain, SiteIndex};
use glsim::rng::StreamRng;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "glsim", about = "Gradient-interface lattice simulator", version)]
struct Cli {
    /// Root seed for all randomness.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output directory for report files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the exact discrete Gaussian free field.
    Dgff(DgffArgs),
    /// Integrate the Langevin dynamics and emit thinned samples.
    Langevin(LangevinArgs),
    /// Run a shared-noise coupled pair and emit the energy ledger.
    Couple(CoupleArgs),
    /// Simulate walks in a recorded environment and emit exit data.
    Hswalk(HswalkArgs),
    /// Evaluate the gradient functional over a sample file.
    Clt(CltArgs),
    /// Trace zero-height interfaces; optionally emit the martingale table.
    Interface(InterfaceArgs),
    /// Run acceptance suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct DgffArgs {
    /// Domain spec: rect:W,H | disk:R,S | path:N.
    #[arg(long)]
    domain: String,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Constant boundary value.
    #[arg(long, default_value_t = 0.0)]
    boundary: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LangevinArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Record a conductance environment after burn-in.
    #[arg(long)]
    record_env: Option<PathBuf>,
    /// Recorded steps for --record-env.
    #[arg(long, default_value_t = 2000)]
    env_steps: usize,
}

#[derive(Args)]
struct CoupleArgs {
    #[arg(long)]
    config: PathBuf,
    /// Second boundary condition (constant) for the coupled partner.
    #[arg(long, default_value_t = 0.0)]
    psi_b: f64,
    /// Coupled steps to run.
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HswalkArgs {
    /// Environment file written by `langevin --record-env`.
    #[arg(long)]
    env: PathBuf,
    /// Start site "X,Y".
    #[arg(long)]
    from: String,
    #[arg(long, default_value_t = 1000)]
    walks: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CltArgs {
    /// Sample CSV written by `dgff` or `langevin`.
    #[arg(long)]
    samples: PathBuf,
    /// Test function (only `bump` is built in).
    #[arg(long, default_value = "bump")]
    testfn: String,
    /// Mesh, e.g. "1/32" or "0.03125".
    #[arg(long)]
    epsilon: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InterfaceArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also emit the martingale diagnostic table.
    #[arg(long, default_value_t = false)]
    diag: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// exact | quadratic | anharmonic | interface | heatkernel | all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// low | default.
    #[arg(long, default_value = "default")]
    budget: String,
}

fn parse_domain(spec: &str) -> Result<Arc<LatticeDomain>> {
    let (kind, rest) = spec
        .split_once(':')
        .with_context(|| format!("bad domain spec `{spec}`"))?;
    let parts: Vec<&str> = rest.split(',').collect();
    Ok(match kind {
        "rect" => {
            if parts.len() != 2 {
                bail!("rect:W,H expected");
            }
            LatticeDomain::rectangle(parts[0].parse()?, parts[1].parse()?)?
        }
        "disk" => {
            if parts.len() != 2 {
                bail!("disk:R,S expected");
            }
            LatticeDomain::disk(parts[0].parse()?, parts[1].parse()?)?
        }
        "path" => LatticeDomain::path(parts[0].parse()?)?,
        other => bail!("unknown domain kind `{other}`"),
    })
}

fn write_batch_csv(path: &Path, batch: &SampleBatch, with_time: bool) -> Result<()> {
    let mut f = fs::File::create(path)?;
    if with_time {
        writeln!(f, "replica,site_x,site_y,value,time")?;
    } else {
        writeln!(f, "replica,site_x,site_y,value")?;
    }
    for (r, field) in batch.fields.iter().enumerate() {
        for (i, s) in batch.domain.interior_sites().iter().enumerate() {
            if with_time {
                let t = batch.times.as_ref().map_or(0.0, |ts| ts[r]);
                writeln!(f, "{r},{},{},{},{t}", s.x, s.y, field[i])?;
            } else {
                writeln!(f, "{r},{},{},{}", s.x, s.y, field[i])?;
            }
        }
    }
    Ok(())
}

fn read_batch_csv(path: &Path) -> Result<SampleBatch> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().context("empty sample file")?;
    let has_time = header.trim_end().ends_with("time");
    let mut sites: Vec<SiteIndex> = Vec::new();
    let mut rows: Vec<(usize, SiteIndex, f64)> = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let need = if has_time { 5 } else { 4 };
        if cols.len() != need {
            bail!("bad sample row: {line}");
        }
        let r: usize = cols[0].parse()?;
        let s = SiteIndex::new(cols[1].parse()?, cols[2].parse()?);
        let v: f64 = cols[3].parse()?;
        if r == 0 {
            sites.push(s);
        }
        rows.push((r, s, v));
    }
    let domain = LatticeDomain::from_interior(sites.clone())
        .context("rebuilding the domain from sample sites")?;
    let nrep = rows.iter().map(|(r, _, _)| *r).max().unwrap_or(0) + 1;
    let mut fields = vec![vec![0.0; domain.n_interior()]; nrep];
    for (r, s, v) in rows {
        let i = domain
            .interior_index(&s)
            .context("site outside the rebuilt domain")?;
        fields[r][i] = v;
    }
    Ok(SampleBatch {
        domain: domain.clone(),
        boundary: vec![0.0; domain.n_boundary()],
        fields,
        seed: 0,
        label: "csv".into(),
        times: None,
    })
}

fn parse_epsilon(s: &str) -> Result<f64> {
    if let Some((a, b)) = s.split_once('/') {
        Ok(a.trim().parse::<f64>()? / b.trim().parse::<f64>()?)
    } else {
        Ok(s.trim().parse()?)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    fs::create_dir_all(&cli.out_dir).ok();

    match cli.command {
        Command::Dgff(a) => {
            let domain = parse_domain(&a.domain)?;
            let solver = Solver::new(&domain)?;
            let bv = vec![a.boundary; domain.n_boundary()];
            let batch = sample_dgff(&solver, &bv, a.count, cli.seed);
            write_batch_csv(&a.out, &batch, false)?;
            eprintln!("wrote {} replicas to {}", batch.count(), a.out.display());
        }
        Command::Langevin(a) => {
            let cfg = ExperimentConfig::from_toml(&fs::read_to_string(&a.config)?)?;
            let domain = cfg.build_domain()?;
            let potential = cfg.build_potential()?;
            let solver = Solver::new(&domain)?;
            let (psi, _) = cfg.boundary_values(&domain)?;
            let bands = cfg.build_bands(&domain);
            let rc = cfg.run_config(&domain, &potential);
            let (batch, diag) =
                dynamics::run(&solver, &psi, bands.clone(), potential.clone(), &rc)?;
            write_batch_csv(&a.out, &batch, true)?;
            eprintln!(
                "wrote {} samples (iat {:.1}, rhat {:.3}) to {}",
                batch.count(),
                diag.iat_total_height,
                diag.rhat,
                a.out.display()
            );
            if let Some(env_path) = a.record_env {
                let mut src = hswalk::EnvSource::new(
                    &solver,
                    &psi,
                    bands,
                    potential,
                    rc.dt,
                    rc.burnin,
                    0,
                    rc.seed.wrapping_add(1),
                )?;
                let env = src.next_env(a.env_steps);
                let mut f = fs::File::create(&env_path)?;
                env.write_to(&mut f)?;
                eprintln!("recorded {} env steps to {}", a.env_steps, env_path.display());
            }
        }
        Command::Couple(a) => {
            let cfg = ExperimentConfig::from_toml(&fs::read_to_string(&a.config)?)?;
            let domain = cfg.build_domain()?;
            let potential = cfg.build_potential()?;
            let solver = Solver::new(&domain)?;
            let (psi, _) = cfg.boundary_values(&domain)?;
            let bands = cfg.build_bands(&domain);
            let psi_b = vec![a.psi_b; domain.n_boundary()];
            let dt = cfg
                .dt
                .unwrap_or_else(|| dynamics::default_dt(&potential));
            let sa = dynamics::DynState::new(&solver, &psi, bands.clone(), potential.clone())?;
            let sb = dynamics::DynState::new(&solver, &psi_b, bands, potential)?;
            let mut cs = glsim::coupling::CoupledState::new(
                sa,
                sb,
                glsim::rng::NoiseStream::new(cfg.seed, "cli-couple"),
            )?;
            let run = glsim::coupling::run_coupled(&mut cs, dt, a.steps, true)?;
            let mut f = fs::File::create(&a.out)?;
            writeln!(f, "t,sumSq,dirichlet,boundaryFlux,slack")?;
            for row in &run.rows {
                writeln!(
                    f,
                    "{},{},{},{},{}",
                    row.t, row.sum_sq, row.dirichlet, row.boundary_flux, row.slack
                )?;
            }
            let report = glsim::coupling::energy_ledger(
                &run.rows,
                0,
                run.rows.len() - 1,
                cs.a.potential.a_lower,
                cs.a.potential.a_upper,
            )?;
            eprintln!(
                "ledger: lhs {:.4} rhs {:.4} slack {:.4} violated {}",
                report.lhs, report.rhs, report.slack, report.violated
            );
        }
        Command::Hswalk(a) => {
            let mut f = fs::File::open(&a.env)?;
            let env = Environment::read_from(&mut f)?;
            let (xs, ys) = a.from.split_once(',').context("--from X,Y")?;
            let x0 = SiteIndex::new(xs.parse()?, ys.parse()?);
            let mut out = fs::File::create(&a.out)?;
            writeln!(out, "walk,exit_x,exit_y,exit_time")?;
            let mut unabsorbed = 0usize;
            for w in 0..a.walks {
                let mut rng = StreamRng::new(cli.seed, "cli-walk").substream(w as u64);
                let path = hswalk::simulate_walk(&env, &x0, env.duration(), &mut rng)?;
                match (path.exit_site, path.exit_time) {
                    (Some(z), Some(t)) => writeln!(out, "{w},{},{},{t}", z.x, z.y)?,
                    _ => unabsorbed += 1,
                }
            }
            eprintln!(
                "{} walks, {} unabsorbed ({}%)",
                a.walks,
                unabsorbed,
                100.0 * unabsorbed as f64 / a.walks as f64
            );
        }
        Command::Clt(a) => {
            if a.testfn != "bump" {
                bail!("unknown test function `{}`", a.testfn);
            }
            let batch = read_batch_csv(&a.samples)?;
            let eps = parse_epsilon(&a.epsilon)?;
            let sites = batch.domain.interior_sites();
            let cx = eps * sites.iter().map(|s| f64::from(s.x)).sum::<f64>() / sites.len() as f64;
            let cy = eps * sites.iter().map(|s| f64::from(s.y)).sum::<f64>() / sites.len() as f64;
            let width = sites.iter().map(|s| s.x).max().unwrap()
                - sites.iter().map(|s| s.x).min().unwrap();
            let radius = 0.3 * eps * f64::from(width);
            let f = glsim::clt::TestFunction::bump(cx, cy, radius);
            let xs = glsim::clt::field_functional_batch(&batch, &f, eps)?;
            let mut out = fs::File::create(&a.out)?;
            writeln!(out, "replica,xi")?;
            for (r, v) in xs.iter().enumerate() {
                writeln!(out, "{r},{v}")?;
            }
            eprintln!("wrote {} functional samples to {}", xs.len(), a.out.display());
        }
        Command::Interface(a) => {
            let cfg = ExperimentConfig::from_toml(&fs::read_to_string(&a.config)?)?;
            let domain = cfg.build_domain()?;
            let solver = Solver::new(&domain)?;
            let (psi, ts) = cfg.boundary_values(&domain)?;
            let ts = ts.context("interface runs need a two_sided boundary")?;
            let potential = cfg.build_potential()?;
            let batch = if potential.is_quadratic() {
                sample_dgff(&solver, &psi, cfg.samples, cfg.seed)
            } else {
                let rc = cfg.run_config(&domain, &potential);
                dynamics::run(
                    &solver,
                    &psi,
                    BandSpec::unconstrained(domain.n_interior()),
                    potential,
                    &rc,
                )?
                .0
            };
            // Trace the first replica to the path file.
            let field = batch.field(0);
            let path = interface::trace(&field, &ts)?;
            let mut f = fs::File::create(&a.out)?;
            writeln!(f, "step,dual_from_x,dual_from_y,dual_to_x,dual_to_y")?;
            for (k, e) in path.edges.iter().enumerate() {
                let h = e.head_square();
                writeln!(f, "{k},{},{},{},{}", e.square.0, e.square.1, h.0, h.1)?;
            }
            eprintln!("traced {} dual edges to {}", path.len(), a.out.display());
            if a.diag {
                let z = {
                    let c = domain.center_site();
                    SiteIndex::new(c.x / 2, c.y)
                };
                // Exclusion distance scales down with the domain so small
                // test domains keep enough replicas.
                let width = domain
                    .interior_sites()
                    .iter()
                    .map(|s| s.x)
                    .max()
                    .unwrap()
                    - domain.interior_sites().iter().map(|s| s.x).min().unwrap();
                let min_dist = (f64::from(width) / 5.0).clamp(2.0, 5.0);
                let diag = interface::martingale_diagnostic(&batch, &ts, &z, 5, 5, min_dist)?;
                let dpath = a.out.with_extension("diag.csv");
                let mut f = fs::File::create(&dpath)?;
                writeln!(f, "z_x,z_y,t,s,estimate,stderr,used,excluded")?;
                writeln!(
                    f,
                    "{},{},5,5,{},{},{},{}",
                    z.x, z.y, diag.estimate, diag.stderr, diag.used, diag.excluded
                )?;
                eprintln!("martingale diagnostic written to {}", dpath.display());
            }
        }
        Command::Verify(a) => {
            let suites: Vec<Suite> = if a.suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![Suite::from_name(&a.suite)
                    .with_context(|| format!("unknown suite `{}`", a.suite))?]
            };
            let budget = match a.budget.as_str() {
                "low" => Budget::Low,
                "default" => Budget::Default,
                other => bail!("unknown budget `{other}`"),
            };
            let (reports, ok) = run_verify(&suites, budget, cli.seed);
            write_reports_json(&cli.out_dir.join("reports.json"), &reports)?;
            write_reports_csv(&cli.out_dir.join("reports.csv"), &reports)?;
            eprintln!(
                "{} of {} checks passed; reports in {}",
                reports.iter().filter(|r| r.pass).count(),
                reports.len(),
                cli.out_dir.display()
            );
            if !ok {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}

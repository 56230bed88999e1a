//! TOML experiment configuration shared by the CLI subcommands.

use crate::dynamics::{self, BandSpec, RunConfig};
use crate::interface::{make_two_sided, TwoSidedBoundary};
use crate::lattice::{LatticeDomain, SiteIndex};
use crate::potential::Potential;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Rectangle { width: u32, height: u32 },
    Disk { radius: f64, scale: u32 },
    Path { n: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PotentialSpec {
    pub name: String,
    /// Optional overrides of the declared convexity window.
    pub a: Option<f64>,
    #[serde(rename = "A")]
    pub a_upper: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Constant { value: f64 },
    /// Alternating `+-value` by boundary-site parity.
    Checkerboard { value: f64 },
    /// `+lambda` on the clockwise arc from `x` to `y`, `-lambda` opposite.
    TwoSided { lambda: f64, x: (i32, i32), y: (i32, i32) },
    /// Explicit per-site values in domain boundary order.
    Values { values: Vec<f64> },
    /// Per-site values read from a file (whitespace/newline separated, in
    /// domain boundary order).
    File { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandsSpec {
    None,
    Positive,
    Box { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub potential: PotentialSpec,
    #[serde(default = "default_boundary")]
    pub boundary: BoundarySpec,
    #[serde(default = "default_bands")]
    pub bands: BandsSpec,
    pub dt: Option<f64>,
    pub burnin: Option<usize>,
    pub samples: usize,
    pub thin: Option<usize>,
    pub seed: u64,
}

fn default_boundary() -> BoundarySpec {
    BoundarySpec::Constant { value: 0.0 }
}

fn default_bands() -> BandsSpec {
    BandsSpec::None
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("domain: {0}")]
    Domain(#[from] crate::lattice::LatticeError),
    #[error("potential: {0}")]
    Potential(#[from] crate::potential::PotentialError),
    #[error("interface setup: {0}")]
    Interface(#[from] crate::interface::InterfaceError),
    #[error("boundary values: expected {expected}, got {got}")]
    BoundaryLength { expected: usize, got: usize },
    #[error("boundary file {path}: {what}")]
    BoundaryFile { path: String, what: String },
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn build_domain(&self) -> Result<Arc<LatticeDomain>, ConfigError> {
        Ok(match self.domain {
            DomainSpec::Rectangle { width, height } => LatticeDomain::rectangle(width, height)?,
            DomainSpec::Disk { radius, scale } => LatticeDomain::disk(radius, scale)?,
            DomainSpec::Path { n } => LatticeDomain::path(n)?,
        })
    }

    pub fn build_potential(&self) -> Result<Potential, ConfigError> {
        let mut p = Potential::builtin(&self.potential.name)?;
        if let Some(a) = self.potential.a {
            p.a_lower = a;
        }
        if let Some(a_upper) = self.potential.a_upper {
            p.a_upper = a_upper;
        }
        Ok(p)
    }

    /// Boundary values, plus the two-sided marking when configured.
    pub fn boundary_values(
        &self,
        domain: &Arc<LatticeDomain>,
    ) -> Result<(Vec<f64>, Option<TwoSidedBoundary>), ConfigError> {
        match &self.boundary {
            BoundarySpec::Constant { value } => Ok((vec![*value; domain.n_boundary()], None)),
            BoundarySpec::Checkerboard { value } => Ok((
                domain
                    .boundary_sites()
                    .iter()
                    .map(|s| if (s.x + s.y).rem_euclid(2) == 0 { *value } else { -*value })
                    .collect(),
                None,
            )),
            BoundarySpec::TwoSided { lambda, x, y } => {
                let ts = make_two_sided(
                    domain,
                    &SiteIndex::new(x.0, x.1),
                    &SiteIndex::new(y.0, y.1),
                    *lambda,
                )?;
                Ok((ts.psi.clone(), Some(ts)))
            }
            BoundarySpec::Values { values } => {
                if values.len() != domain.n_boundary() {
                    return Err(ConfigError::BoundaryLength {
                        expected: domain.n_boundary(),
                        got: values.len(),
                    });
                }
                Ok((values.clone(), None))
            }
            BoundarySpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    ConfigError::BoundaryFile { path: path.clone(), what: e.to_string() }
                })?;
                let values: Vec<f64> = text
                    .split_whitespace()
                    .map(|w| {
                        w.parse::<f64>().map_err(|e| ConfigError::BoundaryFile {
                            path: path.clone(),
                            what: format!("bad value `{w}`: {e}"),
                        })
                    })
                    .collect::<Result<_, _>>()?;
                if values.len() != domain.n_boundary() {
                    return Err(ConfigError::BoundaryLength {
                        expected: domain.n_boundary(),
                        got: values.len(),
                    });
                }
                Ok((values, None))
            }
        }
    }

    pub fn build_bands(&self, domain: &LatticeDomain) -> BandSpec {
        let n = domain.n_interior();
        match self.bands {
            BandsSpec::None => BandSpec::unconstrained(n),
            BandsSpec::Positive => BandSpec::positive(n),
            BandsSpec::Box { lower, upper } => BandSpec {
                lower: vec![lower; n],
                upper: vec![upper; n],
            },
        }
    }

    pub fn run_config(
        &self,
        domain: &LatticeDomain,
        potential: &Potential,
    ) -> RunConfig {
        let dt = self.dt.unwrap_or_else(|| dynamics::default_dt(potential));
        RunConfig {
            dt,
            burnin: self
                .burnin
                .unwrap_or_else(|| dynamics::default_burnin(domain, potential, dt)),
            samples: self.samples,
            thin: self
                .thin
                .unwrap_or_else(|| dynamics::estimated_iat_steps(domain, potential, dt)),
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig {
            domain: DomainSpec::Rectangle { width: 8, height: 8 },
            potential: PotentialSpec { name: "anharmonic".into(), a: None, a_upper: None },
            boundary: BoundarySpec::TwoSided { lambda: 1.0, x: (4, -1), y: (4, 8) },
            bands: BandsSpec::None,
            dt: Some(0.01),
            burnin: Some(100),
            samples: 50,
            thin: Some(5),
            seed: 7,
        };
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let text = r#"
            samples = 100
            seed = 1

            [domain]
            kind = "path"
            n = 3

            [potential]
            name = "quadratic"
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.boundary, BoundarySpec::Constant { value: 0.0 });
        let d = cfg.build_domain().unwrap();
        assert_eq!(d.n_interior(), 3);
        let p = cfg.build_potential().unwrap();
        let rc = cfg.run_config(&d, &p);
        assert!(rc.dt > 0.0 && rc.burnin >= 1000 && rc.thin >= 1);
    }

    #[test]
    fn boundary_values_checked_for_length() {
        let cfg = ExperimentConfig {
            domain: DomainSpec::Path { n: 3 },
            potential: PotentialSpec { name: "quadratic".into(), a: None, a_upper: None },
            boundary: BoundarySpec::Values { values: vec![1.0] },
            bands: BandsSpec::None,
            dt: None,
            burnin: None,
            samples: 1,
            thin: None,
            seed: 1,
        };
        let d = cfg.build_domain().unwrap();
        assert!(matches!(
            cfg.boundary_values(&d),
            Err(ConfigError::BoundaryLength { expected: 2, got: 1 })
        ));
    }
}

//! Lattice simulation library and verification harness for the
//! Ginzburg-Landau gradient interface model on subgraphs of `Z^2`.
//!
//! The crate is organized around the objects of the model:
//!
//! * [`lattice`] — finite lattice domains, boundaries, bonds, erosions;
//! * [`potential`] — the bond interaction and its convexity bounds;
//! * [`harmonic`] — discrete Laplacian, Dirichlet solver, Green's function,
//!   harmonic measure (the linear-algebra backbone);
//! * [`gff`] — exact sampling of the discrete Gaussian free field;
//! * [`dynamics`] — Euler–Maruyama integration of the Langevin dynamics,
//!   with optional reflecting bands and local-time accumulators;
//! * [`coupling`] — shared-noise coupling of two dynamics, energy ledger,
//!   stochastic-domination and contraction monitors;
//! * [`hswalk`] — the random walk in the recorded dynamic conductance
//!   environment, with occupation-time / exit-law estimators;
//! * [`clt`] — the macroscopic gradient functional and its Gaussian limit
//!   diagnostics;
//! * [`interface`] — two-sided boundary setup, zero-height contour tracing,
//!   and the harmonic observable;
//! * [`harness`] — statistics, configuration, reports, and the `verify`
//!   acceptance-suite runner.

pub mod clt;
pub mod coupling;
pub mod dynamics;
pub mod gff;
pub mod harmonic;
pub mod harness;
pub mod hswalk;
pub mod interface;
pub mod lattice;
pub mod potential;
pub mod rng;

pub use lattice::{Bond, LatticeDomain, SiteIndex};
pub use potential::Potential;

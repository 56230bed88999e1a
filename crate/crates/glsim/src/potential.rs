//! The bond interaction `V` with its convexity window `a <= V'' <= A` and
//! the Lipschitz constant of `V''`.
//!
//! The declared bounds are load-bearing: they set the stable step size of
//! the dynamics, the thinning majorant of the environment walk, and the
//! conductance-window assertions of the coupling monitors. `validate`
//! probes them numerically but never mutates them; user potentials are
//! accepted with whatever bounds they declare.

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Dispatch tag letting hot loops inline the built-in derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Quadratic,
    Anharmonic,
    Custom,
}

#[inline(always)]
pub fn anharmonic_v1(x: f64) -> f64 {
    8.0 * x - x.sin() - 2.0 * x * (-x * x).exp()
}

#[inline(always)]
pub fn anharmonic_v2(x: f64) -> f64 {
    8.0 - x.cos() + (4.0 * x * x - 2.0) * (-x * x).exp()
}

/// A symmetric uniformly convex interaction and its first two derivatives.
#[derive(Clone)]
pub struct Potential {
    v: RealFn,
    v1: RealFn,
    v2: RealFn,
    /// Lower convexity bound `a`.
    pub a_lower: f64,
    /// Upper convexity bound `A`.
    pub a_upper: f64,
    /// Lipschitz constant of `V''`.
    pub lipschitz: f64,
    pub name: String,
    kind: PotentialKind,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .field("a_lower", &self.a_lower)
            .field("a_upper", &self.a_upper)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("unknown potential name `{0}`")]
    UnknownName(String),
    #[error("validation needs at least 3 samples, got {0}")]
    TooFewSamples(usize),
}

/// Numerically exact bounds for the anharmonic example
/// `V(x) = 4x^2 + cos x + exp(-x^2)`: the second derivative attains its
/// global minimum 5 at x = 0; the max and the Lipschitz constant below are
/// dense-grid values rounded outward.
pub const ANHARMONIC_A_LOWER: f64 = 5.0;
pub const ANHARMONIC_A_UPPER: f64 = 9.0021;
pub const ANHARMONIC_LIPSCHITZ: f64 = 4.5;

impl Potential {
    pub fn quadratic() -> Self {
        Potential {
            v: Arc::new(|x| 0.5 * x * x),
            v1: Arc::new(|x| x),
            v2: Arc::new(|_| 1.0),
            a_lower: 1.0,
            a_upper: 1.0,
            lipschitz: 0.0,
            name: "quadratic".into(),
            kind: PotentialKind::Quadratic,
        }
    }

    pub fn anharmonic() -> Self {
        Potential {
            v: Arc::new(|x| 4.0 * x * x + x.cos() + (-x * x).exp()),
            v1: Arc::new(anharmonic_v1),
            v2: Arc::new(anharmonic_v2),
            a_lower: ANHARMONIC_A_LOWER,
            a_upper: ANHARMONIC_A_UPPER,
            lipschitz: ANHARMONIC_LIPSCHITZ,
            name: "anharmonic".into(),
            kind: PotentialKind::Anharmonic,
        }
    }

    pub fn builtin(name: &str) -> Result<Self, PotentialError> {
        match name {
            "quadratic" => Ok(Self::quadratic()),
            "anharmonic" => Ok(Self::anharmonic()),
            other => Err(PotentialError::UnknownName(other.into())),
        }
    }

    /// A user-supplied interaction with declared bounds.
    pub fn custom(
        name: &str,
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        v1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        v2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        a_lower: f64,
        a_upper: f64,
        lipschitz: f64,
    ) -> Self {
        Potential {
            v: Arc::new(v),
            v1: Arc::new(v1),
            v2: Arc::new(v2),
            a_lower,
            a_upper,
            lipschitz,
            name: name.into(),
            kind: PotentialKind::Custom,
        }
    }

    #[inline]
    pub fn v(&self, x: f64) -> f64 {
        (self.v)(x)
    }

    #[inline]
    pub fn v1(&self, x: f64) -> f64 {
        (self.v1)(x)
    }

    #[inline]
    pub fn v2(&self, x: f64) -> f64 {
        (self.v2)(x)
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn is_quadratic(&self) -> bool {
        self.a_lower == self.a_upper && self.lipschitz == 0.0
    }
}

/// Grid probe of the declared hypotheses.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Minimum sampled `V''`.
    pub a_hat: f64,
    /// Maximum sampled `V''`.
    pub a_upper_hat: f64,
    /// Maximum finite-difference slope of `V''`.
    pub lipschitz_hat: f64,
    pub symmetric: bool,
    /// True when the probe stayed inside the declared window and `a_hat > 0`.
    pub within_declared: bool,
}

/// Probe `V` on a uniform grid over `[-xmax, xmax]`. Advisory: violations
/// are reported, not fatal.
pub fn validate(
    p: &Potential,
    xmax: f64,
    samples: usize,
) -> Result<ValidationReport, PotentialError> {
    if samples < 3 {
        return Err(PotentialError::TooFewSamples(samples));
    }
    let step = 2.0 * xmax / (samples - 1) as f64;
    let xs: Vec<f64> = (0..samples).map(|i| -xmax + step * i as f64).collect();
    let mut a_hat = f64::INFINITY;
    let mut a_upper_hat = f64::NEG_INFINITY;
    let mut symmetric = true;
    for &x in &xs {
        let v2 = p.v2(x);
        a_hat = a_hat.min(v2);
        a_upper_hat = a_upper_hat.max(v2);
        if (p.v(x) - p.v(-x)).abs() > 1e-12 {
            symmetric = false;
        }
    }
    let mut lipschitz_hat = 0.0f64;
    for w in xs.windows(2) {
        let slope = (p.v2(w[1]) - p.v2(w[0])).abs() / step;
        lipschitz_hat = lipschitz_hat.max(slope);
    }
    let within_declared = a_hat > 0.0
        && a_hat >= p.a_lower - 1e-9
        && a_upper_hat <= p.a_upper + 1e-9
        && symmetric;
    Ok(ValidationReport { a_hat, a_upper_hat, lipschitz_hat, symmetric, within_declared })
}

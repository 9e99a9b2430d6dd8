//! Single-step maps and the fixed-step time loop.
//!
//! | id               | scheme                                   | stages |
//! |------------------|------------------------------------------|--------|
//! | `mverk41`        | MVERK, classical RK4 coefficients        | 4      |
//! | `mverk42`        | MVERK, 3/8-rule coefficients             | 4      |
//! | `sverk41`        | SVERK, classical RK4 coefficients        | 4      |
//! | `sverk42`        | SVERK, 3/8-rule coefficients             | 4      |
//! | `rk4`            | classical RK4 on g(y) = −My + f(y)       | 4      |
//! | `rk4-38`         | 3/8 rule on g(y)                         | 4      |
//! | `erk-hochbruck5` | Hochbruck–Ostermann φ-function scheme    | 5      |
//! | `erk-krogstad4`  | Krogstad φ-function scheme               | 4      |
//!
//! Matrix functions of hM are computed once per stepsize into a
//! [`CoefficientCache`]; steppers never compute them on the fly.

mod cache;
mod driver;
mod erk;
mod rk;
mod verk;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::matfun::{MatFunError, Vector};
use crate::problems::ProblemError;
use crate::tableau::{check_order4, BuiltinTableau, Tableau, TableauError};

pub use cache::{CoefficientCache, ErkCoefficients};
pub use driver::{integrate, integrate_with, step_count, IntegrateOptions, Trajectory};
pub use erk::{erk_hochbruck5_step, erk_krogstad4_step};
pub use rk::rk4_step;
pub use verk::{mverk4_step, sverk4_step, w4_mverk, w4_sverk};

/// Where a non-finite value first appeared within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergencePoint {
    /// 1-based stage index.
    Stage(usize),
    Update,
}

impl fmt::Display for DivergencePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Stage(i) => write!(f, "stage {i}"),
            Self::Update => f.write_str("update"),
        }
    }
}

#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("non-finite value at {at}{}", step.map(|s| format!(" of step {s}")).unwrap_or_default())]
    Divergence {
        at: DivergencePoint,
        step: Option<usize>,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("no cached exponential for stage fraction {0}")]
    CacheMiss(f64),
    #[error("coefficient cache does not match: {0}")]
    CacheMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    MatFun(#[from] MatFunError),
    #[error(transparent)]
    Tableau(#[from] TableauError),
}

impl IntegrationError {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Self::Divergence { at, .. } => Self::Divergence { at, step: Some(step) },
            other => other,
        }
    }
}

/// Output of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub y_next: Vector,
    /// Internal stage values Y₁..Y_s, when requested.
    pub stage_values: Option<Vec<Vector>>,
}

pub(crate) fn ensure_finite(v: &Vector, at: DivergencePoint) -> Result<(), IntegrationError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(IntegrationError::Divergence { at, step: None })
    }
}

/// Which φ-function baseline a scheme uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErkKind {
    Hochbruck5,
    Krogstad4,
}

/// A concrete one-step scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Mverk(Tableau),
    Sverk(Tableau),
    Rk(Tableau),
    Erk(ErkKind),
}

impl Scheme {
    /// MVERK scheme; the tableau must be a four-stage fourth-order one.
    pub fn mverk(t: Tableau) -> Result<Self, IntegrationError> {
        Self::require_order4(&t)?;
        Ok(Self::Mverk(t))
    }

    /// SVERK scheme; the tableau must be a four-stage fourth-order one.
    pub fn sverk(t: Tableau) -> Result<Self, IntegrationError> {
        Self::require_order4(&t)?;
        Ok(Self::Sverk(t))
    }

    fn require_order4(t: &Tableau) -> Result<(), IntegrationError> {
        let report = check_order4(t)?;
        if !report.satisfied {
            return Err(IntegrationError::Config(format!(
                "tableau violates the fourth-order conditions (max residual {:.3e})",
                report.max_residual()
            )));
        }
        Ok(())
    }

    pub fn is_exponential(&self) -> bool {
        !matches!(self, Self::Rk(_))
    }

    /// Whether the scheme evaluates f' and f''.
    pub fn needs_derivatives(&self) -> bool {
        matches!(self, Self::Mverk(_) | Self::Sverk(_))
    }

    pub fn stages(&self) -> usize {
        match self {
            Self::Mverk(t) | Self::Sverk(t) | Self::Rk(t) => t.stages(),
            Self::Erk(ErkKind::Hochbruck5) => 5,
            Self::Erk(ErkKind::Krogstad4) => 4,
        }
    }

    /// Advances one step of size `cache.h()`.
    pub fn step(
        &self,
        cache: &CoefficientCache,
        p: &crate::problems::Problem,
        y0: &Vector,
    ) -> Result<StepResult, IntegrationError> {
        self.step_impl(cache, p, y0, false)
    }

    /// Like [`step`](Self::step) but also returns the stage values.
    pub fn step_with_stages(
        &self,
        cache: &CoefficientCache,
        p: &crate::problems::Problem,
        y0: &Vector,
    ) -> Result<StepResult, IntegrationError> {
        self.step_impl(cache, p, y0, true)
    }

    fn step_impl(
        &self,
        cache: &CoefficientCache,
        p: &crate::problems::Problem,
        y0: &Vector,
        record: bool,
    ) -> Result<StepResult, IntegrationError> {
        if y0.len() != cache.dim() || p.dim() != cache.dim() {
            return Err(IntegrationError::CacheMismatch(format!(
                "cache built for dimension {}, state has {}",
                cache.dim(),
                y0.len()
            )));
        }
        match self {
            Self::Mverk(t) => verk::mverk_step(t, cache, p, y0, record),
            Self::Sverk(t) => verk::sverk_step(t, cache, p, y0, record),
            Self::Rk(t) => rk::rk_step(t, p, y0, cache.h(), record),
            Self::Erk(kind) => erk::erk_step(*kind, cache, p, y0, record),
        }
    }
}

/// Stable method identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mverk41,
    Mverk42,
    Sverk41,
    Sverk42,
    Rk4,
    Rk438,
    ErkHochbruck5,
    ErkKrogstad4,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Mverk41,
        Method::Mverk42,
        Method::Sverk41,
        Method::Sverk42,
        Method::Rk4,
        Method::Rk438,
        Method::ErkHochbruck5,
        Method::ErkKrogstad4,
    ];

    /// The four MVERK/SVERK methods.
    pub const NEW: [Method; 4] = [Method::Mverk41, Method::Mverk42, Method::Sverk41, Method::Sverk42];

    pub fn id(self) -> &'static str {
        match self {
            Self::Mverk41 => "mverk41",
            Self::Mverk42 => "mverk42",
            Self::Sverk41 => "sverk41",
            Self::Sverk42 => "sverk42",
            Self::Rk4 => "rk4",
            Self::Rk438 => "rk4-38",
            Self::ErkHochbruck5 => "erk-hochbruck5",
            Self::ErkKrogstad4 => "erk-krogstad4",
        }
    }

    pub fn scheme(self) -> Scheme {
        use BuiltinTableau::*;
        match self {
            Self::Mverk41 => Scheme::Mverk(ClassicalRk4.tableau()),
            Self::Mverk42 => Scheme::Mverk(ThreeEighths.tableau()),
            Self::Sverk41 => Scheme::Sverk(ClassicalRk4.tableau()),
            Self::Sverk42 => Scheme::Sverk(ThreeEighths.tableau()),
            Self::Rk4 => Scheme::Rk(ClassicalRk4.tableau()),
            Self::Rk438 => Scheme::Rk(ThreeEighths.tableau()),
            Self::ErkHochbruck5 => Scheme::Erk(ErkKind::Hochbruck5),
            Self::ErkKrogstad4 => Scheme::Erk(ErkKind::Krogstad4),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = IntegrationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| IntegrationError::Config(format!("unknown method `{s}`")))
    }
}

/// Resolves a method identifier. `mverk4`, `sverk4` and `rk` take their
/// coefficients from `custom`.
pub fn resolve_scheme(id: &str, custom: Option<&Tableau>) -> Result<Scheme, IntegrationError> {
    let need = |id: &str| {
        custom
            .cloned()
            .ok_or_else(|| IntegrationError::Config(format!("method `{id}` requires a custom tableau")))
    };
    match id {
        "mverk4" => Scheme::mverk(need(id)?),
        "sverk4" => Scheme::sverk(need(id)?),
        "rk" => Ok(Scheme::Rk(need(id)?)),
        other => Ok(other.parse::<Method>()?.scheme()),
    }
}

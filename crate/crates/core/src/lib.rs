//! Fourth-order explicit exponential Runge–Kutta integrators for stiff and
//! highly oscillatory systems y' + My = f(y).
//!
//! Two families with real, matrix-free coefficients are provided:
//!
//! * **MVERK**: classical explicit RK stages on g(y) = −My + f(y) and an
//!   exponential update e^{−hM}y₀ + hΣbᵢf(Yᵢ) + w₄.
//! * **SVERK**: stages e^{−cᵢhM}y₀ + hΣaᵢⱼf(Yⱼ) and the same style of update
//!   with its own correction w̄₄.
//!
//! Both reduce to the underlying classical RK method when M = 0 and integrate
//! y' = −My exactly. Classical RK4 and two φ-function exponential integrators
//! (Hochbruck–Ostermann five-stage, Krogstad four-stage) are included as
//! baselines, together with the benchmark problems and a convergence harness.

pub mod cli;
pub mod harness;
pub mod integrators;
pub mod matfun;
pub mod problems;
pub mod tableau;

pub use integrators::{integrate, CoefficientCache, IntegrationError, Method, Scheme, StepResult, Trajectory};
pub use matfun::{matexp, matvec, phi_set, DenseMatrix, MatFunError, PhiSet, Vector};
pub use problems::Problem;
pub use tableau::{builtin, check_order4, OrderConditionReport, Tableau};

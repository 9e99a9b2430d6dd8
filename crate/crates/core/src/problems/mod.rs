//! Test problems of the form y' + My = f(y).
//!
//! A [`Problem`] bundles the constant matrix M, the nonlinearity f and its
//! first and second directional derivatives (`jvp`, `hvp`), which the
//! exponential schemes need for their correction terms.

pub mod spectral;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;

use crate::matfun::{DenseMatrix, Vector};

pub type RhsFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type JvpFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
pub type HvpFn = Arc<dyn Fn(&Vector, &Vector, &Vector) -> Vector + Send + Sync>;
pub type ExactFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("problem `{problem}` provides no {derivative}")]
    MissingDerivative {
        problem: String,
        derivative: &'static str,
    },
}

/// Where `jvp`/`hvp` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    Analytic,
    /// Central differences; loses accuracy in the h⁴ correction terms.
    FiniteDifference,
}

/// Initial value problem y' + My = f(y), y(t₀) = y₀.
#[derive(Clone)]
pub struct Problem {
    label: String,
    m: DenseMatrix,
    f: RhsFn,
    jvp: Option<JvpFn>,
    hvp: Option<HvpFn>,
    derivatives: DerivativeSource,
    y0: Vector,
    t_span: (f64, f64),
    params: BTreeMap<String, Value>,
    exact: Option<ExactFn>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("t_span", &self.t_span)
            .field("derivatives", &self.derivatives)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl Problem {
    /// A problem with no derivative information; attach it with
    /// [`with_jvp`](Self::with_jvp)/[`with_hvp`](Self::with_hvp) or
    /// [`with_fd_derivatives`](Self::with_fd_derivatives).
    pub fn new(
        label: impl Into<String>,
        m: DenseMatrix,
        y0: Vector,
        t_span: (f64, f64),
        f: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        assert!(m.is_square() && m.rows() == y0.len(), "M must be dim x dim");
        Self {
            label: label.into(),
            m,
            f: Arc::new(f),
            jvp: None,
            hvp: None,
            derivatives: DerivativeSource::Analytic,
            y0,
            t_span,
            params: BTreeMap::new(),
            exact: None,
        }
    }

    pub fn with_jvp(mut self, jvp: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.jvp = Some(Arc::new(jvp));
        self
    }

    pub fn with_hvp(
        mut self,
        hvp: impl Fn(&Vector, &Vector, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.hvp = Some(Arc::new(hvp));
        self
    }

    /// Fills missing derivative products with central differences, step
    /// ∛ε·max(1, ‖y‖∞) along the unit direction.
    pub fn with_fd_derivatives(mut self) -> Self {
        if self.jvp.is_some() && self.hvp.is_some() {
            return self;
        }
        self.derivatives = DerivativeSource::FiniteDifference;
        let f = self.f.clone();
        let jvp: JvpFn = match self.jvp.clone() {
            Some(j) => j,
            None => Arc::new(move |y: &Vector, v: &Vector| {
                central_difference(y, v, |p| f(p))
            }),
        };
        if self.hvp.is_none() {
            let inner = jvp.clone();
            self.hvp = Some(Arc::new(move |y: &Vector, u: &Vector, v: &Vector| {
                central_difference(y, u, |p| inner(p, v))
            }));
        }
        self.jvp = Some(jvp);
        self
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_owned(), value.into());
        self
    }

    pub fn with_exact(mut self, exact: impl Fn(f64) -> Vector + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(exact));
        self
    }

    pub fn with_y0(mut self, y0: Vector) -> Self {
        assert_eq!(y0.len(), self.dim());
        self.y0 = y0;
        // A closed form is tied to the initial value it was derived for.
        self.exact = None;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_span.1 = t_end;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Same problem with M replaced by the zero matrix.
    pub fn with_zero_m(mut self) -> Self {
        self.m = DenseMatrix::zeros(self.dim(), self.dim());
        self.exact = None;
        self
    }

    /// Same linear part with f, jvp and hvp identically zero.
    pub fn homogeneous(mut self) -> Self {
        let n = self.dim();
        self.f = Arc::new(move |_| Vector::zeros(n));
        self.jvp = Some(Arc::new(move |_, _| Vector::zeros(n)));
        self.hvp = Some(Arc::new(move |_, _, _| Vector::zeros(n)));
        self.derivatives = DerivativeSource::Analytic;
        self.exact = None;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn m(&self) -> &DenseMatrix {
        &self.m
    }

    pub fn y0(&self) -> &Vector {
        &self.y0
    }

    pub fn t_span(&self) -> (f64, f64) {
        self.t_span
    }

    pub fn params(&self) -> &BTreeMap<String, Value> {
        &self.params
    }

    pub fn derivative_source(&self) -> DerivativeSource {
        self.derivatives
    }

    pub fn has_derivatives(&self) -> bool {
        self.jvp.is_some() && self.hvp.is_some()
    }

    #[inline]
    pub fn f(&self, y: &Vector) -> Vector {
        (self.f)(y)
    }

    /// g(y) = −My + f(y).
    pub fn g(&self, y: &Vector) -> Vector {
        self.f(y) - self.m.apply(y)
    }

    /// f'(y)·v.
    pub fn jvp(&self, y: &Vector, v: &Vector) -> Result<Vector, ProblemError> {
        match &self.jvp {
            Some(j) => Ok(j(y, v)),
            None => Err(self.missing("Jacobian-vector product")),
        }
    }

    /// f''(y)(u, v).
    pub fn hvp(&self, y: &Vector, u: &Vector, v: &Vector) -> Result<Vector, ProblemError> {
        match &self.hvp {
            Some(h) => Ok(h(y, u, v)),
            None => Err(self.missing("Hessian bilinear product")),
        }
    }

    /// Checks that both derivative products are available.
    pub fn require_derivatives(&self) -> Result<(), ProblemError> {
        if self.jvp.is_none() {
            return Err(self.missing("Jacobian-vector product"));
        }
        if self.hvp.is_none() {
            return Err(self.missing("Hessian bilinear product"));
        }
        Ok(())
    }

    fn missing(&self, derivative: &'static str) -> ProblemError {
        ProblemError::MissingDerivative {
            problem: self.label.clone(),
            derivative,
        }
    }

    /// Closed-form solution at time t, when one is known.
    pub fn exact_solution(&self, t: f64) -> Option<Vector> {
        self.exact.as_ref().map(|e| e(t))
    }
}

fn central_difference(y: &Vector, dir: &Vector, eval: impl Fn(&Vector) -> Vector) -> Vector {
    let norm = dir.amax();
    if norm == 0.0 {
        return Vector::zeros(eval(y).len());
    }
    let step = f64::EPSILON.cbrt() * y.amax().max(1.0);
    let unit = dir / norm;
    let plus = eval(&(y + &unit * step));
    let minus = eval(&(y - &unit * step));
    (plus - minus) * (norm / (2.0 * step))
}

fn bad(name: &'static str, reason: impl Into<String>) -> ProblemError {
    ProblemError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Averaged wind-induced oscillation system with ζ = r cos θ, λ = r sin θ:
/// x' = [[−ζ, −λ], [λ, −ζ]] x + (x₁x₂, (x₁² − x₂²)/2).
///
/// Initial value (1, 0) and span [0, 100].
pub fn wind_oscillation(theta: f64, r: f64) -> Result<Problem, ProblemError> {
    if !(0.0..=PI / 2.0 + 1e-15).contains(&theta) {
        return Err(bad("theta", format!("{theta} is outside [0, pi/2]")));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(bad("r", format!("{r} must be finite and non-negative")));
    }
    let zeta = r * theta.cos();
    let lambda = r * theta.sin();
    let m = DenseMatrix::from_rows(&[vec![zeta, lambda], vec![-lambda, zeta]]).expect("2x2");
    let p = Problem::new("wind", m, Vector::from_vec(vec![1.0, 0.0]), (0.0, 100.0), |x| {
        Vector::from_vec(vec![x[0] * x[1], 0.5 * (x[0] * x[0] - x[1] * x[1])])
    })
    .with_jvp(|x, v| Vector::from_vec(vec![v[0] * x[1] + x[0] * v[1], x[0] * v[0] - x[1] * v[1]]))
    .with_hvp(|_, u, v| Vector::from_vec(vec![u[0] * v[1] + u[1] * v[0], u[0] * v[0] - u[1] * v[1]]))
    .with_param("theta", theta)
    .with_param("r", r);
    Ok(p)
}

/// Spatial discretization used for the Allen–Cahn problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllenCahnGrid {
    /// Chebyshev collocation on x_i = cos(iπ/n).
    Chebyshev,
    /// Second-order central differences on x_i = −1 + 2i/n.
    UniformFd,
}

impl AllenCahnGrid {
    pub fn name(self) -> &'static str {
        match self {
            Self::Chebyshev => "chebyshev",
            Self::UniformFd => "uniform-fd",
        }
    }
}

/// Initial Allen–Cahn profile u(x, 0) = 0.53x + 0.47 sin(−1.5πx).
pub fn allen_cahn_profile(x: f64) -> f64 {
    0.53 * x + 0.47 * (-1.5 * PI * x).sin()
}

/// Allen–Cahn u_t = εu_xx + u − u³ on (−1, 1) with Chebyshev collocation.
pub fn allen_cahn(epsilon: f64, n: usize) -> Result<Problem, ProblemError> {
    allen_cahn_with_grid(epsilon, n, AllenCahnGrid::Chebyshev)
}

/// Allen–Cahn on the n−1 interior nodes of the chosen grid. The Dirichlet
/// values at x = ±1 are those of the initial profile (±1); their coupling
/// through the differentiation matrix is a constant vector added to f, so M
/// stays time-invariant.
pub fn allen_cahn_with_grid(epsilon: f64, n: usize, grid: AllenCahnGrid) -> Result<Problem, ProblemError> {
    if n < 4 {
        return Err(bad("n", format!("need at least 4 grid intervals, got {n}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(bad("epsilon", format!("{epsilon} must be positive")));
    }
    let (d2, x) = match grid {
        AllenCahnGrid::Chebyshev => (spectral::chebyshev_d2(n), spectral::chebyshev_points(n)),
        AllenCahnGrid::UniformFd => (spectral::uniform_fd_d2(n), spectral::uniform_points(n)),
    };
    let left = allen_cahn_profile(x[0]);
    let right = allen_cahn_profile(x[n]);
    let dim = n - 1;
    let m = DenseMatrix::from_fn(dim, dim, |i, j| -epsilon * d2.get(i + 1, j + 1));
    let lift = Vector::from_fn(dim, |i, _| {
        epsilon * (d2.get(i + 1, 0) * left + d2.get(i + 1, n) * right)
    });
    let y0 = Vector::from_fn(dim, |i, _| allen_cahn_profile(x[i + 1]));
    let p = Problem::new("allen-cahn", m, y0, (0.0, 10.0), move |u| {
        u.map(|v| v - v * v * v) + &lift
    })
    .with_jvp(|u, v| u.zip_map(v, |a, b| (1.0 - 3.0 * a * a) * b))
    .with_hvp(|u, a, b| Vector::from_fn(u.len(), |i, _| -6.0 * u[i] * a[i] * b[i]))
    .with_param("epsilon", epsilon)
    .with_param("n", n)
    .with_param("grid", grid.name());
    Ok(p)
}

/// Length of the periodic domain for the Schrödinger problem.
pub fn nls_length() -> f64 {
    4.0 * 2f64.sqrt() * PI
}

/// Cubic Schrödinger iψ_t + ψ_xx + 2|ψ|²ψ = 0, periodic on [0, 4√2π], split
/// into ψ = p + iq and discretized with the Fourier pseudospectral D₂ on
/// x_j = jL/n. State (p, q) of dimension 2n; ψ(x, 0) = 0.5 + 0.025 cos(μx).
pub fn nls_pseudospectral(n: usize) -> Result<Problem, ProblemError> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(bad("n", format!("need an even grid count >= 4, got {n}")));
    }
    let length = nls_length();
    let mu = 2.0 * PI / length;
    let d2 = spectral::periodic_d2(n, length);
    let m = DenseMatrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, false) => d2.get(i, j - n),
        (false, true) => -d2.get(i - n, j),
        _ => 0.0,
    });
    let y0 = Vector::from_fn(2 * n, |i, _| {
        if i < n {
            0.5 + 0.025 * (mu * i as f64 * length / n as f64).cos()
        } else {
            0.0
        }
    });
    let p = Problem::new("nls", m, y0, (0.0, 10.0), move |y| {
        let mut out = Vector::zeros(2 * n);
        for j in 0..n {
            let (p, q) = (y[j], y[j + n]);
            let r = p * p + q * q;
            out[j] = -2.0 * r * q;
            out[j + n] = 2.0 * r * p;
        }
        out
    })
    .with_jvp(move |y, v| {
        let mut out = Vector::zeros(2 * n);
        for j in 0..n {
            let (p, q) = (y[j], y[j + n]);
            let (a, b) = (v[j], v[j + n]);
            let r = p * p + q * q;
            let dr = 2.0 * (p * a + q * b);
            out[j] = -2.0 * (dr * q + r * b);
            out[j + n] = 2.0 * (dr * p + r * a);
        }
        out
    })
    .with_hvp(move |y, u, v| {
        let mut out = Vector::zeros(2 * n);
        for j in 0..n {
            let (p, q) = (y[j], y[j + n]);
            let (a, b) = (u[j], u[j + n]);
            let (c, d) = (v[j], v[j + n]);
            let dr_u = 2.0 * (p * a + q * b);
            let dr_v = 2.0 * (p * c + q * d);
            let d2r = 2.0 * (a * c + b * d);
            out[j] = -2.0 * (d2r * q + dr_u * d + dr_v * b);
            out[j + n] = 2.0 * (d2r * p + dr_u * c + dr_v * a);
        }
        out
    })
    .with_param("n", n)
    .with_param("L", length);
    Ok(p)
}

/// Scalar toy problems y' = −λy (linear) and y' = −λy + y² (quadratic).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    Linear,
    Quadratic,
}

/// Scalar toy problem on [0, 1]; y₀ = 1 for the linear kind and 1/2 for the
/// quadratic kind. Both carry their closed-form solution (Bernoulli
/// substitution u = 1/y for the quadratic one).
pub fn scalar_toy(lambda: f64, kind: ToyKind) -> Problem {
    let m = DenseMatrix::from_diagonal(&[lambda]);
    match kind {
        ToyKind::Linear => Problem::new("scalar-linear", m, Vector::from_vec(vec![1.0]), (0.0, 1.0), |_| {
            Vector::zeros(1)
        })
        .with_jvp(|_, _| Vector::zeros(1))
        .with_hvp(|_, _, _| Vector::zeros(1))
        .with_param("lambda", lambda)
        .with_exact(move |t| Vector::from_vec(vec![(-lambda * t).exp()])),
        ToyKind::Quadratic => {
            let y0 = 0.5;
            Problem::new("scalar-quadratic", m, Vector::from_vec(vec![y0]), (0.0, 1.0), |y| {
                Vector::from_vec(vec![y[0] * y[0]])
            })
            .with_jvp(|y, v| Vector::from_vec(vec![2.0 * y[0] * v[0]]))
            .with_hvp(|_, u, v| Vector::from_vec(vec![2.0 * u[0] * v[0]]))
            .with_param("lambda", lambda)
            .with_exact(move |t| Vector::from_vec(vec![bernoulli_solution(lambda, y0, t)]))
        }
    }
}

/// Solution of y' = −λy + y², y(0) = y₀.
pub fn bernoulli_solution(lambda: f64, y0: f64, t: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0 / (1.0 / y0 - t);
    }
    // u = 1/y solves u' = λu − 1.
    let u = 1.0 / lambda + (1.0 / y0 - 1.0 / lambda) * (lambda * t).exp();
    1.0 / u
}

/// y' = λy for complex λ = re + i·im written as a real 2×2 system.
pub fn complex_linear(re: f64, im: f64) -> Problem {
    let m = DenseMatrix::from_rows(&[vec![-re, im], vec![-im, -re]]).expect("2x2");
    Problem::new("complex-linear", m, Vector::from_vec(vec![1.0, 0.0]), (0.0, 1.0), |_| {
        Vector::zeros(2)
    })
    .with_jvp(|_, _| Vector::zeros(2))
    .with_hvp(|_, _, _| Vector::zeros(2))
    .with_param("re", re)
    .with_param("im", im)
    .with_exact(move |t| {
        let r = (re * t).exp();
        Vector::from_vec(vec![r * (im * t).cos(), r * (im * t).sin()])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn wind_defaults() {
        let p = wind_oscillation(PI / 2.0, 20.0).unwrap();
        assert!(p.m().get(0, 0).abs() < 1e-14);
        assert!((p.m().get(0, 1) - 20.0).abs() < 1e-14);
        assert!((p.m().get(1, 0) + 20.0).abs() < 1e-14);
        assert_eq!(p.f(&v(&[1.0, 0.0])), v(&[0.0, 0.5]));
        let u = v(&[0.3, -1.2]);
        for y in [v(&[0.0, 0.0]), v(&[5.0, -2.0])] {
            let h = p.hvp(&y, &u, &u).unwrap();
            assert_eq!(h, v(&[2.0 * 0.3 * -1.2, 0.09 - 1.44]));
        }
        assert!(wind_oscillation(2.0, 1.0).is_err());
        assert!(wind_oscillation(0.5, -1.0).is_err());
    }

    #[test]
    fn allen_cahn_setup() {
        assert!((allen_cahn_profile(1.0) - 1.0).abs() < 1e-15);
        assert!((allen_cahn_profile(-1.0) + 1.0).abs() < 1e-15);
        let p = allen_cahn(0.01, 32).unwrap();
        assert_eq!(p.dim(), 31);
        // u = x matches the ±1 boundary values and is harmonic, so
        // −Mu + lift vanishes at every interior node.
        let x = spectral::chebyshev_points(32);
        let u = Vector::from_fn(31, |i, _| x[i + 1]);
        let linear_part = p.f(&u) - p.m().apply(&u) - u.map(|a| a - a * a * a);
        assert!(linear_part.amax() < 1e-10, "{}", linear_part.amax());
        assert!(allen_cahn(0.01, 3).is_err());
        assert!(allen_cahn(0.0, 8).is_err());
        let fd = allen_cahn_with_grid(0.01, 16, AllenCahnGrid::UniformFd).unwrap();
        let xu = spectral::uniform_points(16);
        let u = Vector::from_fn(15, |i, _| xu[i + 1]);
        let linear_part = fd.f(&u) - fd.m().apply(&u) - u.map(|a| a - a * a * a);
        assert!(linear_part.amax() < 1e-10);
    }

    #[test]
    fn nls_setup() {
        let p = nls_pseudospectral(16).unwrap();
        assert_eq!(p.dim(), 32);
        let mu = 2.0 * PI / nls_length();
        for j in 0..16 {
            let x = j as f64 * nls_length() / 16.0;
            assert!((p.y0()[j] - (0.5 + 0.025 * (mu * x).cos())).abs() < 1e-15);
            assert_eq!(p.y0()[j + 16], 0.0);
        }
        // M = [[0, D2], [-D2, 0]]
        assert!((p.m().get(0, 16) + 2.6875).abs() < 1e-14);
        assert!((p.m().get(16, 0) - 2.6875).abs() < 1e-14);
        assert!(nls_pseudospectral(15).is_err());
    }

    #[test]
    fn scalar_toys() {
        let lin = scalar_toy(1.0, ToyKind::Linear);
        assert!((lin.exact_solution(1.0).unwrap()[0] - (-1.0f64).exp()).abs() < 1e-16);
        let still = scalar_toy(0.0, ToyKind::Linear);
        assert_eq!(still.exact_solution(3.0).unwrap()[0], 1.0);
        let quad = scalar_toy(1.0, ToyKind::Quadratic);
        let expected = 1.0 / (1.0 + std::f64::consts::E);
        assert!((quad.exact_solution(1.0).unwrap()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn missing_derivatives_are_reported() {
        let p = Problem::new("bare", DenseMatrix::identity(1), v(&[1.0]), (0.0, 1.0), |y| y.clone());
        assert!(matches!(
            p.jvp(&v(&[1.0]), &v(&[1.0])),
            Err(ProblemError::MissingDerivative { .. })
        ));
        assert!(p.require_derivatives().is_err());
        let fd = p.with_fd_derivatives();
        assert_eq!(fd.derivative_source(), DerivativeSource::FiniteDifference);
        let j = fd.jvp(&v(&[2.0]), &v(&[3.0])).unwrap();
        assert!((j[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn fd_fallback_approximates_quadratic() {
        let base = wind_oscillation(0.3, 2.0).unwrap();
        let bare = Problem::new("bare-wind", base.m().clone(), base.y0().clone(), base.t_span(), {
            let b = base.clone();
            move |y| b.f(y)
        })
        .with_fd_derivatives();
        let y = v(&[0.7, -1.1]);
        let (a, b) = (v(&[0.2, 0.5]), v(&[-1.0, 0.4]));
        let dj = bare.jvp(&y, &a).unwrap() - base.jvp(&y, &a).unwrap();
        assert!(dj.amax() < 1e-9);
        let dh = bare.hvp(&y, &a, &b).unwrap() - base.hvp(&y, &a, &b).unwrap();
        assert!(dh.amax() < 1e-6);
    }
}

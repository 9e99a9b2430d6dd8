//! Real coefficient tableaux for explicit four-stage schemes and the
//! fourth-order order conditions they must satisfy.
//!
//! The same (A, b, c) feeds three steppers: the classical explicit RK step,
//! the modified exponential scheme (MVERK) and the simplified exponential
//! scheme (SVERK). For all three the fourth-order conditions are the eight
//! classical ones checked by [`check_order4`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance below which an order-condition residual counts as satisfied.
pub const ORDER_TOLERANCE: f64 = 1e-14;

/// Allowed deviation between a stored abscissa and the row sum of A.
const ROW_SUM_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum TableauError {
    #[error("tableau has {s} stages but {what} has length {len}")]
    Shape { s: usize, what: &'static str, len: usize },
    #[error("tableau is not explicit: a[{i}][{j}] = {value} must be zero")]
    NotExplicit { i: usize, j: usize, value: f64 },
    #[error("c[{i}] = {c} differs from the row sum {row_sum} of A")]
    RowSum { i: usize, c: f64, row_sum: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("order-4 checker requires 4 stages, got {0}")]
    UnsupportedStages(usize),
    #[error("unknown built-in tableau `{0}` (expected classical-rk4 or three-eighths)")]
    UnknownBuiltin(String),
    #[error("invalid tableau JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Explicit Butcher tableau with real coefficients.
///
/// Invariants: A is strictly lower triangular and `c[i]` equals the i-th row
/// sum of A.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tableau {
    s: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTableau {
    s: Option<usize>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Option<Vec<f64>>,
}

impl Tableau {
    /// Validates and builds a tableau; `c` defaults to the row sums of `a`.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, c: Option<Vec<f64>>) -> Result<Self, TableauError> {
        let s = b.len();
        if a.len() != s {
            return Err(TableauError::Shape { s, what: "A", len: a.len() });
        }
        for row in &a {
            if row.len() != s {
                return Err(TableauError::Shape { s, what: "row of A", len: row.len() });
            }
        }
        if a.iter().flatten().any(|x| !x.is_finite()) {
            return Err(TableauError::NonFinite("A"));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(TableauError::NonFinite("b"));
        }
        for (i, row) in a.iter().enumerate() {
            for (j, &value) in row.iter().enumerate().skip(i) {
                if value != 0.0 {
                    return Err(TableauError::NotExplicit { i, j, value });
                }
            }
        }
        let row_sums: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
        let c = match c {
            None => row_sums,
            Some(c) => {
                if c.len() != s {
                    return Err(TableauError::Shape { s, what: "c", len: c.len() });
                }
                if c.iter().any(|x| !x.is_finite()) {
                    return Err(TableauError::NonFinite("c"));
                }
                for (i, (&ci, &rs)) in c.iter().zip(&row_sums).enumerate() {
                    if (ci - rs).abs() > ROW_SUM_TOLERANCE {
                        return Err(TableauError::RowSum { i, c: ci, row_sum: rs });
                    }
                }
                c
            }
        };
        Ok(Self { s, a, b, c })
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn a_rows(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tableau serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TableauError> {
        let raw: RawTableau = serde_json::from_str(text).map_err(|e| TableauError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let t = Self::new(raw.a, raw.b, raw.c)?;
        if let Some(s) = raw.s {
            if s != t.s {
                return Err(TableauError::Shape { s, what: "b", len: t.s });
            }
        }
        Ok(t)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, TableauError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TableauError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Coefficient sets shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinTableau {
    /// a₂₁ = a₃₂ = 1/2, a₄₃ = 1, b = (1, 2, 2, 1)/6.
    ClassicalRk4,
    /// Kutta's 3/8 rule.
    ThreeEighths,
}

impl BuiltinTableau {
    pub const ALL: [BuiltinTableau; 2] = [BuiltinTableau::ClassicalRk4, BuiltinTableau::ThreeEighths];

    pub fn name(self) -> &'static str {
        match self {
            Self::ClassicalRk4 => "classical-rk4",
            Self::ThreeEighths => "three-eighths",
        }
    }

    pub fn tableau(self) -> Tableau {
        let (a, b) = match self {
            Self::ClassicalRk4 => (
                vec![
                    vec![0.0, 0.0, 0.0, 0.0],
                    vec![0.5, 0.0, 0.0, 0.0],
                    vec![0.0, 0.5, 0.0, 0.0],
                    vec![0.0, 0.0, 1.0, 0.0],
                ],
                vec![1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0],
            ),
            Self::ThreeEighths => (
                vec![
                    vec![0.0, 0.0, 0.0, 0.0],
                    vec![1.0 / 3.0, 0.0, 0.0, 0.0],
                    vec![-1.0 / 3.0, 1.0, 0.0, 0.0],
                    vec![1.0, -1.0, 1.0, 0.0],
                ],
                vec![1.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0],
            ),
        };
        Tableau::new(a, b, None).expect("built-in tableau is valid")
    }
}

impl fmt::Display for BuiltinTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinTableau {
    type Err = TableauError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TableauError::UnknownBuiltin(s.to_owned()))
    }
}

/// Looks up a built-in tableau by name.
pub fn builtin(name: &str) -> Result<Tableau, TableauError> {
    Ok(name.parse::<BuiltinTableau>()?.tableau())
}

/// Residuals of the eight fourth-order conditions, in the order
/// b·1, b·c, b·c², b·Ac, b·c³, (b∘c)·Ac, b·Ac², b₄a₄₃a₃₂c₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderConditionReport {
    pub residuals: [f64; 8],
    pub satisfied: bool,
}

impl OrderConditionReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Sums terms in order of increasing magnitude.
fn sum_small_to_large(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    terms.into_iter().sum()
}

/// Left-hand-side terms and right-hand side of each condition.
pub(crate) fn order4_terms(t: &Tableau) -> [(Vec<f64>, f64); 8] {
    let (a, b, c) = (&t.a, &t.b, &t.c);
    let idx = 0..4usize;
    let pairs = || (0..4usize).flat_map(|i| (0..4usize).map(move |j| (i, j)));
    [
        (idx.clone().map(|i| b[i]).collect(), 1.0),
        (idx.clone().map(|i| b[i] * c[i]).collect(), 0.5),
        (idx.clone().map(|i| b[i] * c[i] * c[i]).collect(), 1.0 / 3.0),
        (pairs().map(|(i, j)| b[i] * a[i][j] * c[j]).collect(), 1.0 / 6.0),
        (idx.clone().map(|i| b[i] * c[i] * c[i] * c[i]).collect(), 0.25),
        (pairs().map(|(i, j)| b[i] * c[i] * a[i][j] * c[j]).collect(), 0.125),
        (pairs().map(|(i, j)| b[i] * a[i][j] * c[j] * c[j]).collect(), 1.0 / 12.0),
        (vec![b[3] * a[3][2] * a[2][1] * c[1]], 1.0 / 24.0),
    ]
}

/// Evaluates the eight fourth-order conditions of a four-stage tableau.
pub fn check_order4(t: &Tableau) -> Result<OrderConditionReport, TableauError> {
    if t.s != 4 {
        return Err(TableauError::UnsupportedStages(t.s));
    }
    let mut residuals = [0.0; 8];
    for (r, (mut terms, rhs)) in residuals.iter_mut().zip(order4_terms(t)) {
        terms.push(-rhs);
        *r = sum_small_to_large(terms);
    }
    let satisfied = residuals.iter().all(|r| r.abs() <= ORDER_TOLERANCE);
    Ok(OrderConditionReport { residuals, satisfied })
}

//! Dense matrix-function kernels.
//!
//! The matrix exponential uses scaling and squaring around a diagonal Padé
//! approximant (degrees 3, 5, 7, 9 or 13, selected from the 1-norm of the
//! argument). The φ-functions φ₁..φ₃ are read off the top block row of one
//! exponential of an augmented block matrix, so both kernels share a single
//! code path.
//!
//! All kernels target small dense matrices (dimension up to a few hundred).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// State vectors used throughout the crate.
pub type Vector = DVector<f64>;

/// Highest φ index supported by [`phi_set`].
pub const MAX_PHI_ORDER: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatFunError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("phi order {0} is not supported (maximum is {MAX_PHI_ORDER})")]
    UnsupportedPhiOrder(usize),
    #[error("Padé denominator is singular")]
    Singular,
}

/// Real dense matrix, thin wrapper over [`nalgebra::DMatrix`].
#[derive(Clone, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Builds a matrix from entries listed row by row.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self, MatFunError> {
        if entries.len() != rows * cols {
            return Err(MatFunError::DimensionMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, entries)))
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatFunError> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(rows.len() * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(MatFunError::DimensionMismatch {
                    expected: ncols,
                    found: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), ncols, &entries)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_inner(inner: DMatrix<f64>) -> Self {
        Self(inner)
    }

    pub fn inner(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.0[(i, j)] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(&self.0 * factor)
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        self.0
            .column_iter()
            .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.0
            .row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, MatFunError> {
        if self.cols() != other.rows() {
            return Err(MatFunError::DimensionMismatch {
                expected: self.cols(),
                found: other.rows(),
            });
        }
        Ok(Self(&self.0 * &other.0))
    }

    /// `self * v` without a dimension check; callers guarantee `cols == len(v)`.
    #[inline]
    pub fn apply(&self, v: &Vector) -> Vector {
        &self.0 * v
    }

    /// `out = self * v`, reusing `out`'s allocation.
    #[inline]
    pub fn apply_into(&self, v: &Vector, out: &mut Vector) {
        self.0.mul_to(v, out);
    }

    /// Copies the `size`×`size` block starting at (`row`, `col`).
    pub fn block(&self, row: usize, col: usize, size: usize) -> DenseMatrix {
        Self(self.0.view((row, col), (size, size)).into_owned())
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix{}", self.0)
    }
}

impl std::ops::Add<&DenseMatrix> for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub<&DenseMatrix> for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        DenseMatrix(&self.0 - &rhs.0)
    }
}

impl std::ops::Neg for &DenseMatrix {
    type Output = DenseMatrix;
    fn neg(self) -> DenseMatrix {
        DenseMatrix(-&self.0)
    }
}

/// Checked dense matrix-vector product.
pub fn matvec(a: &DenseMatrix, v: &Vector) -> Result<Vector, MatFunError> {
    if a.cols() != v.len() {
        return Err(MatFunError::DimensionMismatch {
            expected: a.cols(),
            found: v.len(),
        });
    }
    Ok(a.apply(v))
}

fn check_square_finite(a: &DenseMatrix) -> Result<(), MatFunError> {
    if !a.is_square() {
        return Err(MatFunError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.is_finite() {
        return Err(MatFunError::NonFinite);
    }
    Ok(())
}

// Padé coefficients b_0..b_m and the 1-norm bounds θ_m below which degree m
// reaches unit-roundoff backward error (Higham 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539_398_330_063_23e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068;
const THETA13: f64 = 5.371920351148152;

/// Returns (U, V) for the low-degree approximants, where the Padé approximant is
/// (V - U)⁻¹ (V + U).
fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    // Even powers I, A², A⁴, ...
    let mut powers = vec![ident.clone()];
    for _ in 1..coeffs.len() / 2 {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let mut u_inner = DMatrix::zeros(n, n);
    let mut v = DMatrix::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        u_inner += p * coeffs[2 * k + 1];
        v += p * coeffs[2 * k];
    }
    (a * u_inner, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_high = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (u_high + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let v_high = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_high + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    (u, v)
}

/// Matrix exponential by scaling and squaring.
pub fn matexp(a: &DenseMatrix) -> Result<DenseMatrix, MatFunError> {
    check_square_finite(a)?;
    let n = a.rows();
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let norm = a.norm_1();
    let (u, v, squarings) = if norm <= THETA3 {
        let (u, v) = pade_low(&a.0, &PADE3);
        (u, v, 0)
    } else if norm <= THETA5 {
        let (u, v) = pade_low(&a.0, &PADE5);
        (u, v, 0)
    } else if norm <= THETA7 {
        let (u, v) = pade_low(&a.0, &PADE7);
        (u, v, 0)
    } else if norm <= THETA9 {
        let (u, v) = pade_low(&a.0, &PADE9);
        (u, v, 0)
    } else {
        let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
        let scaled = &a.0 * 2f64.powi(-s);
        let (u, v) = pade13(&scaled);
        (u, v, s as u32)
    };
    let numer = &v + &u;
    let denom = v - u;
    let mut r = denom.lu().solve(&numer).ok_or(MatFunError::Singular)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    let out = DenseMatrix(r);
    if !out.is_finite() {
        return Err(MatFunError::NonFinite);
    }
    Ok(out)
}

/// The matrices exp(A), φ₁(A), …, φ_k(A) for one argument A.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiSet {
    order: usize,
    matrices: Vec<DenseMatrix>,
}

impl PhiSet {
    /// Highest φ index held.
    pub fn order(&self) -> usize {
        self.order
    }

    /// φ_j(A); index 0 is exp(A).
    pub fn phi(&self, j: usize) -> &DenseMatrix {
        &self.matrices[j]
    }

    pub fn matrices(&self) -> &[DenseMatrix] {
        &self.matrices
    }

    /// Largest residual of A·φ_{j+1}(A) = φ_j(A) − I/j! over j < order, in the
    /// 1-norm relative to ‖A‖‖φ_{j+1}‖ + ‖φ_j‖ + 1/j!.
    pub fn recurrence_residual(&self, a: &DenseMatrix) -> f64 {
        let n = a.rows();
        let mut worst: f64 = 0.0;
        let mut inv_fact = 1.0;
        for j in 0..self.order {
            if j > 0 {
                inv_fact /= j as f64;
            }
            let lhs = &a.0 * &self.matrices[j + 1].0;
            let rhs = &self.matrices[j].0 - DMatrix::<f64>::identity(n, n) * inv_fact;
            let resid = DenseMatrix(lhs - rhs).norm_1();
            let scale = a.norm_1() * self.matrices[j + 1].norm_1() + self.matrices[j].norm_1() + inv_fact;
            worst = worst.max(resid / scale);
        }
        worst
    }
}

/// exp(A) and φ₁(A)..φ_k(A) from the exponential of the augmented block matrix
///
/// ```text
/// [ A  I  0 ... 0 ]
/// [ 0  0  I ... 0 ]
/// [ ...        I  ]
/// [ 0  0  0 ... 0 ]
/// ```
///
/// whose top block row exponentiates to [exp(A), φ₁(A), …, φ_k(A)].
pub fn phi_set(a: &DenseMatrix, k: usize) -> Result<PhiSet, MatFunError> {
    if k > MAX_PHI_ORDER {
        return Err(MatFunError::UnsupportedPhiOrder(k));
    }
    check_square_finite(a)?;
    let n = a.rows();
    if k == 0 {
        return Ok(PhiSet {
            order: 0,
            matrices: vec![matexp(a)?],
        });
    }
    let big = n * (k + 1);
    let mut aug = DMatrix::<f64>::zeros(big, big);
    aug.view_mut((0, 0), (n, n)).copy_from(&a.0);
    for block in 0..k {
        for i in 0..n {
            aug[(block * n + i, (block + 1) * n + i)] = 1.0;
        }
    }
    let e = matexp(&DenseMatrix(aug))?;
    let matrices = (0..=k).map(|j| e.block(0, j * n, n)).collect();
    Ok(PhiSet { order: k, matrices })
}

//! Second-derivative differentiation matrices.

use std::f64::consts::PI;

use crate::matfun::DenseMatrix;

/// Chebyshev points x_i = cos(iπ/n), i = 0..=n (so x₀ = 1, x_n = −1).
pub fn chebyshev_points(n: usize) -> Vec<f64> {
    (0..=n).map(|i| (PI * i as f64 / n as f64).cos()).collect()
}

/// First-derivative Chebyshev collocation matrix on the n+1 points of
/// [`chebyshev_points`], with the diagonal set by negative row sums.
pub fn chebyshev_d1(n: usize) -> DenseMatrix {
    let x = chebyshev_points(n);
    let weight = |i: usize| {
        let c = if i == 0 || i == n { 2.0 } else { 1.0 };
        if i.is_multiple_of(2) { c } else { -c }
    };
    let mut d = DenseMatrix::from_fn(n + 1, n + 1, |i, j| {
        if i == j {
            0.0
        } else {
            weight(i) / weight(j) / (x[i] - x[j])
        }
    });
    for i in 0..=n {
        let off: f64 = (0..=n).filter(|&j| j != i).map(|j| d.get(i, j)).sum();
        d.set(i, i, -off);
    }
    d
}

/// Chebyshev second-derivative matrix D₂ = D₁², size (n+1)×(n+1).
pub fn chebyshev_d2(n: usize) -> DenseMatrix {
    let d1 = chebyshev_d1(n);
    d1.matmul(&d1).expect("square")
}

/// Three-point second-difference matrix on the uniform grid
/// x_i = −1 + 2i/n, i = 0..=n. Boundary rows are left zero.
pub fn uniform_fd_d2(n: usize) -> DenseMatrix {
    let dx = 2.0 / n as f64;
    let inv = 1.0 / (dx * dx);
    let mut d = DenseMatrix::zeros(n + 1, n + 1);
    for i in 1..n {
        d.set(i, i - 1, inv);
        d.set(i, i, -2.0 * inv);
        d.set(i, i + 1, inv);
    }
    d
}

/// Uniform grid x_i = −1 + 2i/n, i = 0..=n.
pub fn uniform_points(n: usize) -> Vec<f64> {
    (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect()
}

/// Periodic Fourier pseudospectral second-derivative matrix on x_j = jL/n,
/// with μ = 2π/L:
/// off-diagonal ½μ²(−1)^{j+k+1} / sin²(μ(x_j − x_k)/2),
/// diagonal −μ²(2(n/2)² + 1)/6.
pub fn periodic_d2(n: usize, length: f64) -> DenseMatrix {
    let mu = 2.0 * PI / length;
    let mu2 = mu * mu;
    let half = (n / 2) as f64;
    let x: Vec<f64> = (0..n).map(|j| j as f64 * length / n as f64).collect();
    DenseMatrix::from_fn(n, n, |j, k| {
        if j == k {
            -mu2 * (2.0 * half * half + 1.0) / 6.0
        } else {
            let sign = if (j + k + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let s = (mu * (x[j] - x[k]) / 2.0).sin();
            0.5 * mu2 * sign / (s * s)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_d2_kills_constants_and_differentiates_parabola() {
        let n = 32;
        let d2 = chebyshev_d2(n);
        let x = chebyshev_points(n);
        for i in 0..=n {
            let row_const: f64 = (0..=n).map(|j| d2.get(i, j)).sum();
            assert!(row_const.abs() < 1e-8, "row {i}: {row_const}");
            let row_sq: f64 = (0..=n).map(|j| d2.get(i, j) * x[j] * x[j]).sum();
            assert!((row_sq - 2.0).abs() < 1e-8, "row {i}: {row_sq}");
        }
    }

    #[test]
    fn chebyshev_d1_differentiates_cubic() {
        let n = 8;
        let d1 = chebyshev_d1(n);
        let x = chebyshev_points(n);
        for i in 0..=n {
            let v: f64 = (0..=n).map(|j| d1.get(i, j) * x[j].powi(3)).sum();
            assert!((v - 3.0 * x[i] * x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_d2_matches_closed_forms() {
        let length = 4.0 * 2f64.sqrt() * PI;
        let d2 = periodic_d2(16, length);
        assert!((d2.get(0, 0) + 2.6875).abs() < 1e-14);
        assert_eq!(d2, d2.transpose());
        // second derivative of cos(μx) is −μ² cos(μx)
        let mu = 2.0 * PI / length;
        for j in 0..16 {
            let v: f64 = (0..16)
                .map(|k| d2.get(j, k) * (mu * k as f64 * length / 16.0).cos())
                .sum();
            let xj = j as f64 * length / 16.0;
            assert!((v + mu * mu * (mu * xj).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_fd_is_exact_on_parabola() {
        let n = 10;
        let d2 = uniform_fd_d2(n);
        let x = uniform_points(n);
        for i in 1..n {
            let v: f64 = (0..=n).map(|j| d2.get(i, j) * x[j] * x[j]).sum();
            assert!((v - 2.0).abs() < 1e-10);
        }
    }
}

//! Uniform grids and quadrature rules.
//!
//! Two kinds of grids appear in the solvers: a closed interval `[-π, π]` with both
//! endpoints (free-boundary problems, where integrands are smooth but not periodic)
//! and a periodic grid on the circle (viscous and two-species problems). The closed
//! grid uses the trapezoid rule with Gregory end corrections, the periodic grid the
//! plain trapezoid rule, which is spectrally accurate there.

use std::f64::consts::PI;

use nalgebra::DMatrix;

/// Gregory coefficients `G_k`, k = 1..=7.
const GREGORY: [f64; 7] = [
    1.0 / 12.0,
    1.0 / 24.0,
    19.0 / 720.0,
    3.0 / 160.0,
    863.0 / 60480.0,
    275.0 / 24192.0,
    33953.0 / 3628800.0,
];

/// Default number of difference corrections applied at each end.
pub const GREGORY_ORDER: usize = 7;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Trapezoid weights on `n` equispaced nodes spanning `[a, b]` (both ends included),
/// corrected with `order` Gregory difference terms at each end.
pub fn gregory_weights(n: usize, a: f64, b: f64, order: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two nodes");
    let order = order.min(GREGORY.len());
    let h = (b - a) / (n - 1) as f64;
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    // Corrections touch nodes 0..=order at each end; they must not overlap.
    let order = order.min((n - 1) / 2);
    for (k, g) in GREGORY.iter().take(order).enumerate() {
        let k = k + 1;
        // -h g (nabla^k f_n + (-1)^k Delta^k f_0)
        for j in 0..=k {
            let c = binomial(k, j);
            // Delta^k f_0 = sum_j (-1)^(k-j) C(k,j) f_j
            let fwd = if (k - j) % 2 == 0 { c } else { -c };
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            w[j] -= h * g * sign * fwd;
            // nabla^k f_n = sum_j (-1)^j C(k,j) f_{n-j}
            let bwd = if j % 2 == 0 { c } else { -c };
            w[n - 1 - j] -= h * g * bwd;
        }
    }
    w
}

/// Equispaced nodes on `[-π, π]`, both endpoints included, with corrected weights.
#[derive(Debug, Clone)]
pub struct IntervalGrid {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub h: f64,
}

impl IntervalGrid {
    pub fn new(n: usize) -> Self {
        let h = 2.0 * PI / (n - 1) as f64;
        let z = (0..n).map(|i| -PI + i as f64 * h).collect();
        let w = gregory_weights(n, -PI, PI, GREGORY_ORDER);
        Self { z, w, h }
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.w.iter().zip(f).map(|(w, f)| w * f).sum()
    }

    /// Mean value projection `(1/2π) ∫ v`.
    pub fn mean(&self, v: &[f64]) -> f64 {
        self.integrate(v) / (2.0 * PI)
    }

    /// Cosine moment `(1/π) ∫ cos(z) v(z) dz`.
    pub fn cos_moment(&self, v: &[f64]) -> f64 {
        self.z
            .iter()
            .zip(&self.w)
            .zip(v)
            .map(|((z, w), v)| w * z.cos() * v)
            .sum::<f64>()
            / PI
    }
}

/// The three projections onto constants, `cos z`, and the remainder.
///
/// The projections are orthogonal for the discrete inner product induced by the
/// quadrature weights, so `P₀ + P₁ + P_h = id`, `P₀P₁ = 0`, `P₀1 = 1` and
/// `P₁cos = cos` hold to rounding on the grid.
#[derive(Debug, Clone)]
pub struct Projections {
    grid: IntervalGrid,
    cos: Vec<f64>,
    /// Inverse Gram matrix of `{1, cos}`.
    gram_inv: [[f64; 2]; 2],
}

impl Projections {
    pub fn new(grid: &IntervalGrid) -> Self {
        let cos: Vec<f64> = grid.z.iter().map(|z| z.cos()).collect();
        let g00: f64 = grid.w.iter().sum();
        let g01: f64 = grid.w.iter().zip(&cos).map(|(w, c)| w * c).sum();
        let g11: f64 = grid.w.iter().zip(&cos).map(|(w, c)| w * c * c).sum();
        let det = g00 * g11 - g01 * g01;
        Self {
            grid: grid.clone(),
            cos,
            gram_inv: [[g11 / det, -g01 / det], [-g01 / det, g00 / det]],
        }
    }

    /// Coefficients `(A₀, A₁)` of the `{1, cos}` component of `v`.
    pub fn coefficients(&self, v: &[f64]) -> (f64, f64) {
        let b0 = self.grid.integrate(v);
        let b1: f64 = self.grid.w.iter().zip(&self.cos).zip(v).map(|((w, c), v)| w * c * v).sum();
        let g = &self.gram_inv;
        (g[0][0] * b0 + g[0][1] * b1, g[1][0] * b0 + g[1][1] * b1)
    }

    /// Row functionals: `A₀ = Σ_i r0_i v_i`, `A₁ = Σ_i r1_i v_i`.
    pub fn functionals(&self) -> (Vec<f64>, Vec<f64>) {
        let g = &self.gram_inv;
        let r0 = self.grid.w.iter().zip(&self.cos).map(|(w, c)| g[0][0] * w + g[0][1] * w * c).collect();
        let r1 = self.grid.w.iter().zip(&self.cos).map(|(w, c)| g[1][0] * w + g[1][1] * w * c).collect();
        (r0, r1)
    }

    pub fn p0(&self, v: &[f64]) -> Vec<f64> {
        vec![self.coefficients(v).0; v.len()]
    }

    pub fn p1(&self, v: &[f64]) -> Vec<f64> {
        let a1 = self.coefficients(v).1;
        self.cos.iter().map(|c| a1 * c).collect()
    }

    pub fn ph(&self, v: &[f64]) -> Vec<f64> {
        let (a0, a1) = self.coefficients(v);
        v.iter().zip(&self.cos).map(|(v, c)| v - a0 - a1 * c).collect()
    }
}

/// Periodic grid `x_j = j h`, `h = 2π/n`, on `[0, 2π)`; `n` must be even so that
/// `x_{n/2} = π` is a node and even functions live on the half grid `0..=n/2`.
#[derive(Debug, Clone)]
pub struct PeriodicGrid {
    pub n: usize,
    pub x: Vec<f64>,
    pub h: f64,
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n % 2 == 0, "periodic grid needs an even node count");
        let h = 2.0 * PI / n as f64;
        Self {
            n,
            x: (0..n).map(|j| j as f64 * h).collect(),
            h,
        }
    }

    /// Number of independent values of an even grid function.
    pub fn half_len(&self) -> usize {
        self.n / 2 + 1
    }

    /// Half-grid nodes `0, h, …, π`.
    pub fn half_nodes(&self) -> &[f64] {
        &self.x[..self.half_len()]
    }

    /// Trapezoid weights for even functions stored on the half grid.
    pub fn half_weights(&self) -> Vec<f64> {
        let m = self.half_len();
        (0..m)
            .map(|j| if j == 0 || j == m - 1 { self.h } else { 2.0 * self.h })
            .collect()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.h
    }

    pub fn integrate_half(&self, f: &[f64]) -> f64 {
        self.half_weights().iter().zip(f).map(|(w, f)| w * f).sum()
    }

    /// Full-grid values of an even function given on the half grid.
    pub fn extend_even(&self, half: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| half[if j <= self.n / 2 { j } else { self.n - j }])
            .collect()
    }

    /// Extension matrix `E` with `full = E · half`.
    pub fn extension_matrix(&self) -> DMatrix<f64> {
        let m = self.half_len();
        DMatrix::from_fn(self.n, m, |j, k| {
            let src = if j <= self.n / 2 { j } else { self.n - j };
            if src == k {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Fourier first-derivative matrix.
    pub fn d1(&self) -> DMatrix<f64> {
        let h = self.h;
        DMatrix::from_fn(self.n, self.n, |j, k| {
            if j == k {
                0.0
            } else {
                let d = j as f64 - k as f64;
                let s = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
                0.5 * s / (0.5 * d * h).tan()
            }
        })
    }

    /// Fourier second-derivative matrix.
    pub fn d2(&self) -> DMatrix<f64> {
        let h = self.h;
        DMatrix::from_fn(self.n, self.n, |j, k| {
            if j == k {
                -PI * PI / (3.0 * h * h) - 1.0 / 6.0
            } else {
                let d = j as f64 - k as f64;
                let s = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
                -0.5 * s / (0.5 * d * h).sin().powi(2)
            }
        })
    }

    /// Circulant convolution matrix `(K u)_j = Σ_k h κ(x_j - x_k) u_k`.
    pub fn convolution_matrix(&self, kernel: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let row: Vec<f64> = (0..self.n).map(|d| self.h * kernel(d as f64 * self.h)).collect();
        DMatrix::from_fn(self.n, self.n, |j, k| row[(j + self.n - k) % self.n])
    }
}

//! Diffusive corrections for `u_t = εu_xx + (u (W*u)_x)_x`.
//!
//! For the rank-one model `W = δ - (1/π + μ) cos` even steady states satisfy
//! `ε log u + u = (1/π + μ) A cos x + m` with `A = ∫cos·u`, so
//! `u = ε W₀(e^{v/ε}/ε)`. The collocation solver handles general affine families.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::continuation::Branch;
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, LinearFamily};
use crate::quadrature::PeriodicGrid;
use crate::rank_one::amplitudes_for_support;

/// Principal branch `W₀` of the Lambert function, `w e^w = x`, `x ≥ -1/e`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -(-1.0f64).exp();
    if x.is_nan() || x < branch {
        return Err(Error::Domain(format!("W₀ needs x ≥ -1/e, got {x}")));
    }
    if x == branch {
        return Ok(-1.0);
    }
    if x == 0.0 || x == f64::INFINITY {
        return Ok(x);
    }
    let mut w = if x < -0.32 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..40 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if f == 0.0 || wp1.abs() < 1e-300 {
            break;
        }
        let dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= dw;
        if dw.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// `W₀(e^t)` without forming `e^t`, usable far beyond the overflow threshold.
pub fn lambert_w0_exp(t: f64) -> f64 {
    if t < 700.0 {
        return lambert_w0(t.exp()).expect("e^t is positive");
    }
    // w + ln w = t
    let mut w = t - t.ln();
    for _ in 0..20 {
        let dw = (w + w.ln() - t) / (1.0 + 1.0 / w);
        w -= dw;
        if dw.abs() <= 4.0 * f64::EPSILON * w {
            break;
        }
    }
    w
}

/// Inverse of `u ↦ ε log u + u`.
pub fn lambert_density(v: f64, eps: f64) -> f64 {
    eps * lambert_w0_exp(v / eps - eps.ln())
}

/// Slope `μ₁(ρ)` of the slanted branch `μ ≈ ε μ₁(ρ)`, `|ρ| < 1`.
pub fn mu1(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("μ₁ needs |ρ| < 1, got {rho}")));
    }
    // 1 - √(1-ρ²) = ρ²/(1 + √(1-ρ²)) avoids cancellation near ρ = 0
    Ok(2.0 / (PI * (1.0 + (1.0 - rho * rho).sqrt())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mu1Limit {
    Zero,
    One,
}

/// Endpoint values `μ₁(0) = 1/π`, `μ₁(1) = 2/π`.
pub fn mu1_limit(which: Mu1Limit) -> f64 {
    match which {
        Mu1Limit::Zero => 1.0 / PI,
        Mu1Limit::One => 2.0 / PI,
    }
}

/// Adjoint null vector and its pairings with `∂_μF` and `∂_εF` at `u = 1 + ρ cos`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AdjointPairings {
    pub rho: f64,
    pub pair_mu: f64,
    pub pair_eps: f64,
    pub pair_mu_quadrature: f64,
    pub pair_eps_quadrature: f64,
}

impl AdjointPairings {
    /// `e₀*(x) = -(1/ρ) log(1 + ρ cos x)`.
    pub fn e0_star(&self, x: f64) -> f64 {
        -(self.rho * x.cos()).ln_1p() / self.rho
    }

    pub fn mu1(&self) -> f64 {
        -self.pair_eps / self.pair_mu
    }
}

pub fn adjoint_pairings(rho: f64) -> Result<AdjointPairings> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("pairings need 0 < ρ < 1, got {rho}")));
    }
    let pair_mu = -PI * PI * rho;
    let pair_eps = 2.0 * PI * rho / (1.0 + (1.0 - rho * rho).sqrt());
    // periodic trapezoid converges geometrically with rate acosh(1/ρ)
    let n = ((40.0 / (1.0 / rho).acosh()).ceil() as usize).clamp(256, 1 << 16);
    let h = 2.0 * PI / n as f64;
    let (mut qm, mut qe) = (0.0, 0.0);
    for j in 0..n {
        let x = j as f64 * h;
        let e = -(rho * x.cos()).ln_1p() / rho;
        qm += e * (PI * rho * x.cos() + rho * rho * PI * (2.0 * x).cos());
        qe += e * (-rho * x.cos());
    }
    let (qm, qe) = (qm * h, qe * h);
    let mismatch = (qm - pair_mu).abs().max((qe - pair_eps).abs());
    if mismatch > 1e-8 {
        return Err(Error::Consistency(format!(
            "adjoint pairings: quadrature differs from closed form by {mismatch:.3e}"
        )));
    }
    Ok(AdjointPairings { rho, pair_mu, pair_eps, pair_mu_quadrature: qm, pair_eps_quadrature: qe })
}

/// Even steady state on `[-π, π]` (both endpoints stored).
#[derive(Debug, Clone, Serialize)]
pub struct ViscousProfile {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub rho: f64,
    /// Cosine moment `∫cos·u`.
    pub a: f64,
    /// Constant in `ε log u + W*u = m`.
    pub m: f64,
    pub mu: f64,
    pub eps: f64,
}

impl ViscousProfile {
    fn from_half(half: &[f64], rho: f64, a: f64, m: f64, mu: f64, eps: f64) -> Self {
        let n = 2 * (half.len() - 1);
        let h = 2.0 * PI / n as f64;
        let x = (0..=n).map(|i| -PI + i as f64 * h).collect();
        let u = (0..=n).map(|i| half[i.abs_diff(n / 2)]).collect();
        Self { x, u, rho, a, m, mu, eps }
    }

    /// Values on `[0, π]`.
    pub fn half(&self) -> &[f64] {
        &self.u[(self.u.len() - 1) / 2..]
    }

    fn h(&self) -> f64 {
        2.0 * PI / (self.u.len() - 1) as f64
    }

    pub fn mass(&self) -> f64 {
        self.u[..self.u.len() - 1].iter().sum::<f64>() * self.h()
    }

    pub fn cos_moment(&self) -> f64 {
        self.x.iter().zip(&self.u).take(self.u.len() - 1).map(|(x, u)| x.cos() * u).sum::<f64>() * self.h()
    }

    pub fn sup(&self) -> f64 {
        self.u.iter().fold(f64::MIN, |a, &b| a.max(b))
    }

    pub fn min(&self) -> f64 {
        self.u.iter().fold(f64::MAX, |a, &b| a.min(b))
    }

    /// Largest `|u(x) - u(-x)|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.u.len() - 1;
        (0..=n).map(|i| (self.u[i] - self.u[n - i]).abs()).fold(0.0, f64::max)
    }
}

/// Parameters of the Lambert-W steady state of the rank-one model.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClosedForm {
    pub rho: f64,
    pub eps: f64,
    pub a: f64,
    pub m: f64,
    pub mu: f64,
}

impl ClosedForm {
    pub fn potential(&self, x: f64) -> f64 {
        (1.0 / PI + self.mu) * self.a * x.cos() + self.m
    }

    pub fn value(&self, x: f64) -> f64 {
        lambert_density(self.potential(x), self.eps)
    }

    pub fn profile(&self, n: usize) -> ViscousProfile {
        let grid = PeriodicGrid::new(n);
        let half: Vec<f64> = grid.half_nodes().iter().map(|&x| self.value(x)).collect();
        ViscousProfile::from_half(&half, self.rho, self.a, self.m, self.mu, self.eps)
    }
}

/// Inviscid `(A, m, μ)` at cosine moment `ρπ`: the linear profile for `ρ ≤ 1`, the
/// vacuum bubble for `1 < ρ < 2`.
fn inviscid_parameters(rho: f64) -> (f64, f64, f64) {
    let a = rho * PI;
    if rho <= 1.0 {
        return (a, 1.0, 0.0);
    }
    let moment = |l: f64| {
        let (a0, a1) = amplitudes_for_support(l);
        2.0 * a0 * l.sin() + a1 * (l + l.sin() * l.cos())
    };
    let (mut lo, mut hi) = (1e-9, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if moment(mid) > a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a0, a1) = amplitudes_for_support(0.5 * (lo + hi));
    (a, a0, a1 / a - 1.0 / PI)
}

const CLOSED_FORM_NODES: usize = 4096;

fn closed_form_newton(rho: f64, eps: f64, start: Vector3<f64>) -> Result<Vector3<f64>> {
    let grid = PeriodicGrid::new(CLOSED_FORM_NODES);
    let w = grid.half_weights();
    let nodes = grid.half_nodes();
    let eval = |p: &Vector3<f64>| {
        let (a, m, mu) = (p[0], p[1], p[2]);
        let c = 1.0 / PI + mu;
        let mut r = Vector3::new(-2.0 * PI, -rho * PI, a);
        let mut j = Matrix3::zeros();
        j[(2, 0)] = 1.0;
        for (x, w) in nodes.iter().zip(&w) {
            let cx = x.cos();
            let u = lambert_density(c * a * cx + m, eps);
            let s = w * u / (eps + u);
            let dv = [c * cx, 1.0, a * cx];
            r[0] += w * u;
            r[1] += w * cx * u;
            r[2] -= w * cx * u;
            for k in 0..3 {
                j[(0, k)] += s * dv[k];
                j[(1, k)] += s * cx * dv[k];
                j[(2, k)] -= s * cx * dv[k];
            }
        }
        (r, j)
    };
    let mut p = start;
    let mut history = Vec::new();
    for _ in 0..60 {
        let (r, j) = eval(&p);
        let rn = r.amax();
        history.push(rn);
        if rn <= 1e-12 {
            return Ok(p);
        }
        let dp = j.lu().solve(&r).ok_or_else(|| Error::SingularMatrix("closed-form Jacobian".into()))?;
        let mut t = 1.0;
        loop {
            let trial = p - dp * t;
            if eval(&trial).0.amax() < rn || t < 1e-4 {
                p = trial;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NoConvergence { iterations: history.len(), history })
}

/// Solve the three self-consistency conditions for the Lambert-W profile: mass `2π`,
/// cosine moment `ρπ`, and `A` equal to the profile's own cosine moment.
/// Falls back to a homotopy in `ε` when the direct Newton solve fails.
pub fn closed_form(rho: f64, eps: f64) -> Result<ClosedForm> {
    if !(rho > 0.0 && rho < 2.0) || !(eps > 0.0) {
        return Err(Error::Domain(format!("closed form needs 0 < ρ < 2 and ε > 0, got ρ = {rho}, ε = {eps}")));
    }
    let (a, m, mu) = inviscid_parameters(rho);
    let start = Vector3::new(a, m, mu);
    let p = match closed_form_newton(rho, eps, start) {
        Ok(p) => p,
        Err(_) => {
            let mut p = start;
            let mut e = eps.max(1.0);
            loop {
                p = closed_form_newton(rho, e, p)?;
                if e == eps {
                    break p;
                }
                e = (0.7 * e).max(eps);
            }
        }
    };
    Ok(ClosedForm { rho, eps, a: p[0], m: p[1], mu: p[2] })
}

pub fn closed_form_profile(rho: f64, eps: f64, n: usize) -> Result<ViscousProfile> {
    Ok(closed_form(rho, eps)?.profile(n))
}

/// `ρ` at which the closed-form profile peaks at `peak`.
pub fn rho_for_peak(peak: f64, eps: f64) -> Result<f64> {
    let top = |rho: f64| closed_form(rho, eps).map(|c| c.value(0.0));
    let (mut lo, mut hi) = (1e-3, 1.999);
    if !(top(lo)? < peak && top(hi)? > peak) {
        return Err(Error::Bracket { lo, hi });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if top(mid)? < peak {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy)]
pub struct CollocationSettings {
    /// Periodic grid size (even, at least 256).
    pub n: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CollocationSettings {
    fn default() -> Self {
        Self { n: 256, tol: 1e-10, max_iter: 60 }
    }
}

/// Circulant matrix of `u ↦ W*u` on the periodic grid, built from the multipliers.
fn convolution_operator(k: &KernelSpec, grid: &PeriodicGrid) -> DMatrix<f64> {
    let n = grid.n;
    let mult: Vec<f64> = (0..=n / 2).map(|l| k.multiplier_unchecked(l)).collect();
    let row: Vec<f64> = (0..n)
        .map(|d| {
            let t = d as f64 * grid.h;
            let mut s = mult[0] + mult[n / 2] * (0.5 * n as f64 * t).cos();
            for (l, m) in mult.iter().enumerate().take(n / 2).skip(1) {
                s += 2.0 * m * (l as f64 * t).cos();
            }
            s / n as f64
        })
        .collect();
    DMatrix::from_fn(n, n, |j, i| row[(j + n - i) % n])
}

struct Collocation {
    grid: PeriodicGrid,
    ext: DMatrix<f64>,
    /// Rows `0..=n/2` of the convolution acting on half-grid values.
    c_base: DMatrix<f64>,
    c_slope: DMatrix<f64>,
    weights: Vec<f64>,
    cos: Vec<f64>,
}

impl Collocation {
    fn new(family: &LinearFamily, n: usize) -> Self {
        let grid = PeriodicGrid::new(n);
        let ext = grid.extension_matrix();
        let m = grid.half_len();
        let c_base = (convolution_operator(&family.base, &grid) * &ext).rows(0, m).into_owned();
        let c_slope = (convolution_operator(&family.slope, &grid) * &ext).rows(0, m).into_owned();
        let weights = grid.half_weights();
        let cos = grid.half_nodes().iter().map(|x| x.cos()).collect();
        Self { grid, ext, c_base, c_slope, weights, cos }
    }

    /// Residual and Jacobian of `ε w + W_μ*e^w - k = 0` with the two moment
    /// conditions, in the unknowns `(w = log u on [0, π], μ, k)`.
    fn system(&self, x: &DVector<f64>, eps: f64, rho: f64) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.grid.half_len();
        let w = x.rows(0, m);
        let (mu, k) = (x[m], x[m + 1]);
        let u = w.map(f64::exp);
        let c = &self.c_base + &self.c_slope * mu;
        let mut r = DVector::zeros(m + 2);
        let mut j = DMatrix::zeros(m + 2, m + 2);
        let g = &w * eps + &c * &u - DVector::from_element(m, k);
        r.rows_mut(0, m).copy_from(&g);
        let mut ju = c;
        for (col, uk) in ju.column_iter_mut().zip(u.iter()) {
            let mut col = col;
            col *= *uk;
        }
        for i in 0..m {
            ju[(i, i)] += eps;
        }
        j.view_mut((0, 0), (m, m)).copy_from(&ju);
        j.view_mut((0, m), (m, 1)).copy_from(&(&self.c_slope * &u));
        j.view_mut((0, m + 1), (m, 1)).fill(-1.0);
        r[m] = (0..m).map(|i| self.weights[i] * u[i]).sum::<f64>() - 2.0 * PI;
        r[m + 1] = (0..m).map(|i| self.weights[i] * self.cos[i] * u[i]).sum::<f64>() - rho * PI;
        for i in 0..m {
            j[(m, i)] = self.weights[i] * u[i];
            j[(m + 1, i)] = self.weights[i] * self.cos[i] * u[i];
        }
        (r, j)
    }

    /// Sup-norm of `εu'' + (u (W_μ*u)')'` on the full grid, relative to `ε‖u''‖∞`.
    fn flux_residual(&self, family: &LinearFamily, uh: &[f64], mu: f64, eps: f64) -> f64 {
        let u = &self.ext * DVector::from_column_slice(uh);
        let c = convolution_operator(&family.at(mu), &self.grid);
        let d1 = self.grid.d1();
        let diffusion = self.grid.d2() * &u * eps;
        let f = &diffusion + &d1 * u.component_mul(&(&d1 * (c * &u)));
        f.amax() / diffusion.amax().max(f64::MIN_POSITIVE)
    }
}

/// Critical `μ` of the affine family: the first multiplier vanishes.
fn critical_mu(family: &LinearFamily) -> Result<f64> {
    let s = family.slope.multiplier_unchecked(1);
    if s == 0.0 {
        return Err(Error::InvalidArgument("μ does not move the first multiplier".into()));
    }
    Ok(-family.base.multiplier_unchecked(1) / s)
}

/// Newton collocation for even steady states of `εu'' + (u (W_μ*u)')' = 0` with
/// `∫u = 2π`, `∫cos·u = ρπ`. Even steady states carry zero flux, so the solver
/// works with the integrated form `ε log u + W_μ*u = k` in the unknowns
/// `(log u on [0, π], μ, k)`, which stays well scaled in near-vacuum regions.
/// Without a guess the start is the inviscid rank-one profile, smoothed by the
/// Lambert map, at `μ_c + ε μ₁(ρ)` (or the bubble shift for `ρ > 1`).
pub fn steady_collocation(
    family: &LinearFamily,
    eps: f64,
    rho: f64,
    settings: CollocationSettings,
    guess: Option<&ViscousProfile>,
) -> Result<ViscousProfile> {
    Ok(steady_state(family, eps, rho, settings, guess)?.0)
}

/// As [`steady_collocation`], also returning the sup-norm of the second-order
/// residual `εu'' + (u (W_μ*u)')'` at the solution, relative to `ε‖u''‖∞`.
pub fn steady_state(
    family: &LinearFamily,
    eps: f64,
    rho: f64,
    settings: CollocationSettings,
    guess: Option<&ViscousProfile>,
) -> Result<(ViscousProfile, f64)> {
    if !(eps > 0.0) || !(rho > 0.0 && rho < 2.0) {
        return Err(Error::Domain(format!("collocation needs ε > 0 and 0 < ρ < 2, got ε = {eps}, ρ = {rho}")));
    }
    if settings.n < 256 || settings.n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("grid size must be even and ≥ 256, got {}", settings.n)));
    }
    let col = Collocation::new(family, settings.n);
    let m = col.grid.half_len();
    let mut x = DVector::zeros(m + 2);
    match guess {
        Some(g) if g.half().len() == m && g.min() > 0.0 => {
            for (k, u) in g.half().iter().enumerate() {
                x[k] = u.ln();
            }
            x[m] = g.mu;
        }
        _ => {
            let (a, m0, shift) = inviscid_parameters(rho);
            let c = 1.0 / PI + shift;
            for (k, xk) in col.grid.half_nodes().iter().enumerate() {
                x[k] = lambert_density(c * a * xk.cos() + m0, eps).max(f64::MIN_POSITIVE).ln();
            }
            let slant = if rho < 1.0 { eps * mu1(rho)? } else { shift };
            x[m] = critical_mu(family)? + slant;
        }
    }
    // best constant for the starting profile
    let u0 = x.rows(0, m).map(f64::exp);
    let g0 = x.rows(0, m) * eps + (&col.c_base + &col.c_slope * x[m]) * &u0;
    x[m + 1] = g0.mean();

    let mut history = Vec::new();
    for _ in 0..=settings.max_iter {
        let (r, j) = col.system(&x, eps, rho);
        let rn = r.amax();
        history.push(rn);
        if rn <= settings.tol {
            let uh: Vec<f64> = x.rows(0, m).iter().map(|w| w.exp()).collect();
            let a: f64 = (0..m).map(|i| col.weights[i] * col.cos[i] * uh[i]).sum();
            let flux = col.flux_residual(family, &uh, x[m], eps);
            return Ok((ViscousProfile::from_half(&uh, rho, a, x[m + 1], x[m], eps), flux));
        }
        if !rn.is_finite() {
            break;
        }
        let dx = j.lu().solve(&r).ok_or_else(|| Error::SingularMatrix("collocation Jacobian".into()))?;
        let mut t = 1.0;
        loop {
            let trial = &x - &dx * t;
            if col.system(&trial, eps, rho).0.amax() < rn || t < 1e-3 {
                x = trial;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NoConvergence { iterations: history.len(), history })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlantPoint {
    pub rho: f64,
    pub eps: f64,
    pub mu: f64,
    pub mu_over_eps: f64,
    /// `μ₁(ρ)` relative to the critical `μ`; absent for `ρ ≥ 1`.
    pub mu1_prediction: Option<f64>,
}

/// Branch over `ρ` at fixed `ε`, each point seeded by the previous one.
pub fn viscous_branch(
    family: &LinearFamily,
    eps: f64,
    rhos: &[f64],
    settings: CollocationSettings,
) -> Result<Branch<SlantPoint>> {
    let mu_c = critical_mu(family)?;
    let mut branch = Branch::new();
    let mut prev: Option<ViscousProfile> = None;
    for &rho in rhos {
        match steady_collocation(family, eps, rho, settings, prev.as_ref()) {
            Ok(p) => {
                branch.points.push(SlantPoint {
                    rho,
                    eps,
                    mu: p.mu,
                    mu_over_eps: (p.mu - mu_c) / eps,
                    mu1_prediction: mu1(rho).ok(),
                });
                prev = Some(p);
            }
            Err(e) => {
                branch.truncation = Some(format!("ρ = {rho}: {e}"));
                break;
            }
        }
    }
    Ok(branch)
}

/// Independent branches for several `ε`, computed concurrently.
pub fn slant_table(
    family: &LinearFamily,
    eps_values: &[f64],
    rhos: &[f64],
    settings: CollocationSettings,
) -> Result<Vec<Branch<SlantPoint>>> {
    eps_values.par_iter().map(|&e| viscous_branch(family, e, rhos, settings)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Snapshots on the periodic grid `x_j = 2πj/n`.
    pub profiles: Vec<Vec<f64>>,
    /// Largest `|∫u(t) - ∫u(0)|` over all steps.
    pub mass_drift: f64,
    /// Smallest stability bound met along the run.
    pub dt_bound: f64,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.profiles.last().expect("trajectory holds the initial state")
    }
}

/// Semi-implicit spectral scheme for `u_t = εu_xx + (u (W*u)_x)_x`.
///
/// The Dirac part `d(u u_x)_x` is stabilized by `α ∂xx` with `α = d·max u`, taken
/// implicitly together with `ε ∂xx`; the rest is explicit. Mode zero is never
/// touched, so mass is conserved up to rounding. The explicit transport needs
/// `dt ≤ ½ min(h/max|(W_s*u)_x|, 1/max|(W_s*u)_xx|)`; a larger `dt` is rejected.
pub fn time_step(
    u0: &[f64],
    kernel: &KernelSpec,
    eps: f64,
    dt: f64,
    t_end: f64,
    record_every: usize,
) -> Result<Trajectory> {
    let n = u0.len();
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!("grid size must be even, got {n}")));
    }
    if u0.iter().any(|&u| !(u >= 0.0)) {
        return Err(Error::Domain("initial density must be nonnegative".into()));
    }
    if !(dt > 0.0) || !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and ε ≥ 0, got dt = {dt}, ε = {eps}")));
    }
    let h = 2.0 * PI / n as f64;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let wave: Vec<f64> = (0..n).map(|j| if j <= n / 2 { j as f64 } else { j as f64 - n as f64 }).collect();
    let smooth: Vec<f64> = wave.iter().map(|k| kernel.smooth_multiplier(k.abs() as usize)).collect();
    let d = kernel.dirac_weight;
    let nyq = n / 2;

    let to_complex = |v: &[f64]| v.iter().map(|&x| Complex::new(x, 0.0)).collect::<Vec<_>>();
    let back = |mut c: Vec<Complex<f64>>| {
        inv.process(&mut c);
        c.iter().map(|z| z.re / n as f64).collect::<Vec<f64>>()
    };

    let mut u = u0.to_vec();
    let mass0 = u.iter().sum::<f64>() * h;
    let mut traj = Trajectory {
        times: vec![0.0],
        profiles: vec![u.clone()],
        mass_drift: 0.0,
        dt_bound: f64::INFINITY,
    };
    let steps = (t_end / dt).round() as usize;
    for step in 1..=steps {
        let mut uh = to_complex(&u);
        fwd.process(&mut uh);
        let mut wx = vec![Complex::new(0.0, 0.0); n];
        let mut wxx = vec![Complex::new(0.0, 0.0); n];
        let mut dx = vec![Complex::new(0.0, 0.0); n];
        for j in 0..n {
            let ik = if j == nyq { Complex::new(0.0, 0.0) } else { Complex::new(0.0, wave[j]) };
            wx[j] = ik * smooth[j] * uh[j];
            wxx[j] = -wave[j] * wave[j] * smooth[j] * uh[j];
            dx[j] = ik * uh[j];
        }
        let (wx, wxx, ux) = (back(wx), back(wxx), back(dx));
        let vmax = wx.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let rmax = wxx.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let bound = 0.5 * (h / vmax.max(1e-300)).min(1.0 / rmax.max(1e-300));
        traj.dt_bound = traj.dt_bound.min(bound);
        if dt > bound {
            return Err(Error::StepRejected { dt, suggested: bound });
        }
        let alpha = d * u.iter().fold(0.0f64, |a, &b| a.max(b));
        let flux: Vec<f64> = (0..n).map(|j| u[j] * (wx[j] + d * ux[j])).collect();
        let mut fh = to_complex(&flux);
        fwd.process(&mut fh);
        let mut next = vec![Complex::new(0.0, 0.0); n];
        for j in 0..n {
            let k2 = wave[j] * wave[j];
            let ik = if j == nyq { Complex::new(0.0, 0.0) } else { Complex::new(0.0, wave[j]) };
            let explicit = ik * fh[j] + uh[j] * (alpha * k2);
            next[j] = (uh[j] + explicit * dt) / (1.0 + dt * (eps + alpha) * k2);
        }
        u = back(next);
        let drift = (u.iter().sum::<f64>() * h - mass0).abs();
        traj.mass_drift = traj.mass_drift.max(drift);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { t: step as f64 * dt, reason: "non-finite density".into(), last_state: u });
        }
        if record_every > 0 && (step % record_every == 0 || step == steps) {
            traj.times.push(step as f64 * dt);
            traj.profiles.push(u.clone());
        } else if step == steps {
            traj.times.push(step as f64 * dt);
            traj.profiles.push(u.clone());
        }
    }
    Ok(traj)
}

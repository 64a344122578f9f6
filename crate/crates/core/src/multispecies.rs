//! Several species interacting through blocks `V_ij = a_ij δ - b_ij cos x`, with
//! optional diffusion `ε`:
//! `u_i,t = ε u_i,xx + (u_i Φ_i,x)_x`, `Φ_i = Σ_j V_ij * u_j`.
//!
//! Even steady states carry zero flux, so on the support of `u_i` they satisfy
//! `ε log u_i + Φ_i = k_i`. The continuation works with that form in `log u_i` on
//! the half grid, which fixes the translation gauge.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::continuation::{pseudo_arclength, Branch, ContinuationProblem, PalcSettings};
use crate::error::{Error, Result};
use crate::kernels::MatrixKernelSpec;
use crate::quadrature::PeriodicGrid;

/// Densities of all species on the periodic grid `x_j = 2πj/n`.
#[derive(Debug, Clone, Serialize)]
pub struct SystemState {
    pub u: Vec<Vec<f64>>,
    /// Active parameter (`κ` for the two-species driver).
    pub param: f64,
    pub eps: f64,
}

impl SystemState {
    /// The mixed state `u_i ≡ 1`.
    pub fn mixed(species: usize, n: usize, param: f64, eps: f64) -> Self {
        Self { u: vec![vec![1.0; n]; species], param, eps }
    }

    pub fn n(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    fn validate(&self, p: usize) -> Result<()> {
        let n = self.n();
        if self.u.len() != p || n < 4 || n % 2 != 0 || self.u.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "state must hold {p} profiles on one even grid, got {} profiles",
                self.u.len()
            )));
        }
        Ok(())
    }
}

fn check_blocks(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    let p = a.nrows();
    if p == 0 || a.shape() != (p, p) || b.shape() != (p, p) {
        return Err(Error::InvalidArgument("a and b must be square of equal size".into()));
    }
    Ok(p)
}

/// `Φ_i = Σ_j a_ij u_j - b_ij (C_j cos x + S_j sin x)` with trapezoid moments.
fn potentials(u: &[Vec<f64>], a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = u[0].len();
    let h = 2.0 * PI / n as f64;
    let trig: Vec<(f64, f64)> = (0..n).map(|j| (j as f64 * h).sin_cos()).collect();
    let moments: Vec<(f64, f64)> = u
        .iter()
        .map(|v| {
            // the mean has no first harmonic; dropping it avoids rounding on flat states
            let mean = v.iter().sum::<f64>() / n as f64;
            let c = v.iter().zip(&trig).map(|(v, t)| (v - mean) * t.1).sum::<f64>() * h;
            let s = v.iter().zip(&trig).map(|(v, t)| (v - mean) * t.0).sum::<f64>() * h;
            (c, s)
        })
        .collect();
    (0..u.len())
        .map(|i| {
            (0..n)
                .map(|r| {
                    (0..u.len())
                        .map(|j| {
                            a[(i, j)] * u[j][r] - b[(i, j)] * (moments[j].0 * trig[r].1 + moments[j].1 * trig[r].0)
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Spectral derivative of order `k` of periodic grid data (Nyquist mode dropped for
/// odd orders).
fn spectral_derivative(v: &[f64], k: u32) -> Vec<f64> {
    let n = v.len();
    let mut planner = FftPlanner::new();
    // removing the mean keeps constants exact
    let mean = v.iter().sum::<f64>() / n as f64;
    let mut c: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut c);
    for (j, z) in c.iter_mut().enumerate() {
        let l = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        let factor = if j == n / 2 && k % 2 == 1 { Complex::new(0.0, 0.0) } else { Complex::new(0.0, l).powu(k) };
        *z *= factor;
    }
    planner.plan_fft_inverse(n).process(&mut c);
    c.iter().map(|z| z.re / n as f64).collect()
}

/// Strong steady residual `ε u_i'' + (u_i Φ_i')'` of every species, with spectral
/// derivatives. Meaningful for smooth profiles.
pub fn system_residual(s: &SystemState, a: &DMatrix<f64>, b: &DMatrix<f64>, eps: f64) -> Result<Vec<Vec<f64>>> {
    let p = check_blocks(a, b)?;
    s.validate(p)?;
    let phi = potentials(&s.u, a, b);
    Ok((0..p)
        .map(|i| {
            let dphi = spectral_derivative(&phi[i], 1);
            let flux: Vec<f64> = s.u[i].iter().zip(&dphi).map(|(u, d)| u * d).collect();
            let div = spectral_derivative(&flux, 1);
            let diff = spectral_derivative(&s.u[i], 2);
            div.iter().zip(&diff).map(|(f, d)| f + eps * d).collect()
        })
        .collect())
}

/// Residual of the integrated form `ε log u_i + Φ_i - k_i` on the support of `u_i`
/// (zero off the support), with `k_i` taken at the maximum of `u_i`. Needs no
/// derivatives, so it applies to profiles with kinks at the support edge.
pub fn potential_residual(s: &SystemState, a: &DMatrix<f64>, b: &DMatrix<f64>, eps: f64) -> Result<Vec<Vec<f64>>> {
    let p = check_blocks(a, b)?;
    s.validate(p)?;
    let phi = potentials(&s.u, a, b);
    Ok((0..p)
        .map(|i| {
            let g = |r: usize| {
                let u = s.u[i][r];
                if eps > 0.0 {
                    eps * u.ln() + phi[i][r]
                } else {
                    phi[i][r]
                }
            };
            let top = (0..s.n()).max_by(|&x, &y| s.u[i][x].total_cmp(&s.u[i][y])).unwrap_or(0);
            let k = g(top);
            (0..s.n()).map(|r| if s.u[i][r] > 0.0 { g(r) - k } else { 0.0 }).collect()
        })
        .collect())
}

/// Effective scalar kernel for the vacuum species after eliminating the others.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveKernel {
    /// `M̃(ℓ) = M₁₁ - M₁ₕ M_hh⁻¹ M_h1`, `ℓ = 0..=l_max`.
    pub multipliers: Vec<f64>,
    /// `-M_hh⁻¹ M_h1` per wavenumber: `û_h(ℓ) = B(ℓ) û₁(ℓ)` for `ℓ ≥ 1`.
    pub back_substitution: Vec<Vec<f64>>,
}

impl EffectiveKernel {
    /// Recover the other species from `u₁` on a periodic grid; each has mass `2π`.
    pub fn reconstruct(&self, u1: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = u1.len();
        let l_max = self.multipliers.len() - 1;
        if n / 2 > l_max {
            return Err(Error::OutOfRange { l: n / 2, l_max });
        }
        let mut planner = FftPlanner::new();
        let mut c: Vec<Complex<f64>> = u1.iter().map(|&x| Complex::new(x, 0.0)).collect();
        planner.plan_fft_forward(n).process(&mut c);
        let others = self.back_substitution[1].len();
        (0..others)
            .map(|q| {
                let mut d: Vec<Complex<f64>> = (0..n)
                    .map(|j| {
                        let l = if j <= n / 2 { j } else { n - j };
                        if l == 0 {
                            Complex::new(n as f64, 0.0)
                        } else {
                            c[j] * self.back_substitution[l][q]
                        }
                    })
                    .collect();
                planner.plan_fft_inverse(n).process(&mut d);
                Ok(d.iter().map(|z| z.re / n as f64).collect())
            })
            .collect()
    }
}

/// Eliminate the non-vacuum species `h = 2..P` from `Φ₁`: the `h` equations are
/// `V_h1 * u₁ + V_hh * u_h = const`, so per wavenumber `û_h = -M_hh⁻¹ M_h1 û₁` and
/// `M̃ = M₁₁ - M₁ₕ M_hh⁻¹ M_h1`.
pub fn reduce_nonvacuum_block(k: &MatrixKernelSpec, l_max: usize) -> Result<EffectiveKernel> {
    let p = k.size();
    if p < 2 {
        return Err(Error::InvalidArgument("reduction needs at least two species".into()));
    }
    let mut multipliers = Vec::with_capacity(l_max + 1);
    let mut back_substitution = Vec::with_capacity(l_max + 1);
    for l in 0..=l_max {
        let m = DMatrix::from_fn(p, p, |i, j| k.block(i, j).multiplier_unchecked(l));
        let mhh = m.view((1, 1), (p - 1, p - 1)).into_owned();
        let mh1 = m.view((1, 0), (p - 1, 1)).into_owned();
        let m1h = m.view((0, 1), (1, p - 1)).into_owned();
        let svd = mhh.clone().svd(false, false);
        if svd.singular_values.min() <= 1e-12 * svd.singular_values.max().max(1.0) {
            return Err(Error::Resonance(format!("V_hh multiplier is singular at ℓ = {l}")));
        }
        let x = mhh.lu().solve(&mh1).ok_or_else(|| Error::Resonance(format!("V_hh multiplier is singular at ℓ = {l}")))?;
        multipliers.push(m[(0, 0)] - (m1h * &x)[(0, 0)]);
        back_substitution.push(x.iter().map(|v| -v).collect());
    }
    Ok(EffectiveKernel { multipliers, back_substitution })
}

/// `b(κ)`: the template with every off-diagonal entry replaced by `κ`.
pub fn b_of_kappa(template: &DMatrix<f64>, kappa: f64) -> DMatrix<f64> {
    DMatrix::from_fn(template.nrows(), template.ncols(), |i, j| if i == j { template[(i, j)] } else { kappa })
}

/// Even steady states in the unknowns `(log u_i on [0, π], k_i)`, parameter `κ`.
pub struct KappaProblem {
    pub a: DMatrix<f64>,
    pub b_template: DMatrix<f64>,
    pub eps: f64,
    pub grid: PeriodicGrid,
    weights: Vec<f64>,
    cos: Vec<f64>,
}

impl KappaProblem {
    pub fn new(a: DMatrix<f64>, b_template: DMatrix<f64>, eps: f64, n: usize) -> Result<Self> {
        check_blocks(&a, &b_template)?;
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("continuation needs ε > 0, got {eps}")));
        }
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!("grid size must be even and ≥ 16, got {n}")));
        }
        let grid = PeriodicGrid::new(n);
        let weights = grid.half_weights();
        let cos = grid.half_nodes().iter().map(|x| x.cos()).collect();
        Ok(Self { a, b_template, eps, grid, weights, cos })
    }

    pub fn species(&self) -> usize {
        self.a.nrows()
    }

    fn m(&self) -> usize {
        self.grid.half_len()
    }

    pub fn len(&self) -> usize {
        self.species() * (self.m() + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The mixed state: `log u = 0`, `k_i = Σ_j a_ij`.
    pub fn mixed(&self) -> DVector<f64> {
        let (p, m) = (self.species(), self.m());
        let mut x = DVector::zeros(self.len());
        for i in 0..p {
            x[p * m + i] = self.a.row(i).sum();
        }
        x
    }

    fn densities(&self, x: &DVector<f64>) -> Vec<Vec<f64>> {
        let m = self.m();
        (0..self.species()).map(|i| (0..m).map(|r| x[i * m + r].exp()).collect()).collect()
    }

    fn cos_moment(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.weights).zip(&self.cos).map(|((u, w), c)| u * w * c).sum()
    }

    /// Full-grid state from the unknown vector.
    pub fn state(&self, x: &DVector<f64>, kappa: f64) -> SystemState {
        let u = self.densities(x).iter().map(|h| self.grid.extend_even(h)).collect();
        SystemState { u, param: kappa, eps: self.eps }
    }

    /// Cosine coefficients `C_i/π` of each species.
    pub fn amplitudes(&self, x: &DVector<f64>) -> Vec<f64> {
        self.densities(x).iter().map(|u| self.cos_moment(u) / PI).collect()
    }

    fn eval(&self, x: &DVector<f64>, kappa: f64, want_jacobian: bool) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let (p, m) = (self.species(), self.m());
        let u = self.densities(x);
        let c: Vec<f64> = u.iter().map(|v| self.cos_moment(v)).collect();
        let b = b_of_kappa(&self.b_template, kappa);
        let n = self.len();
        let mut r = DVector::zeros(n);
        let mut jx = if want_jacobian { DMatrix::zeros(n, n) } else { DMatrix::zeros(0, 0) };
        let mut jp = DVector::zeros(n);
        for i in 0..p {
            let k = x[p * m + i];
            for row in 0..m {
                let mut v = self.eps * x[i * m + row] - k;
                for j in 0..p {
                    v += self.a[(i, j)] * u[j][row] - b[(i, j)] * c[j] * self.cos[row];
                    if j != i {
                        jp[i * m + row] -= c[j] * self.cos[row];
                    }
                }
                r[i * m + row] = v;
            }
            r[p * m + i] = u[i].iter().zip(&self.weights).map(|(u, w)| u * w).sum::<f64>() - 2.0 * PI;
        }
        if want_jacobian {
            for i in 0..p {
                for row in 0..m {
                    let ri = i * m + row;
                    jx[(ri, ri)] += self.eps;
                    jx[(ri, p * m + i)] = -1.0;
                    for j in 0..p {
                        jx[(ri, j * m + row)] += self.a[(i, j)] * u[j][row];
                        let f = b[(i, j)] * self.cos[row];
                        for s in 0..m {
                            jx[(ri, j * m + s)] -= f * self.weights[s] * self.cos[s] * u[j][s];
                        }
                    }
                }
                for s in 0..m {
                    jx[(p * m + i, i * m + s)] = self.weights[s] * u[i][s];
                }
            }
        }
        (r, jx, jp)
    }

    /// Extended system with the amplitude condition `Σ_i e_i C_i/π = δ`, unknowns `(x, κ)`.
    fn switch_branch(&self, kappa0: f64, e0: &[f64], delta: f64) -> Result<(DVector<f64>, f64)> {
        let (p, m, n) = (self.species(), self.m(), self.len());
        let mut x = self.mixed();
        for i in 0..p {
            for row in 0..m {
                x[i * m + row] = (delta * e0[i] * self.cos[row]).ln_1p();
            }
        }
        let mut y = x.insert_row(n, kappa0);
        let mut history = Vec::new();
        for _ in 0..40 {
            let xs = y.rows(0, n).into_owned();
            let (r, jx, jp) = self.eval(&xs, y[n], true);
            let u = self.densities(&xs);
            let amp: f64 = (0..p).map(|i| e0[i] * self.cos_moment(&u[i]) / PI).sum();
            let full = r.insert_row(n, amp - delta);
            let rn = full.amax();
            history.push(rn);
            if rn <= 1e-11 {
                return Ok((xs, y[n]));
            }
            let mut a = DMatrix::zeros(n + 1, n + 1);
            a.view_mut((0, 0), (n, n)).copy_from(&jx);
            a.view_mut((0, n), (n, 1)).copy_from(&jp);
            for i in 0..p {
                for s in 0..m {
                    a[(n, i * m + s)] = e0[i] * self.weights[s] * self.cos[s] * u[i][s] / PI;
                }
            }
            let dy = a.lu().solve(&full).ok_or_else(|| Error::SingularMatrix("branch-switch system".into()))?;
            y -= dy;
        }
        Err(Error::NoConvergence { iterations: history.len(), history })
    }
}

impl ContinuationProblem for KappaProblem {
    fn residual(&self, x: &DVector<f64>, p: f64) -> Result<DVector<f64>> {
        Ok(self.eval(x, p, false).0)
    }

    fn jacobian(&self, x: &DVector<f64>, p: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let (_, jx, jp) = self.eval(x, p, true);
        Ok((jx, jp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BranchLabel {
    /// Joint clustering: all species in phase.
    #[serde(rename = "JC")]
    JointClustering,
    /// Segregation: species maxima separated by π.
    #[serde(rename = "S")]
    Segregation,
}

impl BranchLabel {
    pub fn short(&self) -> &'static str {
        match self {
            BranchLabel::JointClustering => "JC",
            BranchLabel::Segregation => "S",
        }
    }
}

/// Pitchfork of the mixed state found on the discretized system.
#[derive(Debug, Clone, Serialize)]
pub struct Bifurcation {
    pub kappa: f64,
    /// Critical direction (cosine coefficients per species), scaled to unit sup-norm
    /// with a positive first entry.
    pub e0: Vec<f64>,
    pub label: BranchLabel,
    /// Two smallest singular values of the Jacobian at the bifurcation.
    pub singular_values: [f64; 2],
}

fn jacobian_det_sign(problem: &KappaProblem, kappa: f64) -> f64 {
    let (jx, _) = problem.jacobian(&problem.mixed(), kappa).expect("analytic Jacobian");
    jx.lu().determinant().signum()
}

/// Bifurcations of the mixed state in `kappa_range`, located by sign changes of the
/// Jacobian determinant on `samples` points and refined by bisection.
pub fn detect_bifurcations(problem: &KappaProblem, kappa_range: (f64, f64), samples: usize) -> Result<Vec<Bifurcation>> {
    let (lo, hi) = kappa_range;
    if !(hi > lo) || samples < 2 {
        return Err(Error::InvalidArgument(format!("invalid κ range ({lo}, {hi})")));
    }
    let ks: Vec<f64> = (0..samples).map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64).collect();
    let signs: Vec<f64> = ks.iter().map(|&k| jacobian_det_sign(problem, k)).collect();
    let mut out = Vec::new();
    for w in 0..samples - 1 {
        if signs[w] * signs[w + 1] >= 0.0 {
            continue;
        }
        let (mut a, mut b) = (ks[w], ks[w + 1]);
        let sa = signs[w];
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if jacobian_det_sign(problem, mid) == sa {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-13 {
                break;
            }
        }
        let kappa = 0.5 * (a + b);
        let (jx, _) = problem.jacobian(&problem.mixed(), kappa)?;
        let svd = jx.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
        let null = v_t.row(idx[0]).transpose();
        let m = problem.m();
        // project each species' log-perturbation onto cos x
        let raw: Vec<f64> = (0..problem.species())
            .map(|i| (0..m).map(|s| problem.weights[s] * problem.cos[s] * null[i * m + s]).sum::<f64>() / PI)
            .collect();
        // largest entry has unit magnitude; species 1 is taken with a positive sign
        let big = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sign = if raw[0] < 0.0 { -1.0 } else { 1.0 };
        let e0: Vec<f64> = raw.iter().map(|v| sign * v / big).collect();
        let label = if e0.iter().all(|v| *v > 0.0) { BranchLabel::JointClustering } else { BranchLabel::Segregation };
        out.push(Bifurcation {
            kappa,
            e0,
            label,
            singular_values: [svd.singular_values[idx[0]], svd.singular_values[idx[1]]],
        });
    }
    Ok(out)
}

/// Richardson extrapolation to `ε = 0` of bifurcation points computed at two
/// viscosities, assuming an `O(ε)` shift.
pub fn extrapolate_bifurcations(
    a: &DMatrix<f64>,
    b_template: &DMatrix<f64>,
    kappa_range: (f64, f64),
    eps: (f64, f64),
    n: usize,
) -> Result<Vec<f64>> {
    let find = |e: f64| -> Result<Vec<f64>> {
        let problem = KappaProblem::new(a.clone(), b_template.clone(), e, n)?;
        Ok(detect_bifurcations(&problem, kappa_range, 400)?.iter().map(|b| b.kappa).collect())
    };
    let (k1, k2) = (find(eps.0)?, find(eps.1)?);
    if k1.len() != k2.len() {
        return Err(Error::Consistency(format!(
            "found {} bifurcations at ε = {} but {} at ε = {}",
            k1.len(),
            eps.0,
            k2.len(),
            eps.1
        )));
    }
    Ok(k1.iter().zip(&k2).map(|(a, b)| (eps.0 * b - eps.1 * a) / (eps.0 - eps.1)).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemPoint {
    pub kappa: f64,
    /// `‖u_i - 1‖∞` per species.
    pub amplitudes: Vec<f64>,
    pub minima: Vec<f64>,
    /// Profiles on `[0, π]`.
    pub profiles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemBranch {
    pub label: BranchLabel,
    pub bifurcation: Bifurcation,
    pub branch: Branch<SystemPoint>,
}

#[derive(Debug, Clone, Copy)]
pub struct SystemSettings {
    pub n: usize,
    /// Amplitude `Σ e_i C_i/π` of the first point off the mixed state.
    pub seed_amplitude: f64,
    pub palc: PalcSettings,
}

impl Default for SystemSettings {
    fn default() -> Self {
        Self {
            n: 128,
            seed_amplitude: 1e-2,
            palc: PalcSettings { step: 5e-3, max_step: 2e-2, max_points: 150, ..Default::default() },
        }
    }
}

fn system_point(problem: &KappaProblem, x: &DVector<f64>, kappa: f64) -> SystemPoint {
    let profiles = problem.densities(x);
    SystemPoint {
        kappa,
        amplitudes: profiles.iter().map(|u| u.iter().fold(0.0f64, |a, v| a.max((v - 1.0).abs()))).collect(),
        minima: profiles.iter().map(|u| u.iter().fold(f64::MAX, |a, &v| a.min(v))).collect(),
        profiles,
    }
}

/// Continue the branches bifurcating from the mixed state inside `kappa_range`.
/// Each branch starts at amplitude `seed_amplitude` along the critical direction
/// and follows by pseudo-arclength until `κ` leaves the range. Branches are
/// computed concurrently.
pub fn continue_kappa(
    a: &DMatrix<f64>,
    b_template: &DMatrix<f64>,
    kappa_range: (f64, f64),
    eps: f64,
    settings: SystemSettings,
) -> Result<Vec<SystemBranch>> {
    let problem = KappaProblem::new(a.clone(), b_template.clone(), eps, settings.n)?;
    let bifurcations = detect_bifurcations(&problem, kappa_range, 200)?;
    if bifurcations.is_empty() {
        return Err(Error::Hypothesis(format!("no bifurcation of the mixed state in κ ∈ {kappa_range:?}")));
    }
    bifurcations
        .into_par_iter()
        .map(|bif| {
            let (x1, k1) = problem.switch_branch(bif.kappa, &bif.e0, settings.seed_amplitude).map_err(|e| {
                Error::Consistency(format!(
                    "branch switch at κ = {:.6} failed ({e}); smallest singular values {:.3e}, {:.3e}",
                    bif.kappa, bif.singular_values[0], bif.singular_values[1]
                ))
            })?;
            let n = problem.len();
            let t0 = (&x1 - problem.mixed()).insert_row(n, k1 - bif.kappa);
            let palc = PalcSettings { param_range: kappa_range, ..settings.palc };
            let raw = pseudo_arclength(&problem, x1, k1, t0, palc)?;
            let branch = Branch {
                points: raw.points.iter().map(|pt| system_point(&problem, &pt.x, pt.p)).collect(),
                truncation: raw.truncation,
            };
            Ok(SystemBranch { label: bif.label, bifurcation: bif, branch })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_derivative_of_trig() {
        let n = 32;
        let v: Vec<f64> = (0..n).map(|j| (3.0 * 2.0 * PI * j as f64 / n as f64).sin()).collect();
        let d = spectral_derivative(&v, 2);
        for (j, d) in d.iter().enumerate() {
            assert!((d + 9.0 * v[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_jacobian_matches_differences() {
        let (a, b) = crate::stability::two_species_coefficients(1.0, 0.3);
        let problem = KappaProblem::new(a, b, 0.05, 16).unwrap();
        let m = problem.m();
        let mut x = problem.mixed();
        for s in 0..m {
            x[s] = 0.3 * problem.cos[s];
            x[m + s] = -0.1 * problem.cos[s] + 0.05 * (2.0 * problem.grid.x[s]).cos();
        }
        let (jx, jp) = problem.jacobian(&x, 0.4).unwrap();
        let h = 1e-6;
        for k in 0..problem.len() {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (problem.residual(&xp, 0.4).unwrap() - problem.residual(&xm, 0.4).unwrap()) / (2.0 * h);
            assert!((fd - jx.column(k)).amax() < 1e-7, "column {k}");
        }
        let fd = (problem.residual(&x, 0.4 + h).unwrap() - problem.residual(&x, 0.4 - h).unwrap()) / (2.0 * h);
        assert!((fd - jp).amax() < 1e-7);
    }
}

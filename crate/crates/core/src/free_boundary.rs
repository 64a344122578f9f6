//! Vacuum bubbles for general kernels through a rescaled free-boundary problem.
//!
//! A density supported on `[-L, L]` is written as `u(x) = v(πx/L)` with `v` on
//! `[-π, π]`, `v(±π) = 0`. For `V = d δ + W` the equilibrium condition becomes
//!
//! ```text
//! F_v = d v + ∫ W^L(z - ξ) v(ξ) dξ - ρ = 0,   W^L(s) = (L/π) W(Ls/π),
//! F_bc = v(π) = 0,   F_m = (L/2π²) ∫ v - 1 = 0,
//! ```
//!
//! solved by Newton on the grid together with `ρ`, `μ`, `L` and `A₁`, with
//! `A₀ = P̄₀v` as the continuation parameter.
//!
//! When the repulsion is the Green's function `G` of `1 - η²∂xx` (Bessel `β = 1`, or
//! the periodized exponential) and everything else is a cosine polynomial, the
//! first-kind equation is turned into a second-kind one by applying `1 - η²∂xx`:
//! `G` becomes a Dirac mass and `cos kx` picks up the factor `1 + η²k²`. The lost
//! information is one boundary condition, the original equation at `z = π`, which
//! replaces `v(π) = 0`: such equilibria jump to zero at the edge of the support.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::continuation::{newton, sup_norm, Branch, NewtonSettings};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec, LinearFamily};
use crate::rank_one::{weak_residual, WeakCheck};
use crate::quadrature::{gregory_weights, IntervalGrid, Projections, GREGORY_ORDER};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtendedState {
    /// Values on the closed grid over `[-π, π]`; the last entry is `v(π)`.
    pub v: Vec<f64>,
    pub rho: f64,
    pub mu: f64,
    pub l: f64,
    pub a1: f64,
    pub a0: f64,
}

impl ExtendedState {
    /// Unknowns `(v on [0, π], ρ, μ, L, A₁)`.
    fn pack(&self) -> DVector<f64> {
        let c = (self.v.len() - 1) / 2;
        let m = self.v.len() - c;
        let mut x = DVector::zeros(m + 4);
        x.rows_mut(0, m).copy_from_slice(&self.v[c..]);
        x[m] = self.rho;
        x[m + 1] = self.mu;
        x[m + 2] = self.l;
        x[m + 3] = self.a1;
        x
    }

    fn unpack(x: &DVector<f64>, a0: f64) -> Self {
        let m = x.len() - 4;
        let v = (0..2 * m - 1).map(|k| x[k.abs_diff(m - 1)]).collect();
        Self { v, rho: x[m], mu: x[m + 1], l: x[m + 2], a1: x[m + 3], a0 }
    }

    /// `v_h = v - A₀ - A₁ cos z`.
    pub fn harmonic_part(&self, grid: &IntervalGrid) -> Vec<f64> {
        self.v.iter().zip(&grid.z).map(|(v, z)| v - self.a0 - self.a1 * z.cos()).collect()
    }

    /// Density and its derivative at `x` in original coordinates, from local
    /// eight-point interpolation of `v`. Zero outside `[-L, L]`.
    pub fn density(&self, grid: &IntervalGrid, x: f64) -> (f64, f64) {
        if x.abs() > self.l {
            return (0.0, 0.0);
        }
        let s = PI / self.l;
        let (v, dv) = interpolate(&grid.z, &self.v, x * s);
        (v, dv * s)
    }
}

/// Lagrange interpolation of value and derivative on a uniform grid, using the
/// `m = 8` nodes nearest to `t`.
fn interpolate(z: &[f64], v: &[f64], t: f64) -> (f64, f64) {
    const M: usize = 8;
    let n = z.len();
    let h = z[1] - z[0];
    let pos = (t - z[0]) / h;
    let start = ((pos.round() as isize) - (M as isize) / 2).clamp(0, (n - M) as isize) as usize;
    let nodes = &z[start..start + M];
    let mut val = 0.0;
    let mut der = 0.0;
    for j in 0..M {
        let mut lj = 1.0;
        let mut dlj = 0.0;
        for k in 0..M {
            if k == j {
                continue;
            }
            let denom = nodes[j] - nodes[k];
            // product rule over the factors of l_j
            dlj = dlj * (t - nodes[k]) / denom + lj / denom;
            lj *= (t - nodes[k]) / denom;
        }
        val += lj * v[start + j];
        der += dlj * v[start + j];
    }
    (val, der)
}

/// Discretized `v ↦ d v + ∫ W^L(· - ξ) v(ξ) dξ` and its `L`-derivative, for the
/// grid rows `first_row..`.
#[derive(Debug, Clone)]
pub struct GridKernel {
    pub dirac: f64,
    pub first_row: usize,
    /// `K[i][j] = w_ij W^L(z_i - z_j)`.
    pub matrix: DMatrix<f64>,
    /// `∂_L K`.
    pub dl: DMatrix<f64>,
}

impl GridKernel {
    /// Values at the rows held by this operator.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(v);
        let y = &self.matrix * &x;
        y.iter().enumerate().map(|(i, y)| y + self.dirac * v[self.first_row + i]).collect()
    }
}

/// Quadrature rows: the grid weights, or for kernels with a kink at the origin,
/// row `i` integrates `[-π, z_i]` and `[z_i, π]` separately.
fn quadrature_rows(grid: &IntervalGrid, kinked: bool) -> Vec<Vec<f64>> {
    let n = grid.len();
    if !kinked {
        return vec![grid.w.clone(); n];
    }
    (0..n)
        .map(|i| {
            let mut w = vec![0.0; n];
            if i >= 1 {
                for (j, wj) in gregory_weights(i + 1, -PI, grid.z[i], GREGORY_ORDER).into_iter().enumerate() {
                    w[j] += wj;
                }
            }
            if i + 1 < n {
                for (j, wj) in gregory_weights(n - i, grid.z[i], PI, GREGORY_ORDER).into_iter().enumerate() {
                    w[i + j] += wj;
                }
            }
            w
        })
        .collect()
}

fn assemble(k: &KernelSpec, l: f64, grid: &IntervalGrid, rows: &[Vec<f64>], first_row: usize) -> GridKernel {
    let n = grid.len();
    let m = n - first_row;
    let s = l / PI;
    // column-major storage: fill column j from row weights rows[i][j]
    let cols: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|j| {
            (first_row..n)
                .map(|i| {
                    let x = s * (grid.z[i] - grid.z[j]);
                    let w = rows[i][j];
                    let (val, der) = k.value_and_derivative(x);
                    (w * s * val, w * (val + x * der) / PI)
                })
                .unzip()
        })
        .collect();
    let matrix = DMatrix::from_iterator(m, n, cols.iter().flat_map(|c| c.0.iter().copied()));
    let dl = DMatrix::from_iterator(m, n, cols.iter().flat_map(|c| c.1.iter().copied()));
    GridKernel { dirac: k.dirac_weight, first_row, matrix, dl }
}

/// Row `i` of the rescaled operator and of its `L`-derivative.
fn assemble_row(k: &KernelSpec, l: f64, grid: &IntervalGrid, weights: &[f64], i: usize) -> (Vec<f64>, Vec<f64>) {
    let s = l / PI;
    (0..grid.len())
        .map(|j| {
            let x = s * (grid.z[i] - grid.z[j]);
            let (val, der) = k.value_and_derivative(x);
            (weights[j] * s * val, weights[j] * (val + x * der) / PI)
        })
        .unzip()
}

/// `(η, amplitude)` of the single Green's-function term of `1 - η²∂xx` in `k`, when
/// all other terms are cosine polynomials.
fn resolvent_term(k: &KernelSpec) -> Option<(f64, f64)> {
    let mut found = None;
    for t in &k.terms {
        match t {
            KernelFamily::CosineSeries { .. } => {}
            KernelFamily::BesselSmoothed { eta, beta, amplitude } if *beta == 1.0 && found.is_none() => {
                found = Some((*eta, *amplitude))
            }
            KernelFamily::PeriodizedExponential { eta, amplitude } if found.is_none() => found = Some((*eta, *amplitude)),
            _ => return None,
        }
    }
    found
}

/// Cosine polynomial of `k` multiplied termwise by `1 + η²ℓ²`.
fn transformed_cosines(k: &KernelSpec, eta: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for t in &k.terms {
        if let KernelFamily::CosineSeries { coeffs } = t {
            if coeffs.len() > out.len() {
                out.resize(coeffs.len(), 0.0);
            }
            for (l, c) in coeffs.iter().enumerate() {
                out[l] += c * (1.0 + eta * eta * (l * l) as f64);
            }
        }
    }
    out
}

/// Rescaled convolution operator for `k` on an `n`-point grid.
pub fn rescaled_kernel(k: &KernelSpec, l: f64, grid: &IntervalGrid) -> Result<GridKernel> {
    if !(l > 0.0 && l <= PI) {
        return Err(Error::Domain(format!("support half-width L must lie in (0, π], got {l}")));
    }
    let rows = quadrature_rows(grid, kinked_terms(k));
    Ok(assemble(k, l, grid, &rows, 0))
}

/// Whether any smooth term has a kink at the origin.
fn kinked_terms(k: &KernelSpec) -> bool {
    KernelSpec::new(0.0, k.terms.clone(), k.l_max).map(|s| !s.smooth_at_origin()).unwrap_or(true)
}

/// Residual blocks of the free-boundary system.
#[derive(Debug, Clone, Serialize)]
pub struct Residual {
    pub f_v: Vec<f64>,
    pub f_bc: f64,
    pub f_m: f64,
    /// `P̄₀ F_v`, `P̄₁ F_v`, `P_h F_v`.
    pub f_v0: f64,
    pub f_v1: f64,
    pub f_vh: Vec<f64>,
    /// Mismatch between `(A₀, A₁)` and the projections of `v`.
    pub decomposition: (f64, f64),
}

impl Residual {
    pub fn sup_norm(&self) -> f64 {
        self.f_v
            .iter()
            .chain([self.f_bc, self.f_m, self.decomposition.0, self.decomposition.1].iter())
            .fold(0.0f64, |m, r| m.max(r.abs()))
    }
}

/// Which condition closes the system at `z = π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// `F_v` as written, with `v(π) = 0`.
    Direct,
    /// Second-kind equation after applying `1 - η²∂xx`, closed by the original `F_v(π) = 0`.
    Resolvent,
}

/// Free-boundary problem for the affine family `μ ↦ base + μ slope` on an `n`-point
/// grid (`n` is raised to the next odd number so that `z = 0` is a node). Newton
/// works with even `v`, i.e. with its values on `[0, π]`; in the full space the
/// translation mode `sin(Lz/π)` is nearly singular when `L ≈ π`.
#[derive(Debug, Clone)]
pub struct FreeBoundaryProblem {
    /// The family as given.
    pub family: LinearFamily,
    pub grid: IntervalGrid,
    pub formulation: Formulation,
    /// The family entering `F_v`: equal to `family` unless the resolvent form is used.
    effective: LinearFamily,
    projections: Projections,
    rows: Vec<Vec<f64>>,
}

impl FreeBoundaryProblem {
    pub fn new(family: LinearFamily, n: usize) -> Result<Self> {
        if n < 32 {
            return Err(Error::InvalidArgument(format!("grid needs at least 32 points, got {n}")));
        }
        family.base.validate()?;
        family.slope.validate()?;
        if family.slope.dirac_weight != 0.0 || !family.slope.smooth_at_origin() {
            return Err(Error::InvalidArgument("the μ-direction must be a smooth kernel".into()));
        }
        let grid = IntervalGrid::new(n | 1);
        let projections = Projections::new(&grid);
        let resolvent = if family.base.dirac_weight == 0.0 { resolvent_term(&family.base) } else { None };
        let slope_is_trig = family.slope.terms.iter().all(|t| matches!(t, KernelFamily::CosineSeries { .. }));
        let (formulation, effective) = match resolvent {
            Some((eta, amplitude)) if slope_is_trig => (
                Formulation::Resolvent,
                LinearFamily::new(
                    KernelSpec::dirac_cosine(amplitude, transformed_cosines(&family.base, eta)),
                    KernelSpec::dirac_cosine(0.0, transformed_cosines(&family.slope, eta)),
                ),
            ),
            _ => (Formulation::Direct, family.clone()),
        };
        let rows = quadrature_rows(&grid, kinked_terms(&effective.base));
        Ok(Self { family, grid, formulation, effective, projections, rows })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Edge of the vertical branch: `v = 1 + cos z`, `L = π`, `A₀ = A₁ = 1`, with
    /// `μ` where the first multiplier vanishes and `ρ` the mean multiplier.
    pub fn base_state(&self) -> Result<ExtendedState> {
        let m_slope = self.family.slope.multiplier(1)?;
        if m_slope == 0.0 {
            return Err(Error::InvalidArgument("μ does not move the first multiplier".into()));
        }
        let mu = -self.family.base.multiplier(1)? / m_slope;
        let rho = self.family.at(mu).multiplier(0)?;
        Ok(ExtendedState {
            v: self.grid.z.iter().map(|z| 1.0 + z.cos()).collect(),
            rho,
            mu,
            l: PI,
            a1: 1.0,
            a0: 1.0,
        })
    }

    fn center(&self) -> usize {
        (self.len() - 1) / 2
    }

    fn kernels(&self, l: f64, first_row: usize) -> Result<(GridKernel, GridKernel)> {
        if !(l > 0.0 && l <= PI) {
            return Err(Error::Domain(format!("support half-width L must lie in (0, π], got {l}")));
        }
        Ok((
            assemble(&self.effective.base, l, &self.grid, &self.rows, first_row),
            assemble(&self.effective.slope, l, &self.grid, &self.rows, first_row),
        ))
    }

    pub fn assemble_residual(&self, s: &ExtendedState) -> Result<Residual> {
        let (kb, ks) = self.kernels(s.l, 0)?;
        Ok(self.residual_with(s, &kb, &ks))
    }

    fn residual_with(&self, s: &ExtendedState, kb: &GridKernel, ks: &GridKernel) -> Residual {
        let n = self.len();
        let vb = kb.apply(&s.v);
        let vs = ks.apply(&s.v);
        let rows: Vec<f64> = vb.iter().zip(&vs).map(|(b, c)| b + s.mu * c - s.rho).collect();
        // partial operators hold the rows z ≥ 0; F_v is even for even v
        let f_v: Vec<f64> = if kb.first_row == 0 {
            rows
        } else {
            (0..n).map(|k| rows[k.abs_diff(kb.first_row)]).collect()
        };
        let (f_v0, f_v1) = self.projections.coefficients(&f_v);
        let f_vh = self.projections.ph(&f_v);
        let (p0, p1) = self.projections.coefficients(&s.v);
        Residual {
            f_bc: self.boundary_row(s.l).map_or(s.v[n - 1], |b| b.residual(s)),
            f_m: s.l / (2.0 * PI * PI) * self.grid.integrate(&s.v) - 1.0,
            f_v,
            f_v0,
            f_v1,
            f_vh,
            decomposition: (p0 - s.a0, p1 - s.a1),
        }
    }

    fn system(&self, x: &DVector<f64>, a0: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let c = self.center();
        let m = self.len() - c;
        let s = ExtendedState::unpack(x, a0);
        let (kb, ks) = self.kernels(s.l, c)?;
        let r = self.residual_with(&s, &kb, &ks);
        let mut f = DVector::zeros(m + 4);
        f.rows_mut(0, m).copy_from_slice(&r.f_v[c..]);
        f[m] = r.f_bc;
        f[m + 1] = r.f_m;
        f[m + 2] = r.decomposition.0;
        f[m + 3] = r.decomposition.1;

        // ∂/∂v_half of a full-grid row: v_{c+j} and v_{c-j} both move with unknown j
        let fold = |row: &dyn Fn(usize) -> f64, j: usize| if j == 0 { row(c) } else { row(c + j) + row(c - j) };
        let mut jac = DMatrix::zeros(m + 4, m + 4);
        let d = kb.dirac + s.mu * ks.dirac;
        for i in 0..m {
            for j in 0..m {
                jac[(i, j)] = fold(&|k| kb.matrix[(i, k)] + s.mu * ks.matrix[(i, k)], j);
            }
            jac[(i, i)] += d;
        }
        let v = DVector::from_column_slice(&s.v);
        let dmu = ks.apply(&s.v);
        let dl = &kb.dl * &v + (&ks.dl * &v) * s.mu;
        for i in 0..m {
            jac[(i, m)] = -1.0;
            jac[(i, m + 1)] = dmu[i];
            jac[(i, m + 2)] = dl[i];
        }
        match self.boundary_row(s.l) {
            None => jac[(m, m - 1)] = 1.0,
            Some(b) => {
                for j in 0..m {
                    jac[(m, j)] = fold(&|k| b.base[k] + s.mu * b.slope[k], j);
                }
                jac[(m, m)] = -1.0;
                jac[(m, m + 1)] = b.slope.iter().zip(&s.v).map(|(a, v)| a * v).sum();
                jac[(m, m + 2)] =
                    b.base_dl.iter().zip(&b.slope_dl).zip(&s.v).map(|((a, c), v)| (a + s.mu * c) * v).sum();
            }
        }
        let (r0, r1) = self.projections.functionals();
        let w = &self.grid.w;
        for j in 0..m {
            jac[(m + 1, j)] = s.l / (2.0 * PI * PI) * fold(&|k| w[k], j);
            jac[(m + 2, j)] = fold(&|k| r0[k], j);
            jac[(m + 3, j)] = fold(&|k| r1[k], j);
        }
        jac[(m + 1, m + 2)] = self.grid.integrate(&s.v) / (2.0 * PI * PI);
        jac[(m + 3, m + 3)] = -1.0;
        Ok((f, jac))
    }

    /// The original first-kind equation at `z = π`, for the resolvent formulation.
    fn boundary_row(&self, l: f64) -> Option<BoundaryRow> {
        if self.formulation != Formulation::Resolvent {
            return None;
        }
        // the kink of the Green's function sits at the endpoint, so plain weights suffice
        let i = self.len() - 1;
        let (base, base_dl) = assemble_row(&self.family.base, l, &self.grid, &self.grid.w, i);
        let (slope, slope_dl) = assemble_row(&self.family.slope, l, &self.grid, &self.grid.w, i);
        Some(BoundaryRow { base, slope, base_dl, slope_dl })
    }

    /// `∂F_v/∂L` at `s`.
    pub fn l_derivative_column(&self, s: &ExtendedState) -> Result<Vec<f64>> {
        let (kb, ks) = self.kernels(s.l, 0)?;
        let v = DVector::from_column_slice(&s.v);
        Ok((&kb.dl * &v + (&ks.dl * &v) * s.mu).iter().copied().collect())
    }

    /// `P_h ∂F_v/∂L`, the `L`-entry of the linearization in the `X_h` row. At the base
    /// point of `δ - (1/π + μ) cos` it is `(cos z + 2z sin z - 2)/2π`.
    pub fn g_column(&self, s: &ExtendedState) -> Result<Vec<f64>> {
        Ok(self.projections.ph(&self.l_derivative_column(s)?))
    }

    /// Pointwise weak-form check of `s` against the original kernel.
    pub fn weak_check(&self, s: &ExtendedState, n_eval: usize) -> WeakCheck {
        weak_residual(&self.family.at(s.mu), s.l, |x| s.density(&self.grid, x), n_eval, 40)
    }

    /// Newton solve at fixed `A₀ = guess.a0`.
    pub fn solve(&self, guess: &ExtendedState, settings: NewtonSettings) -> Result<ExtendedState> {
        let a0 = guess.a0;
        let out = newton(guess.pack(), settings, |x| self.system(x, a0))?;
        Ok(ExtendedState::unpack(&out.x, a0))
    }

    /// Condition estimate of the Newton matrix (ratio of extreme singular values).
    pub fn jacobian_condition(&self, s: &ExtendedState) -> Result<f64> {
        let (_, j) = self.system(&s.pack(), s.a0)?;
        let sv = j.singular_values();
        Ok(sv.max() / sv.min())
    }
}

struct BoundaryRow {
    base: Vec<f64>,
    slope: Vec<f64>,
    base_dl: Vec<f64>,
    slope_dl: Vec<f64>,
}

impl BoundaryRow {
    fn residual(&self, s: &ExtendedState) -> f64 {
        self.base.iter().zip(&self.slope).zip(&s.v).map(|((b, c), v)| (b + s.mu * c) * v).sum::<f64>() - s.rho
    }
}

/// Continue from the base point through increasing `A₀ ≥ 1` with secant prediction.
/// Non-convergence truncates the branch with a diagnostic.
pub fn newton_continue(problem: &FreeBoundaryProblem, a0_values: &[f64], settings: NewtonSettings) -> Result<Branch<ExtendedState>> {
    if a0_values.iter().any(|a| !(*a >= 1.0)) || a0_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("A₀ values must be ≥ 1 and increasing".into()));
    }
    let base = problem.base_state()?;
    let mut branch = Branch::new();
    let mut prev: Vec<ExtendedState> = vec![base];
    for &a0 in a0_values {
        let guess = match prev.as_slice() {
            [.., p, q] => {
                let t = (a0 - q.a0) / (q.a0 - p.a0);
                let x = q.pack() + (q.pack() - p.pack()) * t;
                let mut g = ExtendedState::unpack(&x, a0);
                g.l = g.l.min(PI);
                g
            }
            [q] => ExtendedState { a0, l: (PI / a0).min(q.l), ..q.clone() },
            [] => unreachable!(),
        };
        match problem.solve(&guess, settings) {
            Ok(s) => {
                prev.push(s.clone());
                branch.points.push(s);
            }
            Err(e) => {
                branch.truncation = Some(format!("stopped at A₀ = {a0}: {e}"));
                break;
            }
        }
    }
    Ok(branch)
}

/// Polynomial coefficients of the branch in `ν = A₀ - 1`.
#[derive(Debug, Clone, Serialize)]
pub struct Expansion {
    pub a1_1: f64,
    pub a1_2: f64,
    pub l_1: f64,
    pub l_2: f64,
    pub rho_1: f64,
    pub mu_1: f64,
    pub mu_2: f64,
    pub mu_3: f64,
    /// Linear coefficient of `v_h` at each grid node.
    pub v_h1: Vec<f64>,
}

/// Least-squares fit `y ≈ Σ_{k=0}^{deg} c_k ν^k`, returning `c`.
fn poly_fit(nu: &[f64], y: &[f64], deg: usize) -> Result<Vec<f64>> {
    let scale = nu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let a = DMatrix::from_fn(nu.len(), deg + 1, |i, k| (nu[i] / scale).powi(k as i32));
    let svd = a.svd(true, true);
    let c = svd
        .solve(&DVector::from_column_slice(y), 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("ill-posed fit: {e}")))?;
    Ok(c.iter().enumerate().map(|(k, c)| c / scale.powi(k as i32)).collect())
}

/// Fit the expansion coefficients from a branch with at least eight points in
/// `0 < ν ≤ 0.1` (a base point at `ν = 0` may also be included).
pub fn extract_expansion(problem: &FreeBoundaryProblem, branch: &Branch<ExtendedState>) -> Result<Expansion> {
    let pts: Vec<&ExtendedState> = branch.points.iter().filter(|p| p.a0 - 1.0 <= 0.1 + 1e-12).collect();
    if pts.iter().filter(|p| p.a0 > 1.0).count() < 8 {
        return Err(Error::InvalidArgument("need at least eight branch points with 0 < ν ≤ 0.1".into()));
    }
    let nu: Vec<f64> = pts.iter().map(|p| p.a0 - 1.0).collect();
    let deg = 5.min(nu.len() - 2);
    let field = |f: &dyn Fn(&ExtendedState) -> f64| poly_fit(&nu, &pts.iter().map(|p| f(p)).collect::<Vec<_>>(), deg);
    let a1 = field(&|p| p.a1)?;
    let l = field(&|p| p.l)?;
    let rho = field(&|p| p.rho)?;
    let mu = field(&|p| p.mu)?;
    let vh: Vec<Vec<f64>> = pts.iter().map(|p| p.harmonic_part(&problem.grid)).collect();
    let v_h1 = (0..problem.len())
        .map(|i| poly_fit(&nu, &vh.iter().map(|v| v[i]).collect::<Vec<_>>(), deg).map(|c| c[1]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Expansion {
        a1_1: a1[1],
        a1_2: a1[2],
        l_1: l[1],
        l_2: l[2],
        rho_1: rho[1],
        mu_1: mu[1],
        mu_2: mu[2],
        mu_3: mu[3],
        v_h1,
    })
}

/// Residual sup-norm of a state, for diagnostics.
pub fn residual_norm(problem: &FreeBoundaryProblem, s: &ExtendedState) -> Result<f64> {
    let (f, _) = problem.system(&s.pack(), s.a0)?;
    Ok(sup_norm(&f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine_problem(n: usize) -> FreeBoundaryProblem {
        FreeBoundaryProblem::new(LinearFamily::dirac_cosine_model(), n).unwrap()
    }

    #[test]
    fn identity_rescaling() {
        let grid = IntervalGrid::new(65);
        let k = KernelSpec::dirac_cosine(0.0, vec![0.0, 0.7]);
        let g = rescaled_kernel(&k, PI, &grid).unwrap();
        assert!((g.matrix[(3, 10)] - grid.w[10] * k.evaluate_smooth(grid.z[3] - grid.z[10])).abs() < 1e-15);
        assert!(matches!(rescaled_kernel(&k, 3.5, &grid), Err(Error::Domain(_))));
        assert!(matches!(rescaled_kernel(&k, 0.0, &grid), Err(Error::Domain(_))));
    }

    #[test]
    fn rescaled_cosine_convolution_of_one() {
        let grid = IntervalGrid::new(257);
        let k = KernelSpec::dirac_cosine(0.0, vec![0.0, 1.0]);
        for l in [0.5, 1.7, 3.0] {
            let g = rescaled_kernel(&k, l, &grid).unwrap();
            let out = g.apply(&vec![1.0; grid.len()]);
            let s = l / PI;
            for (z, o) in grid.z.iter().zip(&out) {
                // (L/π)∫cos(s(z-ξ))dξ = [sin(s(z+π)) - sin(s(z-π))]
                let exact = (s * (z + PI)).sin() - (s * (z - PI)).sin();
                assert!((o - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn interpolation_is_high_order() {
        let grid = IntervalGrid::new(257);
        let v: Vec<f64> = grid.z.iter().map(|z| (2.0 * z).sin() + z * z).collect();
        for t in [-3.1, -0.3337, 1.0, 3.13] {
            let (f, df) = interpolate(&grid.z, &v, t);
            assert!((f - ((2.0 * t).sin() + t * t)).abs() < 1e-11);
            assert!((df - (2.0 * (2.0 * t).cos() + 2.0 * t)).abs() < 1e-8);
        }
    }

    #[test]
    fn base_point_solves() {
        let p = cosine_problem(513);
        let s = p.base_state().unwrap();
        assert_eq!((s.mu, s.rho), (0.0, 1.0));
        let r = p.assemble_residual(&s).unwrap();
        assert!(r.sup_norm() < 1e-12, "{}", r.sup_norm());
        assert!(r.f_v0.abs() < 1e-12 && r.f_v1.abs() < 1e-12);
    }

    #[test]
    fn mass_residual_closed_form() {
        let p = cosine_problem(129);
        let mut s = p.base_state().unwrap();
        s.a0 = 1.25;
        s.l = PI / 1.25;
        s.v = p.grid.z.iter().map(|z| 1.25 + 0.3 * z.cos() + 0.1 * (2.0 * z).cos()).collect();
        let r = p.assemble_residual(&s).unwrap();
        assert!(r.f_m.abs() < 1e-13);
        assert!((r.f_bc - (1.25 - 0.3 + 0.1)).abs() < 1e-14);
    }

    #[test]
    fn g_column_at_base() {
        let p = cosine_problem(257);
        let s = p.base_state().unwrap();
        let full = p.l_derivative_column(&s).unwrap();
        // the mean part is the 1/π entry of the F_v⁰ row
        assert!((p.grid.mean(&full) - 1.0 / PI).abs() < 1e-12);
        let g = p.g_column(&s).unwrap();
        let err = p
            .grid
            .z
            .iter()
            .zip(&g)
            .map(|(z, g)| (g - (z.cos() + 2.0 * z * z.sin() - 2.0) / (2.0 * PI)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!((g[g.len() - 1] + 3.0 / (2.0 * PI)).abs() < 1e-8);
    }

    #[test]
    fn jacobian_matches_differences() {
        let p = FreeBoundaryProblem::new(LinearFamily::smoothed_model(0.5, 1.0), 41).unwrap();
        let mut s = p.base_state().unwrap();
        s.l = 2.9;
        s.mu += 0.01;
        s.v = p.grid.z.iter().map(|z| 1.1 + 0.9 * z.cos() + 0.05 * z * z).collect();
        let x = s.pack();
        let (_, j) = p.system(&x, s.a0).unwrap();
        for k in [0, 7, 20, 21, 22, 23, 24] {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (p.system(&xp, s.a0).unwrap().0 - p.system(&xm, s.a0).unwrap().0) / (2.0 * h);
            let err = (fd - j.column(k)).amax();
            assert!(err < 1e-7, "column {k}: {err}");
        }
    }
}

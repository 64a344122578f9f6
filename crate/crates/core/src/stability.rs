//! Linear stability of the uniform state and of particle crystals.
//!
//! For the continuum equation linearized at `u ≡ 1`, the Fourier mode `ℓ` grows at
//! rate `λ(ℓ) = -ℓ² M(ℓ)` (matrix-valued for several species). For crystals of
//! point particles the growth rate of the Bloch mode `σ` is a lattice sum of `V''`,
//! which Poisson summation turns into a sum over sampled Fourier transforms.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, LinePotential, MatrixKernelSpec};

/// Result of a critical-parameter search.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub l_star: usize,
    pub mu_star: f64,
    /// Kernel vector of `M(ℓ*)` at `μ*`, largest-magnitude component equal to `+1`.
    pub e0: Vec<f64>,
    /// Eigenvalues of `-ℓ² M(ℓ)` at `μ*`, ascending.
    pub growth_rates: BTreeMap<usize, Vec<f64>>,
}

/// Growth rate `-ℓ² M(ℓ)` of mode `ℓ` about `u ≡ 1`.
pub fn dispersion_scalar(k: &KernelSpec, l: usize) -> Result<f64> {
    let m = k.multiplier(l)?;
    if l == 0 {
        return Ok(0.0);
    }
    Ok(-((l * l) as f64) * m)
}

/// Eigenvalues (ascending) of `-ℓ² M(ℓ) - εℓ²` for a matrix kernel with diffusion `ε`.
pub fn dispersion_system(k: &MatrixKernelSpec, l: usize, eps: f64) -> Result<Vec<f64>> {
    let l2 = (l * l) as f64;
    let m = k.multiplier(l)? * (-l2) - DMatrix::identity(k.size(), k.size()) * (eps * l2);
    Ok(sorted_eigenvalues(m))
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// How a crystal lattice sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summation {
    /// Direct sum over lattice neighbours in real space.
    DirectSum,
    /// Sum over samples of the Fourier transform of `V''`.
    PoissonSum,
}

/// Growth rate of one crystal Bloch mode together with a bound on the neglected tail.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CrystalRate {
    pub lambda: f64,
    pub tail_bound: f64,
    pub terms: usize,
}

const MAX_LATTICE_TERMS: usize = 2_000_000;

/// `λ(σ) = Σ_{k≠0} V''(ρk)(cos σk - 1)` for the infinite line crystal of spacing `ρ`,
/// `V` the sum of `potential`. Dirac parts only act at `k = 0` and drop out.
pub fn crystal_dispersion(
    potential: &[LinePotential],
    spacing: f64,
    sigma: f64,
    mode: Summation,
    tol: f64,
) -> Result<CrystalRate> {
    if !(spacing > 0.0) || !(0.0..2.0 * PI).contains(&sigma) {
        return Err(Error::InvalidArgument(format!(
            "need spacing > 0 and 0 ≤ σ < 2π, got spacing = {spacing}, σ = {sigma}"
        )));
    }
    match mode {
        Summation::DirectSum => {
            let v2 = |x: f64| potential.iter().map(|p| p.second_derivative(x)).sum::<f64>();
            let env = |x: f64| potential.iter().map(|p| p.second_derivative_envelope(x)).sum::<f64>();
            let mut lambda = 0.0;
            let mut k = 1;
            loop {
                let x = spacing * k as f64;
                lambda += 2.0 * v2(x) * ((sigma * k as f64).cos() - 1.0);
                // |cos - 1| ≤ 2, two signs of k; geometric tail estimate
                let e1 = env(spacing * (k + 1) as f64);
                let e2 = env(spacing * (k + 2) as f64);
                let ratio = if e1 > 0.0 { (e2 / e1).min(0.999) } else { 0.0 };
                let tail = 4.0 * e1 / (1.0 - ratio);
                if tail <= tol {
                    return Ok(CrystalRate { lambda, tail_bound: tail, terms: k });
                }
                if k >= MAX_LATTICE_TERMS {
                    return Err(Error::Accuracy { tail, tol });
                }
                k += 1;
            }
        }
        Summation::PoissonSum => {
            let w = |q: f64| -q * q * potential.iter().map(|p| p.cosine_transform(q)).sum::<f64>();
            let dq = 2.0 * PI / spacing;
            let s = sigma / spacing;
            let mut lambda = w(s) - w(0.0);
            let mut j = 1usize;
            loop {
                let q = dq * j as f64;
                let term = w(q + s) + w(-q + s) - 2.0 * w(q);
                lambda += term;
                // symmetric pairs cancel to second order; the tail is bounded by
                // the last term times a geometric/power factor
                if j >= 8 && term.abs() * j as f64 <= tol * spacing {
                    return Ok(CrystalRate { lambda: lambda / spacing, tail_bound: term.abs() * j as f64 / spacing, terms: j });
                }
                if j >= MAX_LATTICE_TERMS {
                    return Err(Error::Accuracy { tail: term.abs() * j as f64 / spacing, tol });
                }
                j += 1;
            }
        }
    }
}

/// Growth rate of mode `m` for `n` equally spaced particles on the circle with the
/// periodic kernel `k`: `Σ_{j=1}^{n-1} V''(2πj/n)(cos(2πmj/n) - 1)`.
///
/// The Poisson form is `(n/2π) Σ_{ℓ ≡ m (n)} Ŵ(ℓ) - (n/2π) Σ_{ℓ ≡ 0 (n)} Ŵ(ℓ)` with
/// `Ŵ(ℓ) = -ℓ² M(ℓ)` of the smooth part, summed while `|ℓ| ≤ ell_cut`.
pub fn ring_dispersion(k: &KernelSpec, n: usize, m: usize, mode: Summation, ell_cut: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("ring needs at least two particles".into()));
    }
    let h = 2.0 * PI / n as f64;
    match mode {
        Summation::DirectSum => Ok((1..n)
            .map(|j| k.second_derivative(h * j as f64) * ((h * (m * j) as f64).cos() - 1.0))
            .sum()),
        Summation::PoissonSum => {
            let w = |l: i64| -((l * l) as f64) * k.smooth_multiplier(l.unsigned_abs() as usize);
            let (n, m) = (n as i64, (m % n) as i64);
            let mut total = w(m) - w(0);
            let mut j = 1i64;
            while j * n <= ell_cut as i64 {
                total += w(m + j * n) + w(m - j * n) - 2.0 * w(j * n);
                j += 1;
            }
            Ok(total * n as f64 / (2.0 * PI))
        }
    }
}

fn det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

fn eigen_scale(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300)
}

/// Normalize so that the largest-magnitude component is `+1`; ties are rejected.
pub fn normalize_e0(v: &[f64]) -> Result<Vec<f64>> {
    let (imax, vmax) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .ok_or_else(|| Error::InvalidArgument("empty vector".into()))?;
    for (i, x) in v.iter().enumerate() {
        if i != imax && (x.abs() - vmax.abs()).abs() <= 1e-9 * vmax.abs() {
            return Err(Error::Hypothesis(format!(
                "kernel vector components {imax} and {i} have equal magnitude; the vacuum species is not determined"
            )));
        }
    }
    Ok(v.iter().map(|x| x / vmax).collect())
}

/// Unit null vector of a symmetric matrix, with the smallest and second-smallest
/// eigenvalue magnitudes.
fn null_vector(m: &DMatrix<f64>) -> (Vec<f64>, f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs()));
    let v = eig.eigenvectors.column(idx[0]).iter().copied().collect();
    let second = idx.get(1).map(|&i| eig.eigenvalues[i].abs()).unwrap_or(f64::INFINITY);
    (v, eig.eigenvalues[idx[0]].abs(), second)
}

/// Locate the parameter where `M(ℓ; μ)` first becomes singular inside `bracket`.
///
/// All wavenumbers `1..=l_max` are scanned; exactly one may change the sign of
/// `det M(ℓ; μ)` across the bracket. `ℓ = 0` is the mass mode and is skipped.
pub fn critical_parameter<F>(family: F, bracket: (f64, f64)) -> Result<StabilityReport>
where
    F: Fn(f64) -> Result<MatrixKernelSpec>,
{
    let (lo, hi) = bracket;
    let k_lo = family(lo)?;
    let k_hi = family(hi)?;
    let l_max = k_lo.l_max().min(k_hi.l_max());
    let mut crossing = Vec::new();
    for l in 1..=l_max {
        let d_lo = det(&k_lo.multiplier(l)?);
        let d_hi = det(&k_hi.multiplier(l)?);
        if d_lo == 0.0 || d_hi == 0.0 || d_lo.signum() != d_hi.signum() {
            crossing.push(l);
        }
    }
    let l_star = match crossing.as_slice() {
        [] => return Err(Error::Bracket { lo, hi }),
        [l] => *l,
        [first, rest @ ..] => {
            return Err(Error::Hypothesis(format!(
                "M(ℓ) becomes singular at ℓ = {first} and also at ℓ = {:?} within the bracket",
                rest
            )))
        }
    };
    let g = |mu: f64| -> Result<f64> { Ok(det(&family(mu)?.multiplier(l_star)?)) };
    let (mut a, mut b) = (lo, hi);
    let mut ga = g(a)?;
    if ga == 0.0 {
        b = a;
    }
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        let c = 0.5 * (a + b);
        let gc = g(c)?;
        if gc == 0.0 {
            a = c;
            b = c;
            break;
        }
        if gc.signum() == ga.signum() {
            a = c;
            ga = gc;
        } else {
            b = c;
        }
    }
    let mu_star = 0.5 * (a + b);
    let k_star = family(mu_star)?;
    let m_star = k_star.multiplier(l_star)?;
    let (v, smallest, second) = null_vector(&m_star);
    let scale = eigen_scale(&k_lo.multiplier(l_star)?).max(eigen_scale(&k_hi.multiplier(l_star)?));
    if second <= 1e-8 * scale {
        return Err(Error::Hypothesis(format!("kernel of M({l_star}) at μ* is not one-dimensional")));
    }
    debug_assert!(smallest <= 1e-6 * scale);
    for l in 1..=l_max {
        if l == l_star {
            continue;
        }
        let (_, s, _) = null_vector(&k_star.multiplier(l)?);
        if s <= 1e-10 * scale {
            return Err(Error::Hypothesis(format!("M(ℓ) is singular at ℓ = {l} ≠ ℓ* = {l_star}")));
        }
    }
    let e0 = normalize_e0(&v)?;
    let mut growth_rates = BTreeMap::new();
    for l in 0..=l_max {
        growth_rates.insert(l, dispersion_system(&k_star, l, 0.0)?);
    }
    Ok(StabilityReport { l_star, mu_star, e0, growth_rates })
}

/// Instability type of a two-species Dirac + cosine interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Instability {
    JointClustering,
    Segregation,
    Stable,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub kind: Instability,
    /// Eigenvector of the smallest eigenvalue of `a - πb`.
    pub e0: Vec<f64>,
    pub min_eigenvalue: f64,
}

/// Classify blocks `a_pq δ - b_pq cos x` by the `ℓ = 1` multiplier `a - πb`.
pub fn classify_two_species(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Classification> {
    if a.shape() != (2, 2) || b.shape() != (2, 2) {
        return Err(Error::InvalidArgument("two-species classification needs 2×2 matrices".into()));
    }
    if a.iter().any(|x| *x <= 0.0) {
        return Err(Error::InvalidArgument("Dirac weights a_ij must be positive".into()));
    }
    if a[(0, 0)] * a[(1, 1)] <= a[(0, 1)] * a[(1, 0)] {
        return Err(Error::InvalidArgument(format!(
            "a violates strict ellipticity: a11 a22 = {} ≤ a12 a21 = {}",
            a[(0, 0)] * a[(1, 1)],
            a[(0, 1)] * a[(1, 0)]
        )));
    }
    let s = a - b * PI;
    let eig = SymmetricEigen::new(s);
    let i = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    let lambda = eig.eigenvalues[i];
    let e0 = normalize_e0(&eig.eigenvectors.column(i).iter().copied().collect::<Vec<_>>())?;
    let kind = if lambda > 0.0 {
        Instability::Stable
    } else if e0[0] * e0[1] > 0.0 {
        Instability::JointClustering
    } else {
        Instability::Segregation
    };
    Ok(Classification { kind, e0, min_eigenvalue: lambda })
}

/// Two-species coefficients with Dirac weights `[[0.8, a12], [a12, 1]]` and cosine
/// amplitudes `[[-0.3, κ], [κ, -0.3]]`.
pub fn two_species_coefficients(a12: f64, kappa: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[0.8, a12, a12, 1.0]),
        DMatrix::from_row_slice(2, 2, &[-0.3, kappa, kappa, -0.3]),
    )
}

/// The two roots in `κ` of `det(a - πb(κ)) = 0` for [`two_species_coefficients`].
pub fn two_species_critical_kappas(a12: f64) -> (f64, f64) {
    let r = ((0.8 + 0.3 * PI) * (1.0 + 0.3 * PI)).sqrt();
    ((a12 + r) / PI, (a12 - r) / PI)
}

fn critical_wavenumber(k: &MatrixKernelSpec) -> Result<usize> {
    let mut best = (1, f64::INFINITY);
    for l in 1..=k.l_max() {
        let (_, s, _) = null_vector(&k.multiplier(l)?);
        if s < best.1 {
            best = (l, s);
        }
    }
    Ok(best.0)
}

/// `d/dμ` of `M₁₁ - M₁ₕ M_hh⁻¹ M_h1` at `(ℓ*, μ*)`, by Richardson-extrapolated
/// centred differences with base step `1e-6`. For a single species this is
/// `d/dμ M(ℓ*; μ)`.
pub fn crossing_rate<F>(family: F, mu_star: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<MatrixKernelSpec>,
{
    let l = critical_wavenumber(&family(mu_star)?)?;
    let schur = |mu: f64| -> Result<f64> {
        let m = family(mu)?.multiplier(l)?;
        let p = m.nrows();
        if p == 1 {
            return Ok(m[(0, 0)]);
        }
        let mhh = m.view((1, 1), (p - 1, p - 1)).into_owned();
        let m1h = m.view((0, 1), (1, p - 1)).into_owned();
        let mh1 = m.view((1, 0), (p - 1, 1)).into_owned();
        let inv = mhh.clone().try_inverse().filter(|_| null_vector(&mhh).1 > 1e-10 * eigen_scale(&mhh)).ok_or_else(|| {
            Error::Hypothesis(format!("the non-critical block of M({l}) is singular at μ = {mu}"))
        })?;
        Ok(m[(0, 0)] - (m1h * inv * mh1)[(0, 0)])
    };
    let d = |h: f64| -> Result<f64> { Ok((schur(mu_star + h)? - schur(mu_star - h)?) / (2.0 * h)) };
    let h = 1e-6 * mu_star.abs().max(1.0);
    let (d1, d2) = (d(h)?, d(0.5 * h)?);
    Ok((4.0 * d2 - d1) / 3.0)
}

//! Vacuum bubbles for the rank-one potential `δ - (1/π + μ) cos x`.
//!
//! Convolution with the cosine maps every even density into `span{cos x}`, so an
//! equilibrium supported on `[-L, L]` is `(A₀ + A₁ cos x)₊` and the steady problem
//! reduces to three closed-form equations in `(A₀, A₁, L)`; the Lagrange multiplier
//! is `ρ = A₀`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::Serialize;

use crate::continuation::Branch;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::quadrature::gregory_weights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BubbleSolution {
    pub a0: f64,
    pub a1: f64,
    pub l: f64,
    pub rho: f64,
    pub mu: f64,
}

impl BubbleSolution {
    /// `(A₀ + A₁ cos x)₊` for `|x| ≤ π`.
    pub fn profile(&self, x: f64) -> f64 {
        if x.abs() > self.l {
            0.0
        } else {
            (self.a0 + self.a1 * x.cos()).max(0.0)
        }
    }

    /// Largest of the three closed-form residuals.
    pub fn residual_norm(&self) -> f64 {
        residuals(self.a0, self.a1, self.l, self.mu).iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Minimum of `A₀ + A₁ cos x` over `n` interior points of `(-L, L)`.
    pub fn min_inside(&self, n: usize) -> f64 {
        (1..n)
            .map(|i| {
                let x = -self.l + 2.0 * self.l * i as f64 / n as f64;
                self.a0 + self.a1 * x.cos()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(r_cos, r_mass, r_bc)`.
pub fn residuals(a0: f64, a1: f64, l: f64, mu: f64) -> [f64; 3] {
    let (s, c) = l.sin_cos();
    [
        a1 - (1.0 / PI + mu) * (2.0 * a0 * s + a1 * (l + s * c)),
        (a0 * l + a1 * s) / PI - 1.0,
        a0 + a1 * c,
    ]
}

fn residual_jacobian(a0: f64, a1: f64, l: f64, mu: f64) -> Matrix3<f64> {
    let (s, c) = l.sin_cos();
    let k = 1.0 / PI + mu;
    Matrix3::new(
        -2.0 * k * s,
        1.0 - k * (l + s * c),
        -k * (2.0 * a0 * c + a1 * (1.0 + c * c - s * s)),
        l / PI,
        s / PI,
        (a0 + a1 * c) / PI,
        1.0,
        c,
        -a1 * s,
    )
}

/// `(A₀, A₁)` solving the mass and boundary equations for a given `L`.
pub fn amplitudes_for_support(l: f64) -> (f64, f64) {
    let (s, c) = l.sin_cos();
    let a1 = PI / (s - l * c);
    (-a1 * c, a1)
}

#[derive(Debug, Clone, Copy)]
pub struct BubbleSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BubbleSettings {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 50 }
    }
}

/// Newton solve of the three residuals from `guess = (A₀, A₁, L)`.
pub fn solve_bubble(mu: f64, guess: (f64, f64, f64), settings: BubbleSettings) -> Result<BubbleSolution> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("vacuum bubbles need μ > 0, got {mu}")));
    }
    let (a0, a1, l) = guess;
    if !(l > 0.0 && l < PI) {
        return Err(Error::Domain(format!("initial support half-width must lie in (0, π), got {l}")));
    }
    let mut x = Vector3::new(a0, a1, l);
    let mut history = Vec::new();
    for _ in 0..settings.max_iter {
        let r = Vector3::from(residuals(x[0], x[1], x[2], mu));
        let rn = r.amax();
        history.push(rn);
        if rn <= settings.tol {
            if x[1] <= 0.0 || (x[0] / x[1]).abs() >= 1.0 {
                return Err(Error::Domain(format!(
                    "|A₀/A₁| = {} ≥ 1: no vacuum, the solution lies on the linear branch",
                    (x[0] / x[1]).abs()
                )));
            }
            return Ok(BubbleSolution { a0: x[0], a1: x[1], l: x[2], rho: x[0], mu });
        }
        let j = residual_jacobian(x[0], x[1], x[2], mu);
        let dx = j
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::SingularMatrix(format!("bubble Jacobian singular at L = {}", x[2])))?;
        let mut t = 1.0;
        loop {
            let trial = x - dx * t;
            if trial[2] > 0.0 && trial[2] <= PI {
                x = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return Err(Error::Domain(format!(
                    "Newton step drives L out of (0, π] from L = {}; no vacuum at μ = {mu}",
                    x[2]
                )));
            }
        }
    }
    Err(Error::NoConvergence { iterations: history.len(), history })
}

/// Leading-order gap law `π - (3π²/2)^{1/3} μ^{1/3}`.
pub fn asymptotic_l(mu: f64) -> Result<f64> {
    if mu < 0.0 {
        return Err(Error::Domain(format!("the gap law needs μ ≥ 0, got {mu}")));
    }
    Ok(PI - gap_constant() * mu.cbrt())
}

/// `(3π²/2)^{1/3}`.
pub fn gap_constant() -> f64 {
    (1.5 * PI * PI).cbrt()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpansionCoefficients {
    /// Leading coefficient of `a₃` in `A₀ = 1 + a₃ z₁³`.
    pub a3: f64,
    /// Leading coefficient of `μ = c z₁³`.
    pub mu_coeff: f64,
}

/// Leading coefficients of the small-bubble expansion in the scaling
/// `A₀ = 1 + a₃ z₁³`, `A₁ = 1 + z₁² + z₁³`, `L = √2 z₁ + O(z₁³)` measured from `π`.
pub fn expansion_coefficients() -> ExpansionCoefficients {
    let r2 = 2f64.sqrt();
    ExpansionCoefficients { a3: -4.0 * r2 / (6.0 * PI), mu_coeff: 4.0 * r2 / (PI * PI) }
}

/// Initial guess from the gap law and the mass/boundary equations.
fn seed(mu: f64) -> (f64, f64, f64) {
    let l = asymptotic_l(mu).map(|l| l.clamp(0.05, PI - 1e-6)).unwrap_or(PI - 1e-6);
    let l = if l <= 0.05 { (1.5 / mu).cbrt().min(PI - 1e-6) } else { l };
    let (a0, a1) = amplitudes_for_support(l);
    (a0, a1, l)
}

/// Natural-parameter continuation over sorted positive `mu_values`. Each point starts
/// from a secant prediction in `log μ` (or from the gap law for the first two).
pub fn sweep_branch(mu_values: &[f64], settings: BubbleSettings) -> Result<Branch<BubbleSolution>> {
    if mu_values.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::InvalidArgument("μ values must be positive".into()));
    }
    if mu_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("μ values must be strictly increasing".into()));
    }
    let mut branch: Branch<BubbleSolution> = Branch::new();
    for &mu in mu_values {
        let guess = match branch.points.as_slice() {
            [.., p, q] => {
                let t = (mu.ln() - q.mu.ln()) / (q.mu.ln() - p.mu.ln());
                let l = (q.l + t * (q.l - p.l)).clamp(1e-3, PI - 1e-9);
                let (a0, a1) = amplitudes_for_support(l);
                (a0, a1, l)
            }
            _ => seed(mu),
        };
        match solve_bubble(mu, guess, settings).or_else(|_| solve_bubble(mu, seed(mu), settings)) {
            Ok(s) => branch.points.push(s),
            Err(e) => {
                branch.truncation = Some(format!("stopped at μ = {mu}: {e}"));
                break;
            }
        }
    }
    Ok(branch)
}

/// Power law `π - L ≈ c μ^p` fitted by least squares in log-log coordinates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapFit {
    pub c: f64,
    pub p: f64,
    pub points: usize,
}

/// Fit `π - L = c μ^p` to `(μ, L)` pairs; points with `μ ≤ 0` or `L ≥ π` are skipped.
pub fn fit_gap_law(points: &[(f64, f64)]) -> Result<GapFit> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|(mu, l)| *mu > 0.0 && *l < PI)
        .map(|(mu, l)| (mu.ln(), (PI - l).ln()))
        .collect();
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!("gap-law fit needs two usable points, got {}", data.len())));
    }
    let n = data.len() as f64;
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("gap-law fit needs distinct μ values".into()));
    }
    let p = data.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    Ok(GapFit { c: (my - p * mx).exp(), p, points: data.len() })
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Scalar problem obtained from a two-species (or `P`-species) Dirac + cosine system
/// `V_pq = a_pq δ - b_pq cos x` when only species 0 forms a vacuum.
#[derive(Debug, Clone, Serialize)]
pub struct ReducedSystem {
    /// `β = b₁₁ + π b₁ₕ (a_hh - π b_hh)⁻¹ b_h1`.
    pub beta: f64,
    pub a11: f64,
    /// Effective parameter of the scalar model `δ - (1/π + μ) cos x`: `β/a₁₁ - 1/π`.
    pub mu_eff: f64,
    /// `(a_hh - π b_hh)⁻¹ b_h1`: cosine amplitudes of the other species per unit
    /// cosine moment `∫cos·u₁` of species 0.
    pub back_substitution: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReducedBubble {
    /// Species 0 in units of its own Dirac weight: `u₁ = (A₀ + A₁ cos x)₊`.
    pub vacuum_species: BubbleSolution,
    /// `u_h = 1 + U_h cos x`.
    pub other_amplitudes: Vec<f64>,
}

pub fn reduce_two_species(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<ReducedSystem> {
    let p = a.nrows();
    if p < 2 || a.shape() != (p, p) || b.shape() != (p, p) {
        return Err(Error::InvalidArgument("a and b must be square of equal size ≥ 2".into()));
    }
    let off = (1..p).map(|j| a[(0, j)].abs().max(a[(j, 0)].abs())).fold(0.0, f64::max);
    if off > 0.0 {
        return Err(Error::UnsupportedAnsatz(format!(
            "a must be block-diagonal (a_1h = a_h1 = 0) for the (u⁰ + u¹cos x)₊ ansatz; largest coupling {off}"
        )));
    }
    let shh = a.view((1, 1), (p - 1, p - 1)) - b.view((1, 1), (p - 1, p - 1)) * PI;
    let bh1 = b.view((1, 0), (p - 1, 1)).into_owned();
    let b1h = b.view((0, 1), (1, p - 1)).into_owned();
    let lu = shh.clone().lu();
    let cond_ok = {
        let svd = shh.clone().svd(false, false);
        let smax = svd.singular_values.max();
        svd.singular_values.min() > 1e-12 * smax.max(1.0)
    };
    let back = lu
        .solve(&bh1)
        .filter(|_| cond_ok)
        .ok_or_else(|| Error::Resonance("a_hh - π b_hh is singular".into()))?;
    let a11 = a[(0, 0)];
    if !(a11 > 0.0) {
        return Err(Error::InvalidArgument("a₁₁ must be positive".into()));
    }
    let beta = b[(0, 0)] + PI * (b1h * &back)[(0, 0)];
    Ok(ReducedSystem { beta, a11, mu_eff: beta / a11 - 1.0 / PI, back_substitution: back.iter().copied().collect() })
}

impl ReducedSystem {
    /// Solve the scalar bubble problem and recover the other species.
    pub fn solve(&self, settings: BubbleSettings) -> Result<ReducedBubble> {
        let s = solve_bubble(self.mu_eff, seed(self.mu_eff), settings)?;
        // A₁ = (β/a₁₁) C₁ with C₁ = ∫cos·u₁
        let c1 = s.a1 * self.a11 / self.beta;
        Ok(ReducedBubble { vacuum_species: s, other_amplitudes: self.back_substitution.iter().map(|v| v * c1).collect() })
    }
}

/// Pointwise check of the weak equilibrium condition `u = 0` or `(V' * u)(x) = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeakCheck {
    /// Largest `|V' * u|` over evaluation points inside the support.
    pub max_on_support: f64,
    pub points_on_support: usize,
}

/// Evaluate `(V' * u)(x) = d u'(x) + ∫_{-L}^{L} W'(x - y) u(y) dy` on an `n_eval`-point
/// grid of `[-π, π)`, for a density supported on `[-L, L]`. `u(x)` returns the value and
/// derivative inside the support; `V = d δ + W`. Integrals are split at `y = x` so
/// that kernels with a kink at the origin are integrated accurately.
pub fn weak_residual<U>(kernel: &KernelSpec, l: f64, u: U, n_eval: usize, nodes_per_unit: usize) -> WeakCheck
where
    U: Fn(f64) -> (f64, f64),
{
    let d = kernel.dirac_weight;
    let integrate = |x: f64, a: f64, b: f64| -> f64 {
        if b - a <= 0.0 {
            return 0.0;
        }
        let n = (((b - a) * nodes_per_unit as f64).ceil() as usize).max(16) + 1;
        let w = gregory_weights(n, a, b, 7);
        let h = (b - a) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let y = if i + 1 == n { b } else { a + i as f64 * h };
                // one-sided derivative at the kink: y = a means y ≥ x, so x - y → 0⁻ (offset
                // large enough to survive wrapping into [-π, π))
                let arg = x - y;
                let arg = if arg == 0.0 { if y <= a { -1e-12 } else { 1e-12 } } else { arg };
                w[i] * kernel.derivative(arg) * u(y).0
            })
            .sum()
    };
    let mut max = 0.0f64;
    let mut count = 0;
    for i in 0..n_eval {
        let x = -PI + 2.0 * PI * i as f64 / n_eval as f64;
        if x.abs() >= l {
            continue;
        }
        let (_, du) = u(x);
        let conv = integrate(x, -l, x) + integrate(x, x, l);
        max = max.max((d * du + conv).abs());
        count += 1;
    }
    WeakCheck { max_on_support: max, points_on_support: count }
}

/// Vectorized residual helper for tests and the CLI: `[r_cos, r_mass, r_bc]` as a vector.
pub fn residual_vector(s: &BubbleSolution) -> DVector<f64> {
    DVector::from_row_slice(&residuals(s.a0, s.a1, s.l, s.mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gregory_weights;

    #[test]
    fn base_point_residuals() {
        assert_eq!(residuals(1.0, 1.0, PI, 0.0).map(|r| (r.abs() < 1e-15) as u8), [1, 1, 1]);
        let r = residuals(1.0, 1.0, PI, 0.3);
        assert!((r[0] + 0.3 * PI).abs() < 1e-14 && r[1].abs() < 1e-15 && r[2].abs() < 1e-15);
    }

    #[test]
    fn residuals_match_quadrature() {
        let (a0, a1, l, mu) = (0.3, 1.7, 2.2, 0.13);
        let n = 801;
        let w = gregory_weights(n, -l, l, 7);
        let y: Vec<f64> = (0..n).map(|i| -l + 2.0 * l * i as f64 / (n - 1) as f64).collect();
        let u: Vec<f64> = y.iter().map(|y| a0 + a1 * y.cos()).collect();
        let cos_int: f64 = w.iter().zip(&y).zip(&u).map(|((w, y), u)| w * y.cos() * u).sum();
        let mass: f64 = w.iter().zip(&u).map(|(w, u)| w * u).sum();
        let r = residuals(a0, a1, l, mu);
        assert!((r[0] - (a1 - (1.0 / PI + mu) * cos_int)).abs() < 1e-12);
        assert!((r[1] - (mass / (2.0 * PI) - 1.0)).abs() < 1e-12);
        assert!((r[2] - (a0 + a1 * l.cos())).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_differences() {
        let (a0, a1, l, mu) = (0.3, 1.7, 2.2, 0.13);
        let j = residual_jacobian(a0, a1, l, mu);
        let h = 1e-6;
        for (k, dir) in [(0, [h, 0.0, 0.0]), (1, [0.0, h, 0.0]), (2, [0.0, 0.0, h])] {
            let rp = residuals(a0 + dir[0], a1 + dir[1], l + dir[2], mu);
            let rm = residuals(a0 - dir[0], a1 - dir[1], l - dir[2], mu);
            for i in 0..3 {
                assert!(((rp[i] - rm[i]) / (2.0 * h) - j[(i, k)]).abs() < 1e-8);
            }
        }
    }

    /// `μ(L) = 1/(L - sin L cos L) - 1/π` from eliminating `A₀, A₁`.
    fn mu_of_l(l: f64) -> f64 {
        1.0 / (l - l.sin() * l.cos()) - 1.0 / PI
    }

    #[test]
    fn newton_matches_one_dimensional_reduction() {
        for l in [3.0, 2.5, 1.5, 0.7] {
            let mu = mu_of_l(l);
            let s = solve_bubble(mu, seed(mu), BubbleSettings::default()).unwrap();
            assert!((s.l - l).abs() < 1e-10, "L = {l}: {}", s.l);
            let (a0, a1) = amplitudes_for_support(l);
            assert!((s.a0 - a0).abs() < 1e-9 && (s.a1 - a1).abs() < 1e-9);
            assert_eq!(s.rho, s.a0);
            assert!(s.min_inside(1000) > 0.0);
        }
    }

    #[test]
    fn small_mu_gap_law() {
        let mu = 1e-3;
        let s = solve_bubble(mu, seed(mu), BubbleSettings::default()).unwrap();
        let correction = PI - s.l;
        assert!((correction - 0.24554).abs() / 0.24554 < 0.15);
        assert!((asymptotic_l(mu).unwrap() - 2.89605).abs() < 1e-5);
    }

    #[test]
    fn limit_towards_vertical_branch() {
        let mut prev = f64::INFINITY;
        for mu in [1e-5, 1e-6, 1e-8] {
            let s = solve_bubble(mu, seed(mu), BubbleSettings::default()).unwrap();
            let dist = (s.a0 - 1.0).abs().max((s.a1 - 1.0).abs()).max((s.l - PI).abs());
            assert!(dist < prev);
            prev = dist;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn large_mu_regime() {
        let s = solve_bubble(5.0, seed(5.0), BubbleSettings::default()).unwrap();
        assert!(s.a0 < 0.0 && s.a1 + s.a0 > 0.0 && s.l < 1.0);
        assert!((s.a0 + s.a1).abs() < 0.3 * s.a1);
    }

    #[test]
    fn negative_mu_is_rejected() {
        assert!(matches!(solve_bubble(-0.1, (1.0, 1.0, 3.0), BubbleSettings::default()), Err(Error::Domain(_))));
        assert!(matches!(asymptotic_l(-1.0), Err(Error::Domain(_))));
        assert_eq!(asymptotic_l(0.0).unwrap(), PI);
    }

    #[test]
    fn expansion_constants() {
        let e = expansion_coefficients();
        assert!((e.a3 + 0.30011).abs() < 1e-5);
        assert!((e.mu_coeff - 0.573159).abs() < 1e-6);
        // With L = π - √2 z₁ the printed μ coefficient does not reproduce the gap
        // constant: √2 (π²/(4√2))^{1/3} ≈ 1.70 against ≈ 2.455. A coefficient three
        // times smaller does.
        let printed = 2f64.sqrt() * (1.0 / e.mu_coeff).cbrt();
        assert!((printed - 1.702511).abs() < 1e-6);
        let consistent = 2f64.sqrt() * (3.0 / e.mu_coeff).cbrt();
        assert!((gap_constant() - consistent).abs() < 1e-14);
    }

    #[test]
    fn solver_fixes_the_cubic_coefficient() {
        // μ/z₁³ with z₁ = (π - L)/√2, against 4√2/(3π²)
        let mu = 1e-6;
        let s = solve_bubble(mu, seed(mu), BubbleSettings::default()).unwrap();
        let z = (PI - s.l) / 2f64.sqrt();
        let c = mu / z.powi(3);
        assert!((c - expansion_coefficients().mu_coeff / 3.0).abs() < 1e-2 * c);
        // A₀ - 1 ≈ a₃ z₁³
        assert!(((s.a0 - 1.0) / z.powi(3) - expansion_coefficients().a3).abs() < 2e-2);
    }

    #[test]
    fn decoupled_reduction() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, -0.3]);
        let r = reduce_two_species(&a, &b).unwrap();
        assert!((r.beta / r.a11 - 0.35).abs() < 1e-15);
        assert_eq!(r.back_substitution, vec![0.0]);
    }

    #[test]
    fn reduction_preconditions() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let b = DMatrix::zeros(2, 2);
        assert!(matches!(reduce_two_species(&a, &b), Err(Error::UnsupportedAnsatz(_))));
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, PI]);
        let b = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 1.0]);
        assert!(matches!(reduce_two_species(&a, &b), Err(Error::Resonance(_))));
    }

    #[test]
    fn weak_form_holds_for_bubbles() {
        let k = KernelSpec::dirac_cosine(1.0, vec![0.0, -(1.0 / PI + 0.05)]);
        let s = solve_bubble(0.05, seed(0.05), BubbleSettings::default()).unwrap();
        let check = weak_residual(&k, s.l, |x| (s.a0 + s.a1 * x.cos(), -s.a1 * x.sin()), 2048, 40);
        assert!(check.points_on_support > 100);
        assert!(check.max_on_support < 1e-8, "{}", check.max_on_support);
    }
}

//! Interaction potentials on the circle of circumference 2π.
//!
//! A kernel is a Dirac weight plus a sum of smooth even terms. Convolution with a
//! kernel acts on `e^{iℓx}` by multiplication with
//! `M(ℓ) = ∫_{-π}^{π} V(x) cos(ℓx) dx`, so a Dirac weight `d` contributes `d` to
//! every multiplier and `c cos(x)` contributes `π c` at `ℓ = 1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_L_MAX: usize = 64;

fn default_l_max() -> usize {
    DEFAULT_L_MAX
}

/// One smooth, even term of a periodic kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `Σ_ℓ c_ℓ cos(ℓx)`, `coeffs[0]` being the constant term.
    CosineSeries { coeffs: Vec<f64> },
    /// Multiplier `amplitude · (1 + η²ℓ²)^{-β}`: the kernel of `(1 - η²∂xx)^{-β}`.
    BesselSmoothed { eta: f64, beta: f64, amplitude: f64 },
    /// `amplitude · Σ_j exp(-((x + 2πj)/width)²)`.
    PeriodizedGaussian { amplitude: f64, width: f64 },
    /// `amplitude · Σ_j (1/2η) exp(-|x + 2πj|/η)`.
    PeriodizedExponential { eta: f64, amplitude: f64 },
}

impl KernelFamily {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be finite")))
            }
        };
        match self {
            KernelFamily::CosineSeries { coeffs } => {
                coeffs.iter().try_for_each(|c| finite(*c, "cosine coefficient"))
            }
            KernelFamily::BesselSmoothed { eta, beta, amplitude } => {
                finite(*amplitude, "amplitude")?;
                if !(*eta > 0.0 && eta.is_finite()) {
                    return Err(Error::InvalidArgument("eta must be positive".into()));
                }
                if !(0.0..=1.0).contains(beta) {
                    return Err(Error::InvalidArgument("beta must lie in [0, 1]".into()));
                }
                Ok(())
            }
            KernelFamily::PeriodizedGaussian { amplitude, width } => {
                finite(*amplitude, "amplitude")?;
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::InvalidArgument("width must be positive".into()));
                }
                Ok(())
            }
            KernelFamily::PeriodizedExponential { eta, amplitude } => {
                finite(*amplitude, "amplitude")?;
                if !(*eta > 0.0 && eta.is_finite()) {
                    return Err(Error::InvalidArgument("eta must be positive".into()));
                }
                Ok(())
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self.clone() {
            KernelFamily::CosineSeries { coeffs } => KernelFamily::CosineSeries {
                coeffs: coeffs.into_iter().map(|c| c * s).collect(),
            },
            KernelFamily::BesselSmoothed { eta, beta, amplitude } => {
                KernelFamily::BesselSmoothed { eta, beta, amplitude: amplitude * s }
            }
            KernelFamily::PeriodizedGaussian { amplitude, width } => {
                KernelFamily::PeriodizedGaussian { amplitude: amplitude * s, width }
            }
            KernelFamily::PeriodizedExponential { eta, amplitude } => {
                KernelFamily::PeriodizedExponential { eta, amplitude: amplitude * s }
            }
        }
    }

    /// Multiplier of this term at integer wavenumber `l`, no truncation applied.
    pub fn multiplier(&self, l: usize) -> f64 {
        let lf = l as f64;
        match self {
            KernelFamily::CosineSeries { coeffs } => match coeffs.get(l) {
                Some(c) if l == 0 => 2.0 * PI * c,
                Some(c) => PI * c,
                None => 0.0,
            },
            KernelFamily::BesselSmoothed { eta, beta, amplitude } => {
                amplitude * (1.0 + eta * eta * lf * lf).powf(-beta)
            }
            KernelFamily::PeriodizedGaussian { amplitude, width } => {
                amplitude * width * PI.sqrt() * (-0.25 * lf * lf * width * width).exp()
            }
            KernelFamily::PeriodizedExponential { eta, amplitude } => {
                amplitude / (1.0 + eta * eta * lf * lf)
            }
        }
    }

    /// Value and first two derivatives at `x`; `l_max` truncates series representations.
    fn jet(&self, x: f64, l_max: usize) -> [f64; 3] {
        match self {
            KernelFamily::CosineSeries { coeffs } => {
                let mut out = [0.0; 3];
                for (l, c) in coeffs.iter().enumerate() {
                    let lf = l as f64;
                    let (s, co) = (lf * x).sin_cos();
                    out[0] += c * co;
                    out[1] -= c * lf * s;
                    out[2] -= c * lf * lf * co;
                }
                out
            }
            KernelFamily::BesselSmoothed { eta, beta, amplitude } if *beta == 1.0 => {
                periodized_exponential_jet(x, *eta).map(|v| v * amplitude)
            }
            KernelFamily::BesselSmoothed { .. } => series_jet(self, x, l_max),
            KernelFamily::PeriodizedGaussian { amplitude, width } => {
                // Poisson series when it has converged by l_max, lattice sum otherwise.
                let tail = self.multiplier(l_max + 1).abs() / PI;
                if tail < 1e-17 * amplitude.abs().max(1e-300) {
                    series_jet(self, x, l_max)
                } else {
                    gaussian_lattice_jet(x, *width).map(|v| v * amplitude)
                }
            }
            KernelFamily::PeriodizedExponential { eta, amplitude } => {
                periodized_exponential_jet(x, *eta).map(|v| v * amplitude)
            }
        }
    }
}

/// Wrap `x` into `[-π, π)`.
pub fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Truncated Fourier series `(1/2π)[M(0) + 2 Σ M(ℓ) cos ℓx]` and its derivatives.
fn series_jet(family: &KernelFamily, x: f64, l_max: usize) -> [f64; 3] {
    let mut out = [family.multiplier(0) / (2.0 * PI), 0.0, 0.0];
    for l in 1..=l_max {
        let m = family.multiplier(l) / PI;
        let lf = l as f64;
        let (s, c) = (lf * x).sin_cos();
        out[0] += m * c;
        out[1] -= m * lf * s;
        out[2] -= m * lf * lf * c;
    }
    out
}

/// Periodization of `(1/2η) e^{-|x|/η}`: `cosh((π-|x|)/η) / (2η sinh(π/η))`.
/// Away from the kink at 0; the derivative is returned as 0 exactly at 0.
fn periodized_exponential_jet(x: f64, eta: f64) -> [f64; 3] {
    let y = wrap(x);
    let a = y.abs();
    let denom = 2.0 * eta * (1.0 - (-2.0 * PI / eta).exp());
    let near = (-a / eta).exp();
    let far = (-(2.0 * PI - a) / eta).exp();
    let value = (near + far) / denom;
    let slope = (-near + far) / (eta * denom);
    let curvature = (near + far) / (eta * eta * denom);
    let sign = if y > 0.0 {
        1.0
    } else if y < 0.0 {
        -1.0
    } else {
        0.0
    };
    [value, sign * slope, curvature]
}

fn gaussian_lattice_jet(x: f64, width: f64) -> [f64; 3] {
    let y = wrap(x);
    let reach = (7.0 * width / (2.0 * PI)).ceil() as i64 + 1;
    let w2 = width * width;
    let mut out = [0.0; 3];
    for j in -reach..=reach {
        let s = y + 2.0 * PI * j as f64;
        let g = (-s * s / w2).exp();
        out[0] += g;
        out[1] += -2.0 * s / w2 * g;
        out[2] += (4.0 * s * s / (w2 * w2) - 2.0 / w2) * g;
    }
    out
}

/// A periodic interaction potential: Dirac weight plus smooth terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(default)]
    pub dirac_weight: f64,
    #[serde(default)]
    pub terms: Vec<KernelFamily>,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
}

impl KernelSpec {
    pub fn new(dirac_weight: f64, terms: Vec<KernelFamily>, l_max: usize) -> Result<Self> {
        let k = Self { dirac_weight, terms, l_max };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dirac_weight.is_finite() {
            return Err(Error::InvalidArgument("dirac_weight must be finite".into()));
        }
        for t in &self.terms {
            t.validate()?;
            if let KernelFamily::CosineSeries { coeffs } = t {
                if coeffs.len() > self.l_max + 1 {
                    return Err(Error::InvalidArgument(format!(
                        "cosine series of degree {} exceeds l_max = {}",
                        coeffs.len() - 1,
                        self.l_max
                    )));
                }
            }
        }
        Ok(())
    }

    /// `d δ(x) + Σ c_ℓ cos(ℓx)`.
    pub fn dirac_cosine(dirac_weight: f64, coeffs: Vec<f64>) -> Self {
        Self {
            dirac_weight,
            terms: vec![KernelFamily::CosineSeries { coeffs }],
            l_max: DEFAULT_L_MAX,
        }
    }

    pub fn single(family: KernelFamily) -> Self {
        Self { dirac_weight: 0.0, terms: vec![family], l_max: DEFAULT_L_MAX }
    }

    pub fn with_l_max(mut self, l_max: usize) -> Self {
        self.l_max = l_max;
        self
    }

    /// Sum of two kernels; the larger truncation order wins.
    pub fn plus(&self, other: &KernelSpec) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self {
            dirac_weight: self.dirac_weight + other.dirac_weight,
            terms,
            l_max: self.l_max.max(other.l_max),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dirac_weight: self.dirac_weight * s,
            terms: self.terms.iter().map(|t| t.scaled(s)).collect(),
            l_max: self.l_max,
        }
    }

    pub fn has_dirac(&self) -> bool {
        self.dirac_weight != 0.0
    }

    /// Multiplier `M(ℓ)`, `0 ≤ ℓ ≤ l_max`.
    pub fn multiplier(&self, l: usize) -> Result<f64> {
        if l > self.l_max {
            return Err(Error::OutOfRange { l, l_max: self.l_max });
        }
        Ok(self.multiplier_unchecked(l))
    }

    /// Multiplier without the truncation check (closed forms extend to all `ℓ`).
    pub fn multiplier_unchecked(&self, l: usize) -> f64 {
        self.dirac_weight + self.smooth_multiplier(l)
    }

    /// Multiplier of the smooth part alone.
    pub fn smooth_multiplier(&self, l: usize) -> f64 {
        self.terms.iter().map(|t| t.multiplier(l)).sum()
    }

    fn jet(&self, x: f64) -> [f64; 3] {
        self.terms.iter().fold([0.0; 3], |acc, t| {
            let j = t.jet(x, self.l_max);
            [acc[0] + j[0], acc[1] + j[1], acc[2] + j[2]]
        })
    }

    /// Pointwise value; fails when a Dirac part is present.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        if self.has_dirac() {
            return Err(Error::UnsupportedEvaluation(format!(
                "kernel has a Dirac part of weight {}; use evaluate_smooth",
                self.dirac_weight
            )));
        }
        Ok(self.jet(x)[0])
    }

    /// Value of the smooth part, ignoring any Dirac weight.
    pub fn evaluate_smooth(&self, x: f64) -> f64 {
        self.jet(x)[0]
    }

    /// `(V(x), V'(x))` of the smooth part.
    pub fn value_and_derivative(&self, x: f64) -> (f64, f64) {
        let j = self.jet(x);
        (j[0], j[1])
    }

    /// `V'(x)` of the smooth part.
    pub fn derivative(&self, x: f64) -> f64 {
        self.jet(x)[1]
    }

    /// `V''(x)` of the smooth part, away from any kink at the origin.
    pub fn second_derivative(&self, x: f64) -> f64 {
        self.jet(x)[2]
    }

    /// Whether `V'` is continuous at the origin (no kink or stronger singularity there).
    pub fn smooth_at_origin(&self) -> bool {
        !self.has_dirac()
            && self.terms.iter().all(|t| {
                matches!(t, KernelFamily::CosineSeries { .. } | KernelFamily::PeriodizedGaussian { .. })
            })
    }

    /// Cosine coefficients `c_ℓ`, `ℓ ≤ l_max`, of the smooth part.
    pub fn cosine_coefficients(&self) -> Vec<f64> {
        (0..=self.l_max)
            .map(|l| {
                let m = self.smooth_multiplier(l);
                if l == 0 {
                    m / (2.0 * PI)
                } else {
                    m / PI
                }
            })
            .collect()
    }

    /// Largest wavenumber with a nonzero cosine coefficient if the smooth part is a
    /// trigonometric polynomial, `None` otherwise.
    pub fn trig_degree(&self) -> Option<usize> {
        let mut deg = 0;
        for t in &self.terms {
            match t {
                KernelFamily::CosineSeries { coeffs } => {
                    if let Some(d) = coeffs.iter().rposition(|c| *c != 0.0) {
                        deg = deg.max(d);
                    }
                }
                _ => return None,
            }
        }
        Some(deg)
    }
}

/// `μ ↦ base + μ · slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFamily {
    pub base: KernelSpec,
    pub slope: KernelSpec,
}

impl LinearFamily {
    pub fn new(base: KernelSpec, slope: KernelSpec) -> Self {
        Self { base, slope }
    }

    pub fn at(&self, mu: f64) -> KernelSpec {
        self.base.plus(&self.slope.scaled(mu))
    }

    /// `δ - (1/π + μ) cos x`.
    pub fn dirac_cosine_model() -> Self {
        Self::new(
            KernelSpec::dirac_cosine(1.0, vec![0.0, -1.0 / PI]),
            KernelSpec::dirac_cosine(0.0, vec![0.0, -1.0]),
        )
    }

    /// `(1 - η²∂xx)^{-β} - μ cos x`; critical at `μ = 1/(π(1+η²)^β)`.
    pub fn smoothed_model(eta: f64, beta: f64) -> Self {
        Self::new(
            KernelSpec::single(KernelFamily::BesselSmoothed { eta, beta, amplitude: 1.0 }),
            KernelSpec::dirac_cosine(0.0, vec![0.0, -1.0]),
        )
    }
}

/// Symmetric `P × P` array of kernels for multi-species interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixKernelSpec {
    pub blocks: Vec<Vec<KernelSpec>>,
}

impl MatrixKernelSpec {
    pub fn new(blocks: Vec<Vec<KernelSpec>>) -> Result<Self> {
        let k = Self { blocks };
        k.validate()?;
        Ok(k)
    }

    pub fn scalar(k: KernelSpec) -> Self {
        Self { blocks: vec![vec![k]] }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.blocks.len();
        if p == 0 {
            return Err(Error::InvalidArgument("matrix kernel needs at least one species".into()));
        }
        for (i, row) in self.blocks.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidArgument(format!("row {i} has {} blocks, expected {p}", row.len())));
            }
            for (j, k) in row.iter().enumerate() {
                k.validate()?;
                if *k != self.blocks[j][i] {
                    return Err(Error::InvalidArgument(format!(
                        "interaction must be symmetric: block ({i},{j}) differs from ({j},{i})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, p: usize, q: usize) -> &KernelSpec {
        &self.blocks[p][q]
    }

    pub fn l_max(&self) -> usize {
        self.blocks.iter().flatten().map(|k| k.l_max).min().unwrap_or(0)
    }

    /// Dirac weights `a` and cosine amplitudes `-b`: blocks `a_pq δ - b_pq cos x`.
    pub fn dirac_cosine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        let p = a.nrows();
        if a.ncols() != p || b.nrows() != p || b.ncols() != p {
            return Err(Error::InvalidArgument("a and b must be square of equal size".into()));
        }
        Self::new(
            (0..p)
                .map(|i| (0..p).map(|j| KernelSpec::dirac_cosine(a[(i, j)], vec![0.0, -b[(i, j)]])).collect())
                .collect(),
        )
    }

    pub fn multiplier(&self, l: usize) -> Result<DMatrix<f64>> {
        let p = self.size();
        let mut m = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                m[(i, j)] = self.blocks[i][j].multiplier(l)?;
            }
        }
        Ok(m)
    }
}

/// Potentials on the whole line, before periodization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LinePotential {
    /// `amplitude · exp(-(x/width)²)`.
    Gaussian { amplitude: f64, width: f64 },
    /// `amplitude · (1/2η) exp(-|x|/η)`.
    Exponential { eta: f64, amplitude: f64 },
    /// `weight · δ(x)`.
    Dirac { weight: f64 },
}

impl LinePotential {
    /// `∫_ℝ V(x) cos(qx) dx`.
    pub fn cosine_transform(&self, q: f64) -> f64 {
        match self {
            LinePotential::Gaussian { amplitude, width } => {
                amplitude * width * PI.sqrt() * (-0.25 * q * q * width * width).exp()
            }
            LinePotential::Exponential { eta, amplitude } => amplitude / (1.0 + eta * eta * q * q),
            LinePotential::Dirac { weight } => *weight,
        }
    }

    /// `V''(x)` for `x ≠ 0` (Dirac parts and kinks at the origin are not included).
    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            LinePotential::Gaussian { amplitude, width } => {
                let w2 = width * width;
                amplitude * (4.0 * x * x / (w2 * w2) - 2.0 / w2) * (-x * x / w2).exp()
            }
            LinePotential::Exponential { eta, amplitude } => {
                amplitude * (-x.abs() / eta).exp() / (2.0 * eta * eta * eta)
            }
            LinePotential::Dirac { .. } => 0.0,
        }
    }

    /// Bound on `|V''(y)|` for all `|y| ≥ |x|`, used to stop direct lattice sums.
    pub fn second_derivative_envelope(&self, x: f64) -> f64 {
        match self {
            LinePotential::Gaussian { amplitude, width } => {
                let w2 = width * width;
                amplitude.abs() * (4.0 * x * x / (w2 * w2) + 2.0 / w2) * (-x * x / w2).exp()
            }
            other => other.second_derivative(x).abs(),
        }
    }

    pub fn periodized_family(&self) -> Option<KernelFamily> {
        match *self {
            LinePotential::Gaussian { amplitude, width } => {
                Some(KernelFamily::PeriodizedGaussian { amplitude, width })
            }
            LinePotential::Exponential { eta, amplitude } => {
                Some(KernelFamily::PeriodizedExponential { eta, amplitude })
            }
            LinePotential::Dirac { .. } => None,
        }
    }
}

/// Periodize a line potential into a truncated cosine series: the coefficients are
/// samples of the line cosine transform at integer wavenumbers.
pub fn periodize(potential: &LinePotential, l_max: usize) -> Result<KernelSpec> {
    if l_max < 1 {
        return Err(Error::InvalidArgument("l_max must be at least 1".into()));
    }
    if let LinePotential::Dirac { weight } = potential {
        return Ok(KernelSpec {
            dirac_weight: *weight,
            terms: vec![KernelFamily::CosineSeries { coeffs: vec![0.0; l_max + 1] }],
            l_max,
        });
    }
    let coeffs = (0..=l_max)
        .map(|l| {
            let m = potential.cosine_transform(l as f64);
            if l == 0 {
                m / (2.0 * PI)
            } else {
                m / PI
            }
        })
        .collect();
    Ok(KernelSpec { dirac_weight: 0.0, terms: vec![KernelFamily::CosineSeries { coeffs }], l_max })
}

//! Finite particle systems on the circle of circumference 2π.
//!
//! The energy sums the periodic potential over ordered pairs `j ≠ m`; particles move
//! by the gradient flow `x' = -∇E`. Positions are kept unwrapped so that the cyclic
//! order of particles can be monitored.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::continuation::{pseudo_arclength, Branch, ContinuationProblem, PalcSettings};
use crate::error::{Error, Result};
use crate::kernels::{wrap, KernelSpec, MatrixKernelSpec};
use crate::ode::{integrate, IntegrationStats, StepControl};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleState {
    pub positions: Vec<f64>,
    /// Species index of each particle, `0..P`.
    pub species: Vec<usize>,
    pub time: f64,
}

impl ParticleState {
    pub fn new(positions: Vec<f64>, species: Vec<usize>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidArgument("need at least two particles".into()));
        }
        if species.len() != positions.len() {
            return Err(Error::InvalidArgument("one species label per particle required".into()));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("positions must be finite".into()));
        }
        Ok(Self { positions, species, time: 0.0 })
    }

    /// Single-species state.
    pub fn scalar(positions: Vec<f64>) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![0; n])
    }

    /// `n` equally spaced particles `x_j = 2πj/n`.
    pub fn crystal(n: usize) -> Self {
        let positions = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        Self { positions, species: vec![0; n], time: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Weight that makes particle growth rates match the continuum: each of `n`
/// particles carries mass `2π/n`, and the factor `1/2` undoes the ordered-pair sum.
pub fn mean_field_scale(n: usize) -> f64 {
    PI / n as f64
}

fn check_kernel(k: &MatrixKernelSpec, s: &ParticleState) -> Result<()> {
    if k.blocks.iter().flatten().any(|b| b.has_dirac()) {
        return Err(Error::UnsupportedEvaluation(
            "Dirac interactions have no pointwise particle force; use a smooth repulsion".into(),
        ));
    }
    if let Some(p) = s.species.iter().find(|p| **p >= k.size()) {
        return Err(Error::InvalidArgument(format!("species {p} exceeds kernel size {}", k.size())));
    }
    Ok(())
}

/// `Σ_{j ≠ m} V_{s_j s_m}(x_j - x_m)`.
pub fn energy(s: &ParticleState, k: &MatrixKernelSpec) -> Result<f64> {
    check_kernel(k, s)?;
    let x = &s.positions;
    let mut e = 0.0;
    for j in 0..x.len() {
        for m in 0..x.len() {
            if m != j {
                e += k.block(s.species[j], s.species[m]).evaluate_smooth(x[j] - x[m]);
            }
        }
    }
    Ok(e)
}

/// `-∂E/∂x_j = -2 Σ_{m≠j} V'(x_j - x_m)`.
pub fn force(s: &ParticleState, k: &MatrixKernelSpec) -> Result<Vec<f64>> {
    check_kernel(k, s)?;
    let x = &s.positions;
    (0..x.len())
        .into_par_iter()
        .map(|j| {
            let mut f = 0.0;
            for m in 0..x.len() {
                if m == j {
                    continue;
                }
                let kernel = k.block(s.species[j], s.species[m]);
                let d = wrap(x[j] - x[m]);
                if d == 0.0 && !kernel.smooth_at_origin() {
                    return Err(Error::Singularity(format!(
                        "particles {j} and {m} coincide and the interaction has a kink at the origin"
                    )));
                }
                f -= 2.0 * kernel.derivative(d);
            }
            Ok(f)
        })
        .collect()
}

/// Jacobian `∂F_j/∂x_m` of [`force`].
pub fn force_jacobian(s: &ParticleState, k: &MatrixKernelSpec) -> Result<DMatrix<f64>> {
    check_kernel(k, s)?;
    let x = &s.positions;
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        for m in 0..n {
            if m != j {
                let v2 = 2.0 * k.block(s.species[j], s.species[m]).second_derivative(x[j] - x[m]);
                jac[(j, m)] = v2;
                jac[(j, j)] -= v2;
            }
        }
    }
    Ok(jac)
}

/// Linearization of the gradient flow at the crystal of `n` particles. Its
/// eigenvalues are `2 λ_m` with `λ_m` the ring dispersion of mode `m` (the factor 2
/// comes from the ordered-pair energy).
pub fn linearize_crystal(n: usize, k: &KernelSpec) -> Result<DMatrix<f64>> {
    force_jacobian(&ParticleState::crystal(n), &MatrixKernelSpec::scalar(k.clone()))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub positions: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Accepted steps after which the cyclic order of particles of one species changed.
    pub order_violations: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    /// Largest energy increase between recorded points, net of `slack · Δt`.
    pub fn worst_energy_increase(&self, slack: f64) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1].energy - w[0].energy - slack * (w[1].time - w[0].time))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory holds the initial state")
    }
}

fn cyclic_order(x: &[f64], members: &[usize]) -> Vec<usize> {
    let mut idx = members.to_vec();
    idx.sort_by(|&a, &b| x[a].rem_euclid(2.0 * PI).total_cmp(&x[b].rem_euclid(2.0 * PI)));
    idx
}

/// Whether the unwrapped gaps along `order` are all positive and sum to 2π.
fn order_preserved(x: &[f64], order: &[usize]) -> bool {
    if order.len() < 2 {
        return true;
    }
    let gaps_ok = order.windows(2).all(|w| x[w[1]] > x[w[0]]);
    let closing = x[order[0]] + 2.0 * PI - x[order[order.len() - 1]];
    gaps_ok && closing > 0.0
}

/// Integrate the gradient flow to `t_end` with local error `tol` per step, recording
/// every `record_every`-th accepted step.
pub fn simulate(
    s0: &ParticleState,
    k: &MatrixKernelSpec,
    t_end: f64,
    tol: f64,
    record_every: usize,
) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    check_kernel(k, s0)?;
    let species = s0.species.clone();
    let n_species = k.size();
    let groups: Vec<Vec<usize>> =
        (0..n_species).map(|p| (0..species.len()).filter(|&j| species[j] == p).collect()).collect();
    // Unwrap so that each species is increasing along its cyclic order.
    let mut start = s0.positions.iter().map(|x| x.rem_euclid(2.0 * PI)).collect::<Vec<_>>();
    let orders: Vec<Vec<usize>> = groups.iter().map(|g| cyclic_order(&start, g)).collect();
    for o in &orders {
        for w in o.windows(2) {
            if start[w[1]] < start[w[0]] {
                start[w[1]] += 2.0 * PI;
            }
        }
    }
    let shift: Vec<f64> = s0.positions.iter().zip(&start).map(|(a, b)| a - b).collect();

    let mut points = Vec::new();
    let mut violations = 0usize;
    let mut accepted = 0usize;
    let rhs = |y: &[f64], dy: &mut [f64]| -> Result<()> {
        let st = ParticleState { positions: y.to_vec(), species: species.clone(), time: 0.0 };
        dy.copy_from_slice(&force(&st, k)?);
        Ok(())
    };
    let mut control = StepControl::new(tol);
    control.max_steps = 5_000_000;
    let (_, stats): (Vec<f64>, IntegrationStats) = integrate(rhs, s0.time, &start, t_end, control, |t, y| {
        if n_species == 1 || orders.iter().all(|o| o.len() >= 2) {
            if orders.iter().any(|o| !order_preserved(y, o)) {
                violations += 1;
            }
        }
        if accepted % record_every.max(1) == 0 || t >= t_end {
            let positions: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let st = ParticleState { positions: positions.clone(), species: species.clone(), time: t };
            points.push(TrajectoryPoint { time: t, positions, energy: energy(&st, k)? });
        }
        accepted += 1;
        Ok(())
    })?;
    Ok(Trajectory {
        points,
        order_violations: violations,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
    })
}

/// Largest inverse gap between cyclic neighbours, a proxy for the local density.
pub fn density_proxy(positions: &[f64]) -> f64 {
    let mut x: Vec<f64> = positions.iter().map(|x| x.rem_euclid(2.0 * PI)).collect();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let mut max = 1.0 / (x[0] + 2.0 * PI - x[n - 1]);
    for w in x.windows(2) {
        max = max.max(1.0 / (w[1] - w[0]));
    }
    max
}

/// Even configurations `{0, ±y_1, …, ±y_K}` (plus `π` when `n` is even), `y` being
/// the continuation unknowns.
struct EvenEquilibria<F> {
    family: F,
    n: usize,
}

impl<F: Fn(f64) -> Result<KernelSpec>> EvenEquilibria<F> {
    fn half(&self) -> usize {
        (self.n - 1) / 2
    }

    fn expand(&self, y: &DVector<f64>) -> Vec<f64> {
        let mut x = vec![0.0];
        x.extend(y.iter().copied());
        x.extend(y.iter().map(|v| -v));
        if self.n % 2 == 0 {
            x.push(PI);
        }
        x
    }

    fn crystal(&self) -> DVector<f64> {
        DVector::from_fn(self.half(), |j, _| 2.0 * PI * (j + 1) as f64 / self.n as f64)
    }

    fn state(&self, y: &DVector<f64>) -> ParticleState {
        let x = self.expand(y);
        let n = x.len();
        ParticleState { positions: x, species: vec![0; n], time: 0.0 }
    }
}

impl<F: Fn(f64) -> Result<KernelSpec>> ContinuationProblem for EvenEquilibria<F> {
    fn residual(&self, y: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
        let k = MatrixKernelSpec::scalar((self.family)(mu)?);
        let f = force(&self.state(y), &k)?;
        Ok(DVector::from_fn(self.half(), |j, _| f[j + 1]))
    }

    fn jacobian(&self, y: &DVector<f64>, mu: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let k = MatrixKernelSpec::scalar((self.family)(mu)?);
        let full = force_jacobian(&self.state(y), &k)?;
        let h = self.half();
        let jy = DMatrix::from_fn(h, h, |j, i| full[(j + 1, i + 1)] - full[(j + 1, i + 1 + h)]);
        let dm = 1e-6 * mu.abs().max(1.0);
        let jp = (self.residual(y, mu + dm)? - self.residual(y, mu - dm)?) / (2.0 * dm);
        Ok((jy, jp))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumPoint {
    pub mu: f64,
    pub positions: Vec<f64>,
    pub density_proxy: f64,
    /// Whether the point lies on the crystal branch.
    pub crystal: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EquilibriumSettings {
    /// Number of crystal points recorded below the bifurcation.
    pub crystal_points: usize,
    pub palc: PalcSettings,
}

impl Default for EquilibriumSettings {
    fn default() -> Self {
        Self {
            crystal_points: 10,
            palc: PalcSettings { step: 0.02, min_step: 1e-8, max_step: 0.05, max_points: 400, tol: 1e-10, ..Default::default() },
        }
    }
}

/// Follow even equilibria of `n` particles in `μ`: the crystal up to the first
/// parameter where its linearization becomes singular, then the bifurcating branch
/// whose cluster forms at `x = 0`.
pub fn continue_equilibria<F>(
    family: F,
    n: usize,
    mu_range: (f64, f64),
    settings: EquilibriumSettings,
) -> Result<Branch<EquilibriumPoint>>
where
    F: Fn(f64) -> Result<KernelSpec>,
{
    if n < 3 {
        return Err(Error::InvalidArgument("continuation needs at least three particles".into()));
    }
    let problem = EvenEquilibria { family, n };
    let y0 = problem.crystal();
    let crystal_proxy = n as f64 / (2.0 * PI);
    let smallest = |mu: f64| -> Result<(f64, DVector<f64>)> {
        let (j, _) = problem.jacobian(&y0, mu)?;
        let eig = nalgebra::SymmetricEigen::new((&j + j.transpose()) * 0.5);
        let i = eig.eigenvalues.imax();
        Ok((eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
    };

    let mut branch = Branch::new();
    let (lo, hi) = mu_range;
    let mut mu_c = None;
    let samples = 400;
    let mut prev = (lo, smallest(lo)?.0);
    for i in 1..=samples {
        let mu = lo + (hi - lo) * i as f64 / samples as f64;
        let g = smallest(mu)?.0;
        if prev.1 < 0.0 && g >= 0.0 {
            let (mut a, mut b) = (prev.0, mu);
            for _ in 0..100 {
                let c = 0.5 * (a + b);
                if smallest(c)?.0 < 0.0 {
                    a = c;
                } else {
                    b = c;
                }
            }
            mu_c = Some(0.5 * (a + b));
            break;
        }
        prev = (mu, g);
    }
    let end = mu_c.unwrap_or(hi);
    for i in 0..settings.crystal_points {
        let mu = lo + (end - lo) * i as f64 / settings.crystal_points.max(1) as f64;
        branch.points.push(EquilibriumPoint {
            mu,
            positions: problem.expand(&y0),
            density_proxy: crystal_proxy,
            crystal: true,
        });
    }
    let Some(mu_c) = mu_c else {
        branch.truncation = Some("crystal stays stable throughout the parameter range".into());
        return Ok(branch);
    };
    // Orient the critical mode so particles move towards x = 0.
    let (_, mut phi) = smallest(mu_c)?;
    if phi[0] > 0.0 {
        phi = -phi;
    }
    let mut t0 = phi.insert_row(problem.half(), 0.0);
    t0.normalize_mut();
    let mut palc = settings.palc;
    palc.param_range = mu_range;
    let path = pseudo_arclength(&problem, y0.clone(), mu_c, t0, palc)?;
    for pt in &path.points {
        let x = problem.expand(&pt.x);
        branch.points.push(EquilibriumPoint {
            mu: pt.p,
            density_proxy: density_proxy(&x),
            positions: x,
            crystal: pt.x.iter().zip(y0.iter()).all(|(a, b)| (a - b).abs() < 1e-12),
        });
    }
    branch.truncation = path.truncation;
    Ok(branch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::stability::{ring_dispersion, Summation};

    fn smooth_kernel(mu: f64) -> KernelSpec {
        KernelSpec::new(
            0.0,
            vec![
                KernelFamily::PeriodizedExponential { eta: 0.3, amplitude: 1.0 },
                KernelFamily::CosineSeries { coeffs: vec![0.0, -(1.0 / PI + mu)] },
            ],
            64,
        )
        .unwrap()
    }

    #[test]
    fn two_particle_cosine_energy() {
        let k = MatrixKernelSpec::scalar(KernelSpec::dirac_cosine(0.0, vec![0.0, -1.0]));
        let s = ParticleState::scalar(vec![0.0, PI]).unwrap();
        assert!((energy(&s, &k).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn crystal_is_force_free() {
        let k = MatrixKernelSpec::scalar(smooth_kernel(0.2));
        let f = force(&ParticleState::crystal(25), &k).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn repulsion_pushes_apart() {
        let k = MatrixKernelSpec::scalar(KernelSpec::single(KernelFamily::PeriodizedExponential { eta: 0.3, amplitude: 1.0 }));
        let f = force(&ParticleState::scalar(vec![0.0, 0.1]).unwrap(), &k).unwrap();
        assert!(f[0] < 0.0 && f[1] > 0.0);
    }

    #[test]
    fn three_particles_concavity() {
        let k = MatrixKernelSpec::scalar(KernelSpec::single(KernelFamily::PeriodizedExponential { eta: 0.3, amplitude: 1.0 }));
        let even = energy(&ParticleState::scalar(vec![-0.2, 0.0, 0.2]).unwrap(), &k).unwrap();
        let moved = energy(&ParticleState::scalar(vec![-0.2, 0.15, 0.2]).unwrap(), &k).unwrap();
        assert!(even < moved);
    }

    #[test]
    fn dirac_kernels_are_rejected() {
        let k = MatrixKernelSpec::scalar(KernelSpec::dirac_cosine(1.0, vec![0.0, -1.0]));
        assert!(matches!(energy(&ParticleState::crystal(4), &k), Err(Error::UnsupportedEvaluation(_))));
    }

    #[test]
    fn coincident_particles_with_kink() {
        let k = MatrixKernelSpec::scalar(smooth_kernel(0.0));
        let s = ParticleState::scalar(vec![0.5, 0.5, 2.0]).unwrap();
        assert!(matches!(force(&s, &k), Err(Error::Singularity(_))));
    }

    #[test]
    fn crystal_linearization_matches_ring_dispersion() {
        let k = smooth_kernel(0.1);
        let n = 16;
        let jac = linearize_crystal(n, &k).unwrap();
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let mut expected: Vec<f64> =
            (0..n).map(|m| 2.0 * ring_dispersion(&k, n, m, Summation::DirectSum, 0).unwrap()).collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn crystal_trajectory_is_stationary() {
        let k = MatrixKernelSpec::scalar(smooth_kernel(-0.1));
        let s0 = ParticleState::crystal(12);
        let traj = simulate(&s0, &k, 10.0, 1e-10, 1).unwrap();
        let last = traj.last();
        let disp = last.positions.iter().zip(&s0.positions).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(disp < 1e-10);
        assert_eq!(traj.order_violations, 0);
    }

    #[test]
    fn density_proxy_of_crystal() {
        let p = density_proxy(&ParticleState::crystal(10).positions);
        assert!((p - 10.0 / (2.0 * PI)).abs() < 1e-12);
    }
}

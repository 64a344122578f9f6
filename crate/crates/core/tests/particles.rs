use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vacua::kernels::{KernelFamily, KernelSpec, MatrixKernelSpec};
use vacua::particles::{
    continue_equilibria, energy, force, mean_field_scale, simulate, EquilibriumSettings, ParticleState,
};
use vacua::stability::{ring_dispersion, Summation};

/// Exponential repulsion normalized so that the continuum mode `ℓ = 1` grows at
/// rate `πμ`, scaled for `n` particles.
fn normalized_kernel(eta: f64, mu: f64, n: usize) -> KernelSpec {
    KernelSpec::new(
        0.0,
        vec![
            KernelFamily::PeriodizedExponential { eta, amplitude: 1.0 },
            KernelFamily::CosineSeries { coeffs: vec![0.0, -(1.0 / (PI * (1.0 + eta * eta)) + mu)] },
        ],
        64,
    )
    .unwrap()
    .scaled(mean_field_scale(n))
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> ParticleState {
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    x.sort_by(f64::total_cmp);
    ParticleState::scalar(x).unwrap()
}

#[test]
fn energy_matches_brute_force_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let k = normalized_kernel(0.3, 0.1, 10);
    let s = random_state(&mut rng, 10);
    let mut brute = 0.0;
    for (j, xj) in s.positions.iter().enumerate() {
        for (m, xm) in s.positions.iter().enumerate() {
            if j != m {
                // periodized exponential by explicit image sum
                let d = xj - xm;
                let rep: f64 = (-40..=40)
                    .map(|i: i32| (-(d + 2.0 * PI * i as f64).abs() / 0.3).exp() / 0.6)
                    .sum();
                let att = -(1.0 / (PI * 1.09) + 0.1) * d.cos();
                brute += (rep + att) * mean_field_scale(10);
            }
        }
    }
    let e = energy(&s, &MatrixKernelSpec::scalar(k)).unwrap();
    assert!((e - brute).abs() < 1e-12 * brute.abs().max(1.0), "{e} vs {brute}");
}

#[test]
fn force_is_minus_energy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = MatrixKernelSpec::scalar(normalized_kernel(0.3, 0.2, 12));
    let s = random_state(&mut rng, 12);
    let f = force(&s, &k).unwrap();
    let h = 1e-6;
    for j in 0..s.len() {
        let mut p = s.clone();
        p.positions[j] += h;
        let mut m = s.clone();
        m.positions[j] -= h;
        let fd = -(energy(&p, &k).unwrap() - energy(&m, &k).unwrap()) / (2.0 * h);
        assert!((fd - f[j]).abs() <= 1e-6 * f[j].abs().max(1.0), "j={j}: {fd} vs {}", f[j]);
    }
}

#[test]
fn translation_shifts_trajectory() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = MatrixKernelSpec::scalar(normalized_kernel(0.3, 0.1, 8));
    let s = random_state(&mut rng, 8);
    let c = 0.37;
    let shifted = ParticleState::scalar(s.positions.iter().map(|x| x + c).collect()).unwrap();
    let a = simulate(&s, &k, 1.0, 1e-10, 1).unwrap();
    let b = simulate(&shifted, &k, 1.0, 1e-10, 1).unwrap();
    for (x, y) in a.last().positions.iter().zip(&b.last().positions) {
        let d = (y - x - c).rem_euclid(2.0 * PI);
        assert!(d.min(2.0 * PI - d) < 1e-8);
    }
}

/// Amplitude of the displacement mode `sin(x_j)` relative to the crystal.
fn mode_amplitude(x: &[f64], crystal: &[f64]) -> f64 {
    let n = x.len() as f64;
    x.iter().zip(crystal).map(|(x, c)| (x - c) * c.sin()).sum::<f64>() * 2.0 / n
}

fn growth_rate(mu: f64) -> (f64, f64) {
    let n = 40;
    let k = normalized_kernel(0.3, mu, n);
    let crystal = ParticleState::crystal(n);
    let amp0 = 1e-6;
    let x0: Vec<f64> = crystal.positions.iter().map(|x| x + amp0 * x.sin()).collect();
    let traj = simulate(&ParticleState::scalar(x0).unwrap(), &MatrixKernelSpec::scalar(k.clone()), 2.0, 1e-13, 1).unwrap();
    let last = traj.last();
    let amp = mode_amplitude(&last.positions, &crystal.positions);
    let fitted = (amp / amp0).ln() / last.time;
    let oracle = 2.0 * ring_dispersion(&k, n, 1, Summation::DirectSum, 0).unwrap();
    (fitted, oracle)
}

#[test]
fn perturbation_grows_above_threshold() {
    let mu = 0.2;
    let (fitted, oracle) = growth_rate(mu);
    assert!(fitted > 0.0);
    assert!((fitted - oracle).abs() <= 0.1 * oracle.abs(), "{fitted} vs {oracle}");
    assert!((fitted - PI * mu).abs() <= 0.1 * PI * mu, "{fitted} vs {}", PI * mu);
}

#[test]
fn perturbation_decays_below_threshold() {
    let (fitted, oracle) = growth_rate(-0.2);
    assert!(fitted < 0.0);
    assert!((fitted - oracle).abs() <= 0.1 * oracle.abs(), "{fitted} vs {oracle}");
}

#[test]
fn clustered_branch_of_25_particles() {
    let family = |mu: f64| {
        KernelSpec::new(
            0.0,
            vec![
                KernelFamily::PeriodizedExponential { eta: 0.3, amplitude: 1.0 },
                KernelFamily::CosineSeries { coeffs: vec![0.0, -(1.0 / PI + mu)] },
            ],
            64,
        )
    };
    let branch = continue_equilibria(family, 25, (-0.2, 0.4), EquilibriumSettings::default()).unwrap();
    let crystal: Vec<_> = branch.points.iter().filter(|p| p.crystal).collect();
    assert!(crystal.iter().all(|p| (p.density_proxy - 25.0 / (2.0 * PI)).abs() < 1e-9));
    let clustered: Vec<_> = branch.points.iter().filter(|p| !p.crystal && p.mu > 0.0).collect();
    assert!(clustered.len() > 3, "branch: {:?}", branch.truncation);
    for w in clustered.windows(2) {
        if w[1].mu > w[0].mu {
            assert!(w[1].density_proxy >= w[0].density_proxy - 1e-9);
        }
    }
}


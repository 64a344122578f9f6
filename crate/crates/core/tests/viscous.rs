use std::f64::consts::PI;

use proptest::prelude::*;
use vacua::kernels::{KernelSpec, LinearFamily};
use vacua::quadrature::PeriodicGrid;
use vacua::viscous::{
    adjoint_pairings, closed_form, closed_form_profile, lambert_w0, mu1, rho_for_peak, steady_collocation, steady_state,
    time_step, viscous_branch, CollocationSettings, ViscousProfile,
};

fn model() -> LinearFamily {
    LinearFamily::dirac_cosine_model()
}

fn sup_distance(p: &ViscousProfile, q: &ViscousProfile) -> f64 {
    p.u.iter().zip(&q.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn slant_matches_mu1_at_small_eps() {
    for rho in [0.25, 0.5, 0.75] {
        let p = steady_collocation(&model(), 1e-3, rho, CollocationSettings::default(), None).unwrap();
        let pred = mu1(rho).unwrap();
        let rel = (p.mu / 1e-3 - pred).abs() / pred;
        assert!(rel <= 0.03, "ρ = {rho}: μ/ε = {} vs {pred}", p.mu / 1e-3);
        assert!((p.mass() - 2.0 * PI).abs() < 1e-10);
        assert!((p.cos_moment() - rho * PI).abs() < 1e-10);
        assert!(p.asymmetry() == 0.0 && p.min() > 0.0);
    }
}

#[test]
fn collocation_matches_lambert_closed_form() {
    for rho in [0.3, 0.8, 1.4] {
        let c = closed_form(rho, 0.05).unwrap();
        let settings = CollocationSettings { n: 512, ..Default::default() };
        let (col, flux) = steady_state(&model(), 0.05, rho, settings, None).unwrap();
        assert!(flux <= 1e-6, "ρ = {rho}: flux residual {flux:e}");
        let cf = c.profile(512);
        assert!(sup_distance(&col, &cf) <= 1e-6, "ρ = {rho}: {}", sup_distance(&col, &cf));
        assert!((col.mu - c.mu).abs() <= 1e-8);
        assert!((col.m - c.m).abs() <= 1e-8);
    }
}

#[test]
fn peak_profile_at_eps_one_tenth() {
    let rho = rho_for_peak(2.5, 0.1).unwrap();
    assert!(rho > 1.0);
    let cf = closed_form_profile(rho, 0.1, 256).unwrap();
    assert!((cf.sup() - 2.5).abs() < 1e-9);
    let col = steady_collocation(&model(), 0.1, rho, CollocationSettings::default(), None).unwrap();
    assert!(sup_distance(&col, &cf) <= 1e-6);
}

#[test]
fn vacuum_is_exponentially_small() {
    // inviscid bubble at ρ = 1.5 has v(π) < 0; ε log u(π) tends to v(π)
    let v_pi = {
        let c = closed_form(1.5, 0.01).unwrap();
        c.potential(PI)
    };
    assert!(v_pi < -0.1);
    for eps in [0.1, 0.05, 0.025, 0.0125] {
        let c = closed_form(1.5, eps).unwrap();
        let u = c.value(PI);
        assert!(u > 0.0);
        assert!(u <= (0.5 * v_pi / eps).exp(), "ε = {eps}: u(π) = {u:e}");
        // positive region: u = v + O(ε)
        assert!((c.value(0.0) - c.potential(0.0)).abs() <= 5.0 * eps);
    }
}

#[test]
fn small_eps_profile_approaches_linear_branch() {
    let mut last = f64::INFINITY;
    for eps in [1e-2, 1e-3, 1e-4] {
        let p = closed_form_profile(0.6, eps, 256).unwrap();
        let d = p.x.iter().zip(&p.u).map(|(x, u)| (u - 1.0 - 0.6 * x.cos()).abs()).fold(0.0, f64::max);
        assert!(d < last && d <= 10.0 * eps, "ε = {eps}: {d}");
        last = d;
    }
}

#[test]
fn slanted_branch_at_eps_one_tenth() {
    let rhos: Vec<f64> = (1..=9).map(|k| 0.1 * k as f64).collect();
    let branch = viscous_branch(&model(), 0.1, &rhos, CollocationSettings::default()).unwrap();
    assert_eq!(branch.len(), rhos.len(), "{:?}", branch.truncation);
    for p in &branch.points {
        let pred = 0.1 * p.mu1_prediction.unwrap();
        assert!((p.mu - pred).abs() <= 0.1 * 0.1 * 0.5, "ρ = {}: {} vs {pred}", p.rho, p.mu);
    }
    assert!(branch.points.windows(2).all(|w| w[1].mu > w[0].mu));
}

#[test]
fn pitchfork_shift_for_small_amplitude() {
    let eps = 0.01;
    let p = steady_collocation(&model(), eps, 0.02, CollocationSettings::default(), None).unwrap();
    assert!((p.mu * PI / eps - 1.0).abs() < 0.02, "{}", p.mu * PI / eps);
}

#[test]
fn uniform_state_is_stationary() {
    let k = model().at(0.3);
    let traj = time_step(&[1.0; 64], &k, 0.01, 0.01, 1.0, 0).unwrap();
    assert!(traj.last().iter().all(|u| (u - 1.0).abs() < 1e-14));
}

#[test]
fn relaxation_reaches_collocation_steady_state() {
    // the branch direction relaxes at a rate O(ε), hence the long horizon
    let eps = 1e-3;
    let steady = steady_collocation(&model(), eps, 0.5, CollocationSettings::default(), None).unwrap();
    let fine = PeriodicGrid::new(256).extend_even(steady.half());
    let target: Vec<f64> = (0..128).map(|j| fine[2 * j]).collect();
    let grid = PeriodicGrid::new(128);
    let u0: Vec<f64> = grid.x.iter().zip(&target).map(|(x, s)| s + 0.05 * (2.0 * x).cos()).collect();
    let traj = time_step(&u0, &model().at(steady.mu), eps, 0.04, 40_000.0, 0).unwrap();
    let d = traj.last().iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-4, "sup distance {d:e}");
}

#[test]
fn mass_is_conserved_over_many_steps() {
    let grid = PeriodicGrid::new(128);
    let u0: Vec<f64> = grid.x.iter().map(|x| 1.0 + 0.3 * x.cos() + 0.2 * (3.0 * x).sin()).collect();
    let traj = time_step(&u0, &model().at(0.2), 0.05, 0.002, 40.0, 2000).unwrap();
    assert!(traj.mass_drift <= 1e-9, "{:e}", traj.mass_drift);
    assert_eq!(traj.profiles.len(), 11);
}

#[test]
fn evenness_survives_time_stepping() {
    let grid = PeriodicGrid::new(128);
    let u0: Vec<f64> = grid.x.iter().map(|x| 1.0 + 0.6 * x.cos() + 0.1 * (2.0 * x).cos()).collect();
    let traj = time_step(&u0, &model().at(0.1), 1e-2, 0.01, 20.0, 0).unwrap();
    let u = traj.last();
    let n = u.len();
    let asym = (1..n).map(|j| (u[j] - u[n - j]).abs()).fold(0.0, f64::max);
    assert!(asym < 1e-12, "{asym:e}");
}

#[test]
fn oversized_step_is_rejected() {
    let grid = PeriodicGrid::new(256);
    let u0: Vec<f64> = grid.x.iter().map(|x| 1.0 + 0.5 * x.cos()).collect();
    let k = KernelSpec::dirac_cosine(1.0, vec![0.0, -5.0]);
    match time_step(&u0, &k, 1e-3, 1.0, 2.0, 0) {
        Err(vacua::Error::StepRejected { suggested, .. }) => assert!(suggested < 1.0),
        other => panic!("expected rejection, got {other:?}"),
    }
}

proptest! {
    #[test]
    fn lambert_inverse(log_x in (-13.8f64)..13.8, offset in 1e-6f64..1.0) {
        for x in [log_x.exp(), -(-1.0f64).exp() + offset * (1.0 - (-1.0f64).exp()) * 0.999] {
            let w = lambert_w0(x).unwrap();
            prop_assert!((w * w.exp() - x).abs() <= 1e-13 * x.abs().max(1.0));
        }
    }

    #[test]
    fn mu1_is_the_pairing_ratio(rho in 0.001f64..0.999) {
        let p = adjoint_pairings(rho).unwrap();
        prop_assert!((p.mu1() - mu1(rho).unwrap()).abs() <= 1e-12);
    }
}

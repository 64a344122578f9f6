use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use vacua::kernels::{wrap, MatrixKernelSpec};
use vacua::multispecies::{
    continue_kappa, detect_bifurcations, extrapolate_bifurcations, potential_residual, reduce_nonvacuum_block,
    system_residual, BranchLabel, KappaProblem, SystemSettings, SystemState,
};
use vacua::rank_one::{reduce_two_species, BubbleSettings};
use vacua::stability::{dispersion_system, two_species_coefficients, two_species_critical_kappas};

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

#[test]
fn mixed_state_is_steady() {
    for kappa in [-1.0, 0.0, 0.5, 2.0] {
        let (a, b) = two_species_coefficients(1.0, kappa);
        for eps in [0.0, 0.03] {
            let s = SystemState::mixed(2, 64, kappa, eps);
            let r = system_residual(&s, &a, &b, eps).unwrap();
            let worst = r.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst <= 1e-13, "{worst:e}");
            let r = potential_residual(&s, &a, &b, eps).unwrap();
            assert!(r.iter().flatten().all(|v| v.abs() <= 1e-13));
        }
    }
}

#[test]
fn linearization_matches_dispersion() {
    let (a, b) = two_species_coefficients(1.0, 0.4);
    let eps = 0.03;
    let n = 64;
    let x = grid(n);
    let k = MatrixKernelSpec::dirac_cosine(&a, &b).unwrap();
    for l in 1..=3 {
        // the residual is quadratic, so centred differences are exact up to rounding
        let h = 1e-3;
        let mut block = DMatrix::zeros(2, 2);
        for j in 0..2 {
            let perturbed = |sign: f64| {
                let mut s = SystemState::mixed(2, n, 0.4, eps);
                for (r, xr) in x.iter().enumerate() {
                    s.u[j][r] += sign * h * (l as f64 * xr).cos();
                }
                system_residual(&s, &a, &b, eps).unwrap()
            };
            let (rp, rm) = (perturbed(1.0), perturbed(-1.0));
            for i in 0..2 {
                let proj: f64 = (0..n).map(|r| (rp[i][r] - rm[i][r]) / (2.0 * h) * (l as f64 * x[r]).cos()).sum::<f64>()
                    * (2.0 * PI / n as f64)
                    / PI;
                block[(i, j)] = proj;
            }
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(block).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let oracle = dispersion_system(&k, l, eps).unwrap();
        for (e, o) in ev.iter().zip(&oracle) {
            assert!((e - o).abs() <= 1e-8, "ℓ = {l}: {e} vs {o}");
        }
    }
}

/// Block-diagonal Dirac weights so that species 1 alone forms a vacuum.
fn block_diagonal() -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[0.33, 0.1, 0.1, -0.3]),
    )
}

#[test]
fn rank_one_reduction_solves_the_system() {
    let (a, b) = block_diagonal();
    let reduced = reduce_two_species(&a, &b).unwrap();
    let sol = reduced.solve(BubbleSettings::default()).unwrap();
    let n = 1 << 17;
    let x = grid(n);
    let u1: Vec<f64> = x.iter().map(|&x| sol.vacuum_species.profile(wrap(x))).collect();
    let u2: Vec<f64> = x.iter().map(|x| 1.0 + sol.other_amplitudes[0] * x.cos()).collect();
    let s = SystemState { u: vec![u1, u2], param: 0.0, eps: 0.0 };
    let r = potential_residual(&s, &a, &b, 0.0).unwrap();
    let worst = r.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 1e-8, "{worst:e}");
    assert!(s.u[0].iter().any(|&v| v == 0.0));
}

#[test]
fn nonvacuum_reduction() {
    let (a, b) = block_diagonal();
    let k = MatrixKernelSpec::dirac_cosine(&a, &b).unwrap();
    // decoupled species: the effective kernel is V11 itself
    let decoupled = MatrixKernelSpec::dirac_cosine(&a, &DMatrix::from_row_slice(2, 2, &[0.33, 0.0, 0.0, -0.3])).unwrap();
    let eff = reduce_nonvacuum_block(&decoupled, 4).unwrap();
    for l in 0..=4 {
        assert!((eff.multipliers[l] - decoupled.block(0, 0).multiplier_unchecked(l)).abs() < 1e-15);
    }

    let (a2, b2) = two_species_coefficients(1.0, 0.5);
    let full = MatrixKernelSpec::dirac_cosine(&a2, &b2).unwrap();
    let eff = reduce_nonvacuum_block(&full, 3).unwrap();
    let s = &a2 - &b2 * PI;
    let schur = s[(0, 0)] - s[(0, 1)] * s[(1, 0)] / s[(1, 1)];
    assert!((eff.multipliers[1] - schur).abs() < 1e-13);

    // reconstruct the second species from the rank-one bubble and substitute
    let reduced = reduce_two_species(&a, &b).unwrap().solve(BubbleSettings::default()).unwrap();
    let n = 1 << 18;
    let x = grid(n);
    let u1: Vec<f64> = x.iter().map(|&x| reduced.vacuum_species.profile(wrap(x))).collect();
    let eff = reduce_nonvacuum_block(&k, n / 2).unwrap();
    let uh = eff.reconstruct(&u1).unwrap();
    let s = SystemState { u: vec![u1, uh[0].clone()], param: 0.0, eps: 0.0 };
    let r = potential_residual(&s, &a, &b, 0.0).unwrap();
    let worst = r.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 1e-9, "{worst:e}");
}

#[test]
fn singular_block_is_a_resonance() {
    // a22 - π b22 = 0 at ℓ = 1
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 1.0 / PI]);
    let k = MatrixKernelSpec::dirac_cosine(&a, &b).unwrap();
    match reduce_nonvacuum_block(&k, 3) {
        Err(vacua::Error::Resonance(msg)) => assert!(msg.contains("ℓ = 1"), "{msg}"),
        other => panic!("expected resonance, got {other:?}"),
    }
}

#[test]
fn bifurcations_extrapolate_to_determinant_roots() {
    for a12 in [1.0, 0.8] {
        let (a, b) = two_species_coefficients(a12, 0.0);
        let ks = extrapolate_bifurcations(&a, &b, (-1.0, 1.5), (0.03, 0.015), 32).unwrap();
        let (jc, seg) = two_species_critical_kappas(a12);
        assert_eq!(ks.len(), 2);
        assert!((ks[0] - seg).abs() <= 1e-3, "a12 = {a12}: {} vs {seg}", ks[0]);
        assert!((ks[1] - jc).abs() <= 1e-3, "a12 = {a12}: {} vs {jc}", ks[1]);
    }
    let (jc, seg) = two_species_critical_kappas(1.0);
    assert!((jc - 0.90392).abs() < 1e-5 && (seg + 0.26731).abs() < 1e-5);
    let (jc, seg) = two_species_critical_kappas(0.8);
    assert!((jc - 0.8403).abs() < 1e-4 && (seg + 0.3310).abs() < 1e-4);
}

#[test]
fn viscous_shift_is_first_order() {
    let (a, b) = two_species_coefficients(1.0, 0.0);
    let (jc, _) = two_species_critical_kappas(1.0);
    let shift = |eps: f64| {
        let p = KappaProblem::new(a.clone(), b.clone(), eps, 32).unwrap();
        detect_bifurcations(&p, (0.5, 1.5), 200).unwrap()[0].kappa - jc
    };
    let (s1, s2) = (shift(0.02), shift(0.01));
    assert!(s1 > 0.0 && s2 > 0.0);
    assert!((s1 / s2 - 2.0).abs() < 0.05, "{}", s1 / s2);
}

#[test]
fn branches_cluster_and_segregate() {
    let (a, b) = two_species_coefficients(1.0, 0.0);
    let branches = continue_kappa(&a, &b, (-0.8, 1.4), 0.03, SystemSettings::default()).unwrap();
    assert_eq!(branches.len(), 2);
    for br in &branches {
        assert!(br.branch.len() > 10, "{:?}: {:?}", br.label, br.branch.truncation);
        let last = br.branch.points.last().unwrap();
        let m = last.profiles[0].len();
        let argmax = |u: &[f64]| (0..m).max_by(|&i, &j| u[i].total_cmp(&u[j])).unwrap();
        let (p1, p2) = (argmax(&last.profiles[0]), argmax(&last.profiles[1]));
        match br.label {
            BranchLabel::Segregation => {
                assert!(br.bifurcation.kappa < 0.0 && last.kappa < br.bifurcation.kappa);
                assert_eq!((p1, p2), (0, m - 1));
            }
            BranchLabel::JointClustering => {
                assert!(br.bifurcation.kappa > 0.0 && last.kappa > br.bifurcation.kappa);
                assert_eq!((p1, p2), (0, 0));
            }
        }
        // the species with the unit e0 component thins out first
        let lead = if br.bifurcation.e0[0].abs() >= br.bifurcation.e0[1].abs() { 0 } else { 1 };
        assert!(last.minima[lead] < last.minima[1 - lead], "{:?}: {:?}", br.label, last.minima);
        for pt in &br.branch.points {
            for u in &pt.profiles {
                let w: f64 = (0..m).map(|r| if r == 0 || r == m - 1 { 0.5 } else { 1.0 } * u[r]).sum::<f64>()
                    * (PI / (m - 1) as f64);
                assert!((w - PI).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn swap_symmetry_of_segregated_states() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let b = DMatrix::from_row_slice(2, 2, &[-0.3, 0.0, 0.0, -0.3]);
    let branches = continue_kappa(&a, &b, (-1.0, -0.3), 0.03, SystemSettings::default()).unwrap();
    let seg = branches.iter().find(|b| b.label == BranchLabel::Segregation).unwrap();
    let last = seg.branch.points.last().unwrap();
    let m = last.profiles[0].len();
    assert!(last.amplitudes[0] > 0.1);
    for r in 0..m {
        assert!((last.profiles[1][r] - last.profiles[0][m - 1 - r]).abs() < 1e-8);
    }
}

use std::f64::consts::PI;

use vacua::continuation::{Branch, NewtonSettings};
use vacua::free_boundary::{extract_expansion, Formulation, newton_continue, residual_norm, ExtendedState, FreeBoundaryProblem};
use vacua::kernels::{KernelSpec, LinearFamily};
use vacua::rank_one::{amplitudes_for_support, solve_bubble, BubbleSettings};

fn settings() -> NewtonSettings {
    NewtonSettings { tol: 1e-10, ..NewtonSettings::default() }
}

fn a0_grid(count: usize, max: f64) -> Vec<f64> {
    (1..=count).map(|k| 1.0 + max * k as f64 / count as f64).collect()
}

fn fig3_family() -> LinearFamily {
    LinearFamily::new(
        KernelSpec::dirac_cosine(1.0, vec![0.0, -1.0 / PI, 3.0 / 20.0, 1.0 / 10.0]),
        KernelSpec::dirac_cosine(0.0, vec![0.0, -1.0]),
    )
}

/// Least-squares fit of `log(π - L) = log c + p log μ` over `μ ∈ [lo, hi]`.
fn gap_fit(points: impl Iterator<Item = (f64, f64)>, lo: f64, hi: f64) -> (f64, f64, usize) {
    let data: Vec<(f64, f64)> =
        points.filter(|(mu, _)| *mu >= lo && *mu <= hi).map(|(mu, l)| (mu.ln(), (PI - l).ln())).collect();
    let n = data.len() as f64;
    let (sx, sy) = data.iter().fold((0.0, 0.0), |a, (x, y)| (a.0 + x, a.1 + y));
    let (mx, my) = (sx / n, sy / n);
    let sxy: f64 = data.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = data.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let p = sxy / sxx;
    ((my - p * mx).exp(), p, data.len())
}

fn cosine_branch() -> (FreeBoundaryProblem, Branch<ExtendedState>) {
    let p = FreeBoundaryProblem::new(LinearFamily::dirac_cosine_model(), 512).unwrap();
    let branch = newton_continue(&p, &a0_grid(20, 0.1), settings()).unwrap();
    assert!(branch.truncation.is_none(), "{:?}", branch.truncation);
    (p, branch)
}

#[test]
fn cosine_branch_expansion() {
    let (p, branch) = cosine_branch();
    for s in &branch.points {
        assert!((s.l * s.a0 - PI).abs() < 1e-10);
        assert!(residual_norm(&p, s).unwrap() <= 1e-10);
    }
    let e = extract_expansion(&p, &branch).unwrap();
    assert!((e.a1_1 + 0.5).abs() <= 0.005, "{}", e.a1_1);
    assert!((e.l_1 + PI).abs() <= 1e-3 * PI);
    assert!((e.mu_3 - 2.0 * PI / 3.0).abs() <= 0.02 * 2.0 * PI / 3.0, "{}", e.mu_3);
    assert!(e.mu_1.abs() <= 1e-3 && e.mu_2.abs() <= 1e-3);
    assert!((e.a1_2 - (3.0 + 4.0 * PI * PI) / 12.0).abs() <= 0.01 * 3.54);
    // ρ = 1 + O(ν³) along this branch
    assert!(e.rho_1.abs() <= 1e-3);
    let vh1_err = p
        .grid
        .z
        .iter()
        .zip(&e.v_h1)
        .map(|(z, v)| (v - (-1.0 + 0.5 * z.cos() + z * z.sin())).abs())
        .fold(0.0, f64::max);
    assert!(vh1_err <= 1e-3, "{vh1_err}");
}

#[test]
fn cosine_branch_matches_rank_one() {
    let (p, branch) = cosine_branch();
    for s in branch.points.iter().step_by(4) {
        let (a0, a1) = amplitudes_for_support(s.l);
        let r = solve_bubble(s.mu, (a0, a1, s.l), BubbleSettings::default()).unwrap();
        assert!((r.l - s.l).abs() < 1e-9);
        let dist = (0..=2000)
            .map(|i| {
                let x = -PI + 2.0 * PI * i as f64 / 2000.0;
                (s.density(&p.grid, x).0 - r.profile(x)).abs()
            })
            .fold(0.0, f64::max);
        assert!(dist <= 1e-8, "A0 = {}: {dist}", s.a0);
    }
}

#[test]
fn weak_form_on_free_boundary_profiles() {
    let (p, branch) = cosine_branch();
    for s in branch.points.iter().step_by(5) {
        let check = p.weak_check(s, 2048);
        assert!(check.max_on_support <= 1e-7, "A0 = {}: {}", s.a0, check.max_on_support);
    }
}

#[test]
fn grid_refinement() {
    let a0 = [1.02, 1.04, 1.06];
    let coarse = newton_continue(&FreeBoundaryProblem::new(fig3_family(), 200).unwrap(), &a0, settings()).unwrap();
    let fine = newton_continue(&FreeBoundaryProblem::new(fig3_family(), 399).unwrap(), &a0, settings()).unwrap();
    for (c, f) in coarse.points.iter().zip(&fine.points) {
        assert!((c.mu - f.mu).abs() <= 1e-8, "{} vs {}", c.mu, f.mu);
    }
}

#[test]
fn harmonics_keep_the_gap_law() {
    let p = FreeBoundaryProblem::new(fig3_family(), 256).unwrap();
    let branch = newton_continue(&p, &a0_grid(40, 0.1), settings()).unwrap();
    assert!(branch.truncation.is_none());
    // vertical-then-vacuum: μ increases with the vacuum size
    assert!(branch.points.windows(2).all(|w| w[1].mu > w[0].mu && w[1].l < w[0].l));
    let (c, pw, used) = gap_fit(branch.points.iter().map(|s| (s.mu, s.l)), 1e-5, 1e-3);
    assert!(used >= 8);
    assert!((pw - 1.0 / 3.0).abs() <= 0.02, "p = {pw}");
    assert!((c - 2.4554).abs() <= 0.05 * 2.4554, "c = {c}");
    let e = extract_expansion(&p, &branch).unwrap();
    assert!((e.a1_1 + 0.5).abs() <= 0.01 && (e.mu_3 - 2.0 * PI / 3.0).abs() <= 0.02 * 2.0944);
}

/// Bessel `β = 1` bubbles are `P + Q cos x` on `[-L, L]`. Closed-form conditions:
/// self-consistency, mass, and continuity of `G * u` with the `cosh` profile outside.
fn green_bubble_residual(eta: f64, l: f64, x: [f64; 3]) -> [f64; 3] {
    let [p, q, mu] = x;
    let (s, c) = l.sin_cos();
    let k = 1.0 + eta * eta;
    let f = p + q / k * c;
    let df = -q / k * s;
    [q - mu * k * (2.0 * p * s + q * (l + s * c)), p * l + q * s - PI, df + f / eta * ((PI - l) / eta).tanh()]
}

/// Solve for `(P, Q, μ)` at a given `L`.
fn solve_green_bubble(eta: f64, l: f64, mut x: [f64; 3]) -> [f64; 3] {
    for _ in 0..50 {
        let r = green_bubble_residual(eta, l, x);
        if r.iter().all(|r| r.abs() < 1e-13) {
            break;
        }
        let mut j = nalgebra::Matrix3::zeros();
        for k in 0..3 {
            let h = 1e-7;
            let mut xp = x;
            xp[k] += h;
            let mut xm = x;
            xm[k] -= h;
            let (rp, rm) = (green_bubble_residual(eta, l, xp), green_bubble_residual(eta, l, xm));
            for i in 0..3 {
                j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let dx = j.lu().solve(&nalgebra::Vector3::from(r)).unwrap();
        for k in 0..3 {
            x[k] -= dx[k];
        }
    }
    x
}

#[test]
fn smoothed_repulsion_branch() {
    let eta = 0.5;
    let p = FreeBoundaryProblem::new(LinearFamily::smoothed_model(eta, 1.0), 256).unwrap();
    assert_eq!(p.formulation, Formulation::Resolvent);
    let base = p.base_state().unwrap();
    assert!((base.mu - 1.0 / (PI * 1.25)).abs() < 1e-12);
    let branch = newton_continue(&p, &a0_grid(40, 0.2), settings()).unwrap();
    assert!(branch.truncation.is_none(), "{:?}", branch.truncation);
    for s in branch.points.iter().step_by(5) {
        let u0 = s.density(&p.grid, 0.0).0;
        let [pp, q, mu] = solve_green_bubble(eta, s.l, [s.rho, u0 - s.rho, s.mu]);
        assert!((mu - s.mu).abs() < 1e-10 && (pp - s.rho).abs() < 1e-8, "A0 = {}: {mu} vs {}", s.a0, s.mu);
        let dist = (0..=400)
            .map(|i| {
                let x = -0.999 * s.l + 1.998 * s.l * i as f64 / 400.0;
                (s.density(&p.grid, x).0 - (pp + q * x.cos())).abs()
            })
            .fold(0.0, f64::max);
        assert!(dist < 1e-8, "{dist}");
        assert!(s.v.iter().all(|v| *v > 0.0));
        let check = p.weak_check(s, 2048);
        assert!(check.max_on_support <= 1e-7, "{}", check.max_on_support);
    }
    // Bubbles with a jump at the edge: μ - μ* grows like (π - L)⁵ in the closed form,
    // so the gap exponent is 1/5 rather than 1/3.
    let excess = |delta: f64| {
        let l = PI - delta;
        let (a0, a1) = amplitudes_for_support(l);
        solve_green_bubble(eta, l, [a0, a1, base.mu])[2] - base.mu
    };
    let order = (excess(0.02) / excess(0.01)).log2();
    assert!((order - 5.0).abs() < 0.1, "{order}");
    let (_, pw, used) = gap_fit(branch.points.iter().map(|s| ((s.mu - base.mu).abs(), s.l)), 1e-6, 1e-2);
    assert!(used >= 8);
    assert!((pw - 0.2).abs() <= 0.03, "p = {pw}");
}

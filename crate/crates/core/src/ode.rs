//! Adaptive Dormand–Prince 5(4) integrator for autonomous systems `y' = f(y)`.

use crate::error::{Error, Result};

/// Stage coefficients; the last row holds the fifth-order weights (first same as last).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Difference between fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    /// Bound on the max-norm local error estimate of each accepted step.
    pub tol: f64,
    pub initial_dt: f64,
    pub max_dt: f64,
    pub min_dt: f64,
    pub max_steps: usize,
}

impl StepControl {
    pub fn new(tol: f64) -> Self {
        Self { tol, initial_dt: 1e-3, max_dt: f64::INFINITY, min_dt: 1e-14, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrate from `t0` to `t_end`, calling `observe(t, y)` after every accepted step
/// (and once at `t0`). `observe` may abort the run by returning an error.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    control: StepControl,
    mut observe: O,
) -> Result<(Vec<f64>, IntegrationStats)>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> Result<()>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut stats = IntegrationStats::default();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(&y, &mut k[0])?;
    stats.evaluations += 1;
    observe(t, &y)?;
    let mut dt = control.initial_dt.min(control.max_dt).min(t_end - t0);
    while t < t_end {
        if stats.accepted + stats.rejected >= control.max_steps {
            return Err(Error::Integration { t, reason: "step budget exhausted".into(), last_state: y });
        }
        let last = t + dt >= t_end;
        let h = if last { t_end - t } else { dt };
        for s in 1..7 {
            for i in 0..n {
                stage[i] = y[i] + h * (0..s).map(|r| A[s][r] * k[r][i]).sum::<f64>();
            }
            f(&stage, &mut k[s])?;
            stats.evaluations += 1;
            if s == 6 {
                y_new.copy_from_slice(&stage);
            }
        }
        let err = (0..n)
            .map(|i| (h * (0..7).map(|r| E[r] * k[r][i]).sum::<f64>()).abs())
            .fold(0.0f64, f64::max);
        if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
            dt = 0.25 * h;
        } else if err <= control.tol {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            let k6 = k[6].clone();
            k[0].copy_from_slice(&k6);
            stats.accepted += 1;
            observe(t, &y)?;
            let factor = if err == 0.0 { 5.0 } else { (0.9 * (control.tol / err).powf(0.2)).clamp(0.2, 5.0) };
            dt = (h * factor).min(control.max_dt);
            continue;
        } else {
            stats.rejected += 1;
            dt = h * (0.9 * (control.tol / err).powf(0.2)).clamp(0.1, 0.9);
        }
        if dt < control.min_dt {
            return Err(Error::Integration {
                t,
                reason: format!("step size {dt:.3e} fell below {:.1e}", control.min_dt),
                last_state: y,
            });
        }
    }
    Ok((y, stats))
}

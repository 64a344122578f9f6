//! Dense Newton solves and pseudo-arclength continuation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Ordered points along a solution branch, with the reason the branch stopped early
/// (if it did).
#[derive(Debug, Clone, Serialize)]
pub struct Branch<P> {
    pub points: Vec<P>,
    pub truncation: Option<String>,
}

impl<P> Branch<P> {
    pub fn new() -> Self {
        Self { points: Vec::new(), truncation: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl<P> Default for Branch<P> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest allowed step norm relative to the state norm; longer steps are damped.
    pub max_relative_step: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 30, max_relative_step: f64::INFINITY }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub history: Vec<f64>,
}

pub fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Newton iteration on `F(x) = 0`, `eval` returning the residual and Jacobian.
/// Converges when the residual sup-norm drops below `settings.tol`.
pub fn newton<F>(mut x: DVector<f64>, settings: NewtonSettings, mut eval: F) -> Result<NewtonOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let mut history = Vec::new();
    for it in 0..=settings.max_iter {
        let (r, j) = eval(&x)?;
        let rn = sup_norm(&r);
        history.push(rn);
        if !rn.is_finite() {
            break;
        }
        if rn <= settings.tol {
            return Ok(NewtonOutcome { x, iterations: it, history });
        }
        if it == settings.max_iter {
            break;
        }
        let mut dx = j
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::SingularMatrix(format!("Newton Jacobian singular at iteration {it}")))?;
        let limit = settings.max_relative_step * x.norm().max(1.0);
        let len = dx.norm();
        if len > limit {
            dx *= limit / len;
        }
        x -= dx;
    }
    Err(Error::NoConvergence { iterations: history.len(), history })
}

/// Problem `F(x, p) = 0` with state `x` and scalar parameter `p`.
pub trait ContinuationProblem {
    fn residual(&self, x: &DVector<f64>, p: f64) -> Result<DVector<f64>>;

    /// Jacobian with respect to `x` and the parameter derivative. The default uses
    /// centred differences.
    fn jacobian(&self, x: &DVector<f64>, p: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = x.len();
        let mut jx = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = 1e-7 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let col = (self.residual(&xp, p)? - self.residual(&xm, p)?) / (2.0 * h);
            jx.set_column(k, &col);
        }
        let h = 1e-7 * p.abs().max(1.0);
        let jp = (self.residual(x, p + h)? - self.residual(x, p - h)?) / (2.0 * h);
        Ok((jx, jp))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PalcSettings {
    pub step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_points: usize,
    pub tol: f64,
    pub max_newton: usize,
    /// Stop once the parameter leaves this interval.
    pub param_range: (f64, f64),
}

impl Default for PalcSettings {
    fn default() -> Self {
        Self {
            step: 1e-2,
            min_step: 1e-7,
            max_step: 1e-1,
            max_points: 200,
            tol: 1e-10,
            max_newton: 12,
            param_range: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PalcPoint {
    pub x: DVector<f64>,
    pub p: f64,
    /// Tangent `(ẋ, ṗ)` of unit length.
    pub tangent: DVector<f64>,
    /// Sign of `det ∂F/∂x`; a change between neighbours flags a bifurcation.
    pub det_sign: f64,
    /// Set when `ṗ` changed sign since the previous point.
    pub fold: bool,
}

fn bordered(jx: &DMatrix<f64>, jp: &DVector<f64>, t: &DVector<f64>) -> DMatrix<f64> {
    let n = jx.nrows();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n)).copy_from(jx);
    a.view_mut((0, n), (n, 1)).copy_from(jp);
    for k in 0..=n {
        a[(n, k)] = t[k];
    }
    a
}

/// Unit tangent of the solution curve at `(x, p)`, oriented along `previous`.
pub fn tangent<P: ContinuationProblem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    p: f64,
    previous: &DVector<f64>,
) -> Result<DVector<f64>> {
    let (jx, jp) = problem.jacobian(x, p)?;
    let n = x.len();
    let a = bordered(&jx, &jp, previous);
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let t = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularMatrix("tangent system singular".into()))?;
    Ok(t.normalize())
}

fn det_sign(jx: &DMatrix<f64>) -> f64 {
    let d = jx.clone().lu().determinant();
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Pseudo-arclength continuation from a solution `(x0, p0)` along the initial
/// direction `t0` (need not be normalized). The start point is included in the
/// output. The corrector solves `F = 0` together with `t·(y - y_pred) = 0`; failed
/// correctors halve the step until `min_step`.
pub fn pseudo_arclength<P: ContinuationProblem + ?Sized>(
    problem: &P,
    x0: DVector<f64>,
    p0: f64,
    t0: DVector<f64>,
    settings: PalcSettings,
) -> Result<Branch<PalcPoint>> {
    let n = x0.len();
    let mut branch = Branch::new();
    let (jx0, _) = problem.jacobian(&x0, p0)?;
    let mut t = t0.normalize();
    branch.points.push(PalcPoint { x: x0.clone(), p: p0, tangent: t.clone(), det_sign: det_sign(&jx0), fold: false });
    let mut y = x0.clone().insert_row(n, p0);
    let mut ds = settings.step;

    while branch.points.len() < settings.max_points {
        let pred = &y + &t * ds;
        let mut z = pred.clone();
        let mut converged = false;
        for _ in 0..settings.max_newton {
            let x = z.rows(0, n).into_owned();
            let p = z[n];
            let r = problem.residual(&x, p)?;
            let mut full = r.clone().insert_row(n, t.dot(&(&z - &pred)));
            if sup_norm(&full) <= settings.tol {
                converged = true;
                break;
            }
            let (jx, jp) = problem.jacobian(&x, p)?;
            let a = bordered(&jx, &jp, &t);
            match a.lu().solve(&full) {
                Some(dz) => {
                    full = dz;
                    z -= &full;
                }
                None => break,
            }
            if !z.iter().all(|v| v.is_finite()) {
                break;
            }
        }
        if !converged {
            ds *= 0.5;
            if ds.abs() < settings.min_step {
                branch.truncation = Some(format!(
                    "corrector failed at p = {:.6e} with step below {:.1e}",
                    y[n], settings.min_step
                ));
                break;
            }
            continue;
        }
        let x = z.rows(0, n).into_owned();
        let p = z[n];
        let t_new = tangent(problem, &x, p, &t)?;
        let (jx, _) = problem.jacobian(&x, p)?;
        let fold = t_new[n].signum() != t[n].signum() && t[n] != 0.0;
        branch.points.push(PalcPoint { x, p, tangent: t_new.clone(), det_sign: det_sign(&jx), fold });
        y = z;
        t = t_new;
        if p < settings.param_range.0 || p > settings.param_range.1 {
            break;
        }
        ds = (ds * 1.3).min(settings.max_step);
    }
    Ok(branch)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// x² + p² = 1: a circle, with folds at p = ±1.
    struct Circle;

    impl ContinuationProblem for Circle {
        fn residual(&self, x: &DVector<f64>, p: f64) -> Result<DVector<f64>> {
            Ok(DVector::from_vec(vec![x[0] * x[0] + p * p - 1.0]))
        }
    }

    #[test]
    fn newton_solves_scalar_root() {
        let out = newton(DVector::from_vec(vec![1.0]), NewtonSettings::default(), |x| {
            Ok((DVector::from_vec(vec![x[0] * x[0] - 2.0]), DMatrix::from_element(1, 1, 2.0 * x[0])))
        })
        .unwrap();
        assert!((out.x[0] - 2f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn newton_reports_history_on_failure() {
        let err = newton(DVector::from_vec(vec![0.7]), NewtonSettings { max_iter: 3, ..Default::default() }, |x| {
            Ok((DVector::from_vec(vec![x[0] * x[0] + 1.0]), DMatrix::from_element(1, 1, 2.0 * x[0])))
        })
        .unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    #[test]
    fn palc_passes_a_fold() {
        let settings = PalcSettings { step: 0.05, max_step: 0.1, max_points: 60, ..Default::default() };
        let branch = pseudo_arclength(
            &Circle,
            DVector::from_vec(vec![1.0]),
            0.0,
            DVector::from_vec(vec![0.0, 1.0]),
            settings,
        )
        .unwrap();
        assert!(branch.points.iter().any(|pt| pt.fold));
        assert!(branch.points.iter().any(|pt| pt.x[0] < -0.5));
        for pt in &branch.points {
            assert!((pt.x[0].powi(2) + pt.p.powi(2) - 1.0).abs() < 1e-9);
        }
    }
}

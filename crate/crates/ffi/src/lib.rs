//! C interface to the vacua solvers.
//!
//! Every function returns a [`VacuaStatus`]; results are written through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`vacua_last_error`]. Handles are opaque and must be released with their
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vacua::continuation::Branch;
use vacua::kernels::LinearFamily;
use vacua::rank_one::{self, BubbleSolution, GapFit};
use vacua::stability::{two_species_coefficients, two_species_critical_kappas};
use vacua::viscous::{self, CollocationSettings, ViscousProfile};
use vacua::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VacuaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    NoConvergence = 4,
    Hypothesis = 5,
    Resonance = 6,
    OutOfRange = 7,
    Solver = 8,
    Panic = 9,
}

/// Rank-one vacuum bubble `(A₀ + A₁ cos x)₊` supported on `[-L, L]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VacuaBubble {
    pub a0: f64,
    pub a1: f64,
    pub l: f64,
    pub rho: f64,
    pub mu: f64,
}

impl From<&BubbleSolution> for VacuaBubble {
    fn from(s: &BubbleSolution) -> Self {
        Self { a0: s.a0, a1: s.a1, l: s.l, rho: s.rho, mu: s.mu }
    }
}

/// Opaque branch of rank-one bubbles.
pub struct VacuaBubbleBranch {
    branch: Branch<BubbleSolution>,
    fit: Option<GapFit>,
}

/// Opaque viscous steady state on `[-π, π]`.
pub struct VacuaViscousProfile {
    profile: ViscousProfile,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> VacuaStatus {
    match e {
        Error::InvalidArgument(_) => VacuaStatus::InvalidArgument,
        Error::Domain(_) => VacuaStatus::Domain,
        Error::NoConvergence { .. } => VacuaStatus::NoConvergence,
        Error::Hypothesis(_) | Error::Bracket { .. } => VacuaStatus::Hypothesis,
        Error::Resonance(_) => VacuaStatus::Resonance,
        Error::OutOfRange { .. } => VacuaStatus::OutOfRange,
        _ => VacuaStatus::Solver,
    }
}

struct Fail(VacuaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VacuaStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VacuaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            VacuaStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            VacuaStatus::Panic
        }
    }
}

fn write<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: checked non-null; the caller provides a writable location.
    unsafe { out.write(v) };
    Ok(())
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the buffer size needed for the full message.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vacua_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Principal branch of the Lambert W function, `x ≥ -1/e`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn vacua_lambert_w0(x: f64, out: *mut f64) -> VacuaStatus {
    guard(|| write(out, viscous::lambert_w0(x)?, "out"))
}

/// First-order viscous shift `μ₁(ρ)`, `0 < |ρ| < 1`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn vacua_mu1(rho: f64, out: *mut f64) -> VacuaStatus {
    guard(|| write(out, viscous::mu1(rho)?, "out"))
}

/// Leading-order support half-width `π - (3π²/2)^{1/3} μ^{1/3}`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn vacua_asymptotic_l(mu: f64, out: *mut f64) -> VacuaStatus {
    guard(|| write(out, rank_one::asymptotic_l(mu)?, "out"))
}

/// Rank-one bubble at `μ > 0`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn vacua_solve_bubble(mu: f64, out: *mut VacuaBubble) -> VacuaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let b = rank_one::sweep_branch(&[mu], Default::default())?;
        match b.points.first() {
            Some(s) => write(out, s.into(), "out"),
            None => Err(Fail(VacuaStatus::NoConvergence, b.truncation.unwrap_or_default())),
        }
    })
}

/// Branch over `count ≥ 2` log-spaced `μ` in `[mu_min, mu_max]`.
///
/// # Safety
/// `out` must be null or writable; the handle is released with
/// [`vacua_bubble_branch_free`].
#[no_mangle]
pub unsafe extern "C" fn vacua_bubble_sweep(
    mu_min: f64,
    mu_max: f64,
    count: usize,
    out: *mut *mut VacuaBubbleBranch,
) -> VacuaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if count < 2 || !(mu_min > 0.0 && mu_max > mu_min) {
            return Err(Fail(VacuaStatus::InvalidArgument, "need 0 < mu_min < mu_max and count ≥ 2".into()));
        }
        let branch = rank_one::sweep_branch(&rank_one::log_spaced(mu_min, mu_max, count), Default::default())?;
        let fit = rank_one::fit_gap_law(&branch.points.iter().map(|s| (s.mu, s.l)).collect::<Vec<_>>()).ok();
        write(out, Box::into_raw(Box::new(VacuaBubbleBranch { branch, fit })), "out")
    })
}

/// Number of converged points (fewer than requested if the branch was truncated).
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vacua_bubble_branch_len(h: *const VacuaBubbleBranch) -> usize {
    h.as_ref().map_or(0, |h| h.branch.len())
}

/// Point `i` of the branch.
///
/// # Safety
/// `h` must be null or a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn vacua_bubble_branch_get(
    h: *const VacuaBubbleBranch,
    i: usize,
    out: *mut VacuaBubble,
) -> VacuaStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let s = h.branch.points.get(i).ok_or_else(|| {
            Fail(VacuaStatus::OutOfRange, format!("index {i} beyond branch length {}", h.branch.len()))
        })?;
        write(out, s.into(), "out")
    })
}

/// Least-squares fit `π - L = c μ^p` over the whole branch.
///
/// # Safety
/// `h` must be null or a live handle; `c` and `p` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn vacua_bubble_branch_gap_fit(
    h: *const VacuaBubbleBranch,
    c: *mut f64,
    p: *mut f64,
) -> VacuaStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        let fit = h.fit.ok_or_else(|| Fail(VacuaStatus::Solver, "branch too short for a fit".into()))?;
        write(c, fit.c, "c")?;
        write(p, fit.p, "p")
    })
}

/// # Safety
/// `h` must be null or a handle from [`vacua_bubble_sweep`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vacua_bubble_branch_free(h: *mut VacuaBubbleBranch) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Viscous steady state of `δ - (1/π + μ) cos x` with cosine moment `ρπ`,
/// `0 < ρ < 2`, on an even grid of `n ≥ 256` points.
///
/// # Safety
/// `out` must be null or writable; the handle is released with
/// [`vacua_viscous_profile_free`].
#[no_mangle]
pub unsafe extern "C" fn vacua_viscous_profile_new(
    rho: f64,
    eps: f64,
    n: usize,
    out: *mut *mut VacuaViscousProfile,
) -> VacuaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let settings = CollocationSettings { n, ..Default::default() };
        let profile = viscous::steady_collocation(&LinearFamily::dirac_cosine_model(), eps, rho, settings, None)?;
        write(out, Box::into_raw(Box::new(VacuaViscousProfile { profile })), "out")
    })
}

/// Number of stored samples (`n + 1`, both endpoints included).
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vacua_viscous_profile_len(h: *const VacuaViscousProfile) -> usize {
    h.as_ref().map_or(0, |h| h.profile.u.len())
}

/// Copy grid and values into caller buffers of length `len`, which must equal
/// [`vacua_viscous_profile_len`]. Either buffer may be null.
///
/// # Safety
/// Non-null buffers must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn vacua_viscous_profile_copy(
    h: *const VacuaViscousProfile,
    x: *mut f64,
    u: *mut f64,
    len: usize,
) -> VacuaStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("handle"))?;
        if len != h.profile.u.len() {
            return Err(Fail(VacuaStatus::InvalidArgument, format!("buffer length {len}, need {}", h.profile.u.len())));
        }
        if !x.is_null() {
            ptr::copy_nonoverlapping(h.profile.x.as_ptr(), x, len);
        }
        if !u.is_null() {
            ptr::copy_nonoverlapping(h.profile.u.as_ptr(), u, len);
        }
        Ok(())
    })
}

/// Parameter `μ` selected by the constraint.
///
/// # Safety
/// `h` must be null or a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn vacua_viscous_profile_mu(h: *const VacuaViscousProfile, out: *mut f64) -> VacuaStatus {
    guard(|| write(out, h.as_ref().ok_or_else(|| null("handle"))?.profile.mu, "out"))
}

/// # Safety
/// `h` must be null or a handle from [`vacua_viscous_profile_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vacua_viscous_profile_free(h: *mut VacuaViscousProfile) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Roots of `det(a - πb(κ)) = 0` for Dirac weights `[[0.8, a12], [a12, 1]]` and
/// cosine amplitudes `[[-0.3, κ], [κ, -0.3]]`: joint clustering and segregation.
///
/// # Safety
/// `jc` and `seg` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn vacua_two_species_critical_kappas(a12: f64, jc: *mut f64, seg: *mut f64) -> VacuaStatus {
    guard(|| {
        let (j, s) = two_species_critical_kappas(a12);
        write(jc, j, "jc")?;
        write(seg, s, "seg")
    })
}

/// Bifurcation points of the same system detected at viscosities `eps1`, `eps2`
/// on an `n`-point grid and extrapolated to zero viscosity, in increasing order.
/// `out` receives up to `cap` values; `count` receives the number found.
///
/// # Safety
/// `out` must be null or hold `cap` writable doubles; `count` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn vacua_two_species_bifurcations(
    a12: f64,
    eps1: f64,
    eps2: f64,
    n: usize,
    out: *mut f64,
    cap: usize,
    count: *mut usize,
) -> VacuaStatus {
    guard(|| {
        let (a, b) = two_species_coefficients(a12, 0.0);
        let ks = vacua::multispecies::extrapolate_bifurcations(&a, &b, (-1.0, 1.5), (eps1, eps2), n)?;
        write(count, ks.len(), "count")?;
        if !out.is_null() {
            ptr::copy_nonoverlapping(ks.as_ptr(), out, ks.len().min(cap));
        }
        Ok(())
    })
}

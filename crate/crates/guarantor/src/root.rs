//! Scalar root bracketing/bisection and golden-section maximization.

use crate::error::{Result, SolverError};

#[derive(Debug, Clone, Copy)]
pub struct RootCfg {
    /// Stop when |f| falls below this.
    pub f_tol: f64,
    /// Stop when the bracket is narrower than this (absolute, in x).
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for RootCfg {
    fn default() -> Self {
        RootCfg { f_tol: 1e-10, x_tol: 1e-14, max_iter: 200 }
    }
}

/// Bisection on `[a, b]`; requires a sign change.
pub fn bisect(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, cfg: &RootCfg, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() {
        return Err(SolverError::non_convergent(what, "NaN at bracket endpoint"));
    }
    if flo.signum() == fhi.signum() {
        return Err(SolverError::BracketFailure { what: what.to_string() });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..cfg.max_iter {
        mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || fm.abs() <= cfg.f_tol || (hi - lo) <= cfg.x_tol * (1.0 + mid.abs()) {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        let _ = fhi;
    }
    Ok(mid)
}

/// Find a sign-change bracket for a decreasing function of `ln x`, expanding
/// geometrically from `x0` in both directions, then bisect in log space.
///
/// The bracket hunt is capped at `[1e-30, 1e30]`.
pub fn solve_decreasing_log(
    f: &mut dyn FnMut(f64) -> f64,
    x0: f64,
    cfg: &RootCfg,
    what: &str,
) -> Result<f64> {
    let lo_cap = 1e-30_f64.ln();
    let hi_cap = 1e30_f64.ln();
    let mut t = x0.ln().clamp(lo_cap, hi_cap);
    let mut ft = f(t.exp());
    if ft == 0.0 {
        return Ok(t.exp());
    }
    // decreasing in t: positive residual means the root is to the right
    let step = 0.7_f64;
    let (mut lo, mut hi, mut flo);
    if ft > 0.0 {
        lo = t;
        flo = ft;
        loop {
            t = (t + step.max((t.abs() + 1.0) * 0.5)).min(hi_cap);
            ft = f(t.exp());
            if ft <= 0.0 {
                hi = t;
                break;
            }
            lo = t;
            flo = ft;
            if t >= hi_cap {
                return Err(SolverError::BracketFailure { what: what.to_string() });
            }
        }
    } else {
        hi = t;
        loop {
            t = (t - step.max((t.abs() + 1.0) * 0.5)).max(lo_cap);
            ft = f(t.exp());
            if ft > 0.0 {
                lo = t;
                flo = ft;
                break;
            }
            hi = t;
            if t <= lo_cap {
                return Err(SolverError::BracketFailure { what: what.to_string() });
            }
        }
    }
    let _ = flo;
    // converge on log-interval width only: that is relative accuracy in x,
    // independent of the residual's scale
    let width_cfg = RootCfg { f_tol: 0.0, ..*cfg };
    let mut g = |t: f64| f(t.exp());
    let t_root = bisect(&mut g, lo, hi, &width_cfg, what)?;
    Ok(t_root.exp())
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximization of a unimodal-ish function on `[a, b]`.
///
/// Ties and plateaus resolve toward the right end of the interval.
pub fn golden_max(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, x_tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (hi - lo) > x_tol {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (lo + hi);
    (xm, f(xm))
}

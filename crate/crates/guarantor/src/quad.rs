//! Adaptive Gauss-Kronrod quadrature (7-15 pair).
//!
//! Globally adaptive: the segment with the largest error estimate is split
//! until the summed error meets the tolerance or the segment budget runs out.

use crate::error::{Result, SolverError};

// 15-point Kronrod abscissae (positive half) with the embedded 7-point Gauss rule.
const XK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadCfg {
    /// Relative tolerance on the integral value.
    pub rel_tol: f64,
    /// Absolute tolerance floor, applied when the integral is near zero.
    pub abs_tol: f64,
    /// Maximum number of segments before giving up.
    pub max_segments: usize,
}

impl Default for QuadCfg {
    fn default() -> Self {
        QuadCfg { rel_tol: 1e-9, abs_tol: 1e-14, max_segments: 4000 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<Segment> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut ik = 0.0;
    let mut ig = 0.0;
    for (i, (&x, &wk)) in XK.iter().zip(WK.iter()).enumerate() {
        let (lo, hi) = (mid - half * x, mid + half * x);
        let flo = f(lo);
        let fhi = if x == 0.0 { flo } else { f(hi) };
        if !flo.is_finite() || !fhi.is_finite() {
            return Err(SolverError::non_convergent(
                "quadrature",
                format!("non-finite integrand near [{lo}, {hi}]"),
            ));
        }
        let s = if x == 0.0 { flo } else { flo + fhi };
        ik += wk * s;
        if i % 2 == 1 || x == 0.0 {
            ig += WG[i / 2] * s;
        }
    }
    ik *= half;
    ig *= half;
    let err = (ik - ig).abs();
    Ok(Segment { a, b, value: ik, err })
}

/// Integrate `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, cfg: &QuadCfg) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(SolverError::Domain("quadrature endpoints must be finite".into()));
    }
    let mut segs = vec![gk15(f, a, b)?];
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.err).sum();
        if err <= cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
            return Ok(total);
        }
        if segs.len() >= cfg.max_segments {
            return Err(SolverError::non_convergent(
                "quadrature",
                format!("error {err:.3e} after {} segments", segs.len()),
            ));
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i)
            .expect("non-empty");
        let Segment { a, b, .. } = segs.swap_remove(worst);
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return Err(SolverError::non_convergent(
                "quadrature",
                format!("segment [{a}, {b}] cannot be split further"),
            ));
        }
        segs.push(gk15(f, a, mid)?);
        segs.push(gk15(f, mid, b)?);
    }
}

/// Integrate with forced breakpoints (integrand kinks the caller knows about).
pub fn integrate_with_breaks(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: &QuadCfg,
) -> Result<f64> {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| *x > a && *x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += integrate(f, w[0], w[1], cfg)?;
    }
    Ok(total)
}

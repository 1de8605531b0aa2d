//! Gains-side subproblem: utility-optimal spending of a budget on the set
//! `{xi <= c}`.
//!
//! The optimum is `Z* = I(lambda xi)` there, with the multiplier pinned by
//! the budget identity `E[xi I(lambda xi) 1{xi <= c}] = x_plus`. The budget
//! map is strictly decreasing and continuous in `lambda`, so a bracketed
//! bisection on `ln lambda` finds the root. Budget and value have closed
//! forms in the density's partial moments for all three utility kinds; the
//! generic quadrature route through `DensityModel::expect` is kept as an
//! independent cross-check.

use crate::density::{DensityModel, Interval};
use crate::error::{Result, SolverError};
use crate::quad::QuadCfg;
use crate::root::{self, RootCfg};
use crate::utility::UtilitySpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainsSolution {
    pub c: f64,
    /// Budget spent on gains.
    pub x_plus: f64,
    /// Multiplier; `+inf` sentinel when the budget is zero.
    pub lambda: f64,
    /// `E[u(I(lambda xi)) 1{xi <= c}]`.
    pub value: f64,
}

/// Gains region for a given multiplier: `(0, e]` where the claim is active.
fn active_region(u: &UtilitySpec, lambda: f64, c: f64) -> Interval {
    Interval::upto(c.min(u.gains_support_bound(lambda)))
}

/// `E[xi I(lambda xi) 1{xi <= c}]`, closed form.
pub fn budget_moment(model: &DensityModel, u: &UtilitySpec, lambda: f64, c: f64) -> f64 {
    if lambda == f64::INFINITY {
        return 0.0;
    }
    let iv = active_region(u, lambda, c);
    if iv.is_empty() {
        return 0.0;
    }
    match *u {
        UtilitySpec::Exponential { delta } => {
            ((delta / lambda).ln() * model.partial_power_moment(1.0, &iv)
                - model.partial_xi_log_moment(&iv))
                / delta
        }
        UtilitySpec::Power { gamma } => {
            let p = gamma / (gamma - 1.0);
            (lambda / gamma).powf(1.0 / (gamma - 1.0)) * model.partial_power_moment(p, &iv)
        }
        UtilitySpec::LogShifted { a } => {
            model.prob(&iv) / lambda - a * model.partial_power_moment(1.0, &iv)
        }
    }
}

/// `E[u(I(lambda xi)) 1{xi <= c}]`, closed form.
pub fn value_moment(model: &DensityModel, u: &UtilitySpec, lambda: f64, c: f64) -> f64 {
    if lambda == f64::INFINITY {
        return 0.0;
    }
    let iv = active_region(u, lambda, c);
    if iv.is_empty() {
        return 0.0;
    }
    match *u {
        UtilitySpec::Exponential { delta } => {
            model.prob(&iv) - (lambda / delta) * model.partial_power_moment(1.0, &iv)
        }
        UtilitySpec::Power { gamma } => {
            let p = gamma / (gamma - 1.0);
            (lambda / gamma).powf(p) * model.partial_power_moment(p, &iv)
        }
        UtilitySpec::LogShifted { a } => {
            -(a * lambda).ln() * model.prob(&iv) - model.partial_log_moment(&iv)
        }
    }
}

/// Same value through generic quadrature; independent of the closed forms.
pub fn value_by_quadrature(
    model: &DensityModel,
    u: &UtilitySpec,
    lambda: f64,
    c: f64,
    cfg: &QuadCfg,
) -> Result<f64> {
    if lambda == f64::INFINITY {
        return Ok(0.0);
    }
    let uu = *u;
    let g = move |xi: f64| uu.eval(uu.inverse_marginal(lambda * xi).unwrap_or(0.0));
    model.expect(&g, &Interval::upto(c), &[u.gains_support_bound(lambda)], cfg)
}

/// Conjugate envelope `E[v(lambda xi)] + lambda x_plus`; dominates the gains
/// value for every multiplier, with equality at the solving one.
pub fn value_bound(
    model: &DensityModel,
    u: &UtilitySpec,
    lambda: f64,
    x_plus: f64,
    cfg: &QuadCfg,
) -> Result<f64> {
    let uu = *u;
    let g = move |xi: f64| uu.conjugate(lambda * xi).unwrap_or(0.0);
    // the conjugate of the clipped utilities is zero above the support bound
    let conj = model.expect(&g, &Interval::all(), &[u.gains_support_bound(lambda)], cfg)?;
    Ok(conj + lambda * x_plus)
}

/// Solve the budget identity on `{xi <= c}` and evaluate the gains claim.
pub fn solve(model: &DensityModel, u: &UtilitySpec, c: f64, x_plus: f64) -> Result<GainsSolution> {
    if !x_plus.is_finite() || x_plus < 0.0 {
        return Err(SolverError::Config(format!("gains budget must be nonnegative, got {x_plus}")));
    }
    if x_plus == 0.0 {
        return Ok(GainsSolution { c, x_plus, lambda: f64::INFINITY, value: 0.0 });
    }
    if model.prob(&Interval::upto(c)) == 0.0 {
        return Err(SolverError::Domain(format!("gains region {{xi <= {c}}} carries no mass")));
    }
    // When the whole region stays below the exponential support bound the
    // budget identity is log-linear in lambda and solves in closed form.
    // Bisection cannot reach it on thin regions, where the multiplier drops
    // below any representable bracket; the clamp then saturates the claim.
    if let UtilitySpec::Exponential { delta } = u {
        if c.is_finite() {
            let iv = Interval::upto(c);
            let pm1 = model.partial_power_moment(1.0, &iv);
            if pm1 > 0.0 {
                let xilog = model.partial_xi_log_moment(&iv);
                let lambda =
                    (delta.ln() - (delta * x_plus + xilog) / pm1).exp().max(f64::MIN_POSITIVE);
                if lambda <= delta / c {
                    let value = value_moment(model, u, lambda, c);
                    return Ok(GainsSolution { c, x_plus, lambda, value });
                }
            }
        }
    }
    let mut residual = |lambda: f64| budget_moment(model, u, lambda, c) - x_plus;
    let lambda = root::solve_decreasing_log(&mut residual, 1.0, &RootCfg::default(), "gains multiplier")?;
    let value = value_moment(model, u, lambda, c);
    Ok(GainsSolution { c, x_plus, lambda, value })
}

//! Loss-side subproblem: the cheapest shortfall profile on a tail.
//!
//! Given a split point `c`, the loss region is `{xi > c}`. Over positions
//! `Y <= 0` supported there with risk at most `rho0`, we want the one that
//! raises the most budget, i.e. minimizes the price `E[xi Y]`. The minimized
//! price is the subsidy `delta <= 0`; the planner adds `-delta` to the gains
//! budget.
//!
//! For entropic risk the optimum has the closed form
//! `Y*(xi) = -beta (ln(beta xi / eta))^+` on the tail, with `eta` chosen so
//! the risk constraint binds exactly:
//! `E[(beta xi / eta) or 1; xi > c] = exp(rho0/beta) - 1 + P(xi > c)`.
//!
//! For spectral risk the optimum over profiles supported on the whole tail
//! is flat, `Y* = -rho0 / Phi(alpha(c))` with `alpha(c) = P(xi > c)`, and
//! that is the value the planner uses (relabeling the split point makes any
//! sub-tail reachable as some other `c`). The solution also reports the
//! envelope over flat profiles on sub-tails of smaller probability, which
//! can be strictly cheaper and need not be attained.

use crate::density::{DensityModel, Interval};
use crate::error::{Result, SolverError};
use crate::risk::RiskSpec;
use crate::root::{self, RootCfg};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossProfile {
    Zero,
    /// `-beta ln(beta xi / eta)` for `xi > d`, zero on `(c, d]`.
    LogTail { beta: f64, eta: f64, c: f64, d: f64 },
    /// Constant `level < 0` on `{xi > c}`.
    FlatTail { level: f64, c: f64 },
}

impl LossProfile {
    pub fn eval(&self, xi: f64) -> f64 {
        match *self {
            LossProfile::Zero => 0.0,
            LossProfile::LogTail { beta, eta, d, .. } => {
                if xi > d {
                    -beta * (beta * xi / eta).ln()
                } else {
                    0.0
                }
            }
            LossProfile::FlatTail { level, c } => {
                if xi > c {
                    level
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortfallSolution {
    pub c: f64,
    /// `P(xi > c)`.
    pub alpha: f64,
    /// Subsidy `E[xi Y*] <= 0` for the profile below.
    pub delta: f64,
    /// Spectral only: infimum price over flat profiles on sub-tails,
    /// `-rho0 sup_{0 < z <= alpha} R(z)`; at most `delta`, possibly
    /// unattained.
    pub envelope: Option<f64>,
    /// Entropic multiplier, when one exists.
    pub eta: Option<f64>,
    pub profile: LossProfile,
}

impl ShortfallSolution {
    pub(crate) fn zero(c: f64, alpha: f64) -> Self {
        ShortfallSolution { c, alpha, delta: 0.0, envelope: None, eta: None, profile: LossProfile::Zero }
    }
}

fn check_rho0(rho0: f64) -> Result<()> {
    if !(rho0.is_finite() && rho0 >= 0.0) {
        return Err(SolverError::Config(format!("risk budget must be nonnegative, got {rho0}")));
    }
    Ok(())
}

/// Optimal entropic loss profile on `{xi > c}`.
pub fn solve_entropic(model: &DensityModel, beta: f64, rho0: f64, c: f64) -> Result<ShortfallSolution> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(SolverError::Config(format!("beta must be positive, got {beta}")));
    }
    check_rho0(rho0)?;
    let alpha = model.prob(&Interval::above(c));
    if rho0 == 0.0 {
        return Ok(ShortfallSolution::zero(c, alpha));
    }
    if alpha == 0.0 {
        return Err(SolverError::InfeasibleTail { c });
    }
    let rhs = (rho0 / beta).exp() - 1.0 + alpha;
    let mut residual = |eta: f64| {
        let d = c.max(eta / beta);
        (beta / eta) * model.tail_price(d) + model.prob(&Interval::between(c, d)) - rhs
    };
    let eta = root::solve_decreasing_log(&mut residual, beta, &RootCfg::default(), "entropic tail multiplier")?;
    let d = c.max(eta / beta);
    let tail = Interval::above(d);
    let delta = -beta
        * ((beta / eta).ln() * model.partial_power_moment(1.0, &tail)
            + model.partial_xi_log_moment(&tail));
    Ok(ShortfallSolution {
        c,
        alpha,
        delta,
        envelope: None,
        eta: Some(eta),
        profile: LossProfile::LogTail { beta, eta, c, d },
    })
}

/// Optimal spectral loss profile supported on the whole tail `{xi > c}`,
/// plus the sub-tail envelope.
pub fn solve_spectral(model: &DensityModel, risk: &RiskSpec, rho0: f64, c: f64) -> Result<ShortfallSolution> {
    check_rho0(rho0)?;
    let alpha = model.prob(&Interval::above(c));
    if rho0 == 0.0 {
        return Ok(ShortfallSolution::zero(c, alpha));
    }
    if alpha == 0.0 {
        return Err(SolverError::InfeasibleTail { c });
    }
    if let Limit::Infinite = existence_limit(model, risk)? {
        return Err(SolverError::Unbounded {
            reason: "existence limit infinite: vanishing tails raise unlimited budget".into(),
        });
    }
    let denom = risk.phi_integral(alpha.min(1.0))?;
    let level = -rho0 / denom;
    let delta = level * model.tail_price(c);
    let envelope = envelope_value(model, risk, rho0, c, alpha)?;
    Ok(ShortfallSolution {
        c,
        alpha,
        delta,
        envelope: Some(envelope),
        eta: None,
        profile: LossProfile::FlatTail { level, c },
    })
}

/// `-rho0 sup_z R(z)` over `z in (0, alpha]` with
/// `R(z) = E[xi; xi > k] / Phi(P(xi > k))` at `k = quantile(1-z)`.
fn envelope_value(model: &DensityModel, risk: &RiskSpec, rho0: f64, _c: f64, alpha: f64) -> Result<f64> {
    // the scan floor keeps quantile/cdf evaluations inside their accurate
    // range; the discarded sliver moves the supremum by under 1e-3 relative
    // even when the maximizer sits at z -> 0
    let z_min = 1e-9_f64.min(alpha);
    let ratio = |z: f64| -> Result<f64> {
        // price and spectrum weight are both derived from the threshold, so
        // quantile roundtrip error cannot push the ratio past the supremum
        let q = model.quantile(1.0 - z)?;
        let mass = model.prob(&Interval::above(q)).min(alpha);
        if mass <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(model.tail_price(q) / risk.phi_integral(mass)?)
    };
    // log-spaced scan, then golden refinement around the best cell; ties go
    // to the larger z so an attained maximizer wins over the unattained limit
    let n = 512;
    let (t_lo, t_hi) = (z_min.ln(), alpha.ln());
    let mut best = (f64::NEG_INFINITY, t_hi);
    for i in 0..n {
        let t = t_lo + (t_hi - t_lo) * i as f64 / (n - 1) as f64;
        let r = ratio(t.exp())?;
        if r >= best.0 {
            best = (r, t);
        }
    }
    let dt = (t_hi - t_lo) / (n - 1) as f64;
    let (lo, hi) = ((best.1 - dt).max(t_lo), (best.1 + dt).min(t_hi));
    let mut g = |t: f64| ratio(t.exp()).unwrap_or(f64::NEG_INFINITY);
    let (_, r_star) = root::golden_max(&mut g, lo, hi, 1e-12);
    Ok(-rho0 * r_star.max(best.0))
}

/// How much budget a unit of risk can raise on vanishing tails: `ess sup(xi)
/// / phi(0)` for spectral risk. Infinite for unbounded densities, in which
/// case no optimal split exists and the planner's value is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Limit {
    Finite { value: f64 },
    Infinite,
}

pub fn existence_limit(model: &DensityModel, risk: &RiskSpec) -> Result<Limit> {
    let phi0 = risk.phi_zero()?;
    let sup = model.ess_sup();
    if sup.is_finite() {
        Ok(Limit::Finite { value: sup / phi0 })
    } else {
        Ok(Limit::Infinite)
    }
}

/// Upper bound on `sup_z R(z)`, the budget raised per unit of spectral risk
/// over tails of every size, not only vanishing ones. On `z <= b_min` the
/// ratio is at most the existence limit; past the smallest spectrum level
/// `Phi(z) >= b_min phi(0)` while the tail price is at most `E[xi]`, so the
/// whole curve sits under `max(ess_sup, E[xi] / b_min) / phi(0)`.
pub fn relief_rate_bound(model: &DensityModel, risk: &RiskSpec) -> Result<Limit> {
    let RiskSpec::Spectral { atoms } = risk else {
        return Err(SolverError::Config("relief rate bound is spectral-only".into()));
    };
    let sup = model.ess_sup();
    if !sup.is_finite() {
        return Ok(Limit::Infinite);
    }
    let b_min = atoms.iter().map(|a| a.level).fold(f64::INFINITY, f64::min);
    let phi0 = risk.phi_zero()?;
    Ok(Limit::Finite { value: sup.max(model.mean() / b_min) / phi0 })
}

//! Pricing-density models: lognormal, upper-truncated lognormal, and finite
//! discrete laws on the positive half-line.
//!
//! Everything downstream consumes the density through four operations:
//! `cdf`, `quantile` (left-continuous generalized inverse), `expect` over an
//! interval, and `tail_price(c) = E[xi 1{xi > c}]`. Intervals are half-open
//! `(lo, hi]` so that `(0, c]` and `(c, inf)` partition the state space with
//! the conventions `{xi <= c}` / `{xi > c}` used by the solvers.
//!
//! Partial moments that the solvers hammer in hot loops (`E[xi^p 1]`,
//! `E[ln xi 1]`, `E[xi ln xi 1]`) have closed forms for every model kind;
//! `expect` is the general fallback and doubles as the independent
//! cross-check in tests.

use crate::error::{Result, SolverError};
use crate::norm;
use crate::quad::{self, QuadCfg};
use serde::{Deserialize, Serialize};

/// Integration clip for the standard-normal scale; the discarded tail mass
/// is below 1e-12 of any expectation we evaluate.
pub const Z_MAX: f64 = 8.5;

/// Half-open interval `(lo, hi]` on the positive axis; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn all() -> Self {
        Interval { lo: 0.0, hi: f64::INFINITY }
    }

    /// `(0, c]`, the set `{xi <= c}`.
    pub fn upto(c: f64) -> Self {
        Interval { lo: 0.0, hi: c }
    }

    /// `(c, inf)`, the set `{xi > c}`.
    pub fn above(c: f64) -> Self {
        Interval { lo: c, hi: f64::INFINITY }
    }

    pub fn between(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }

    fn cap_hi(&self, cap: f64) -> Self {
        Interval { lo: self.lo, hi: self.hi.min(cap) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub xi: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DensityModel {
    Lognormal {
        m: f64,
        s: f64,
    },
    /// Lognormal conditioned on `xi <= xi_bar`. Truncation renormalizes the
    /// total mass; it does not restore `E[xi] = 1` unless built with
    /// `recenter`, so `mean` records what the model actually integrates to.
    TruncatedLognormal {
        m: f64,
        s: f64,
        xi_bar: f64,
        mass: f64,
        mean: f64,
    },
    /// Finite law, states sorted by `xi` ascending, all `xi` distinct.
    Discrete {
        states: Vec<State>,
        mean: f64,
    },
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(SolverError::Config(format!("{name} must be finite and positive, got {v}")));
    }
    Ok(())
}

impl DensityModel {
    /// Lognormal with `E[xi] = 1`: `ln xi ~ N(-s^2/2, s^2)`.
    pub fn lognormal_unit(s: f64) -> Result<Self> {
        check_pos("s", s)?;
        Ok(DensityModel::Lognormal { m: -0.5 * s * s, s })
    }

    /// Lognormal with explicit log-mean (used by recentred truncations and tests).
    pub fn lognormal(m: f64, s: f64) -> Result<Self> {
        check_pos("s", s)?;
        if !m.is_finite() {
            return Err(SolverError::Config(format!("m must be finite, got {m}")));
        }
        Ok(DensityModel::Lognormal { m, s })
    }

    /// Pricing density of a Black-Scholes market with excess drift `b`,
    /// volatility `sigma`, horizon `t`: market price of risk `mu = b/sigma`,
    /// `ln xi ~ N(-mu^2 t / 2, mu^2 t)`.
    pub fn black_scholes(b: f64, sigma: f64, t: f64) -> Result<Self> {
        check_pos("b", b)?;
        check_pos("sigma", sigma)?;
        check_pos("t", t)?;
        let mu = b / sigma;
        let s = mu * t.sqrt();
        Ok(DensityModel::Lognormal { m: -0.5 * s * s, s })
    }

    /// Truncate a lognormal at `xi_bar`. With `recenter` the law is rescaled
    /// so that `E[xi] = 1` again (which moves the truncation point).
    pub fn truncated_lognormal(m: f64, s: f64, xi_bar: f64, recenter: bool) -> Result<Self> {
        check_pos("s", s)?;
        check_pos("xi_bar", xi_bar)?;
        let a = (xi_bar.ln() - m) / s;
        let mass = norm::cdf(a);
        if mass <= 0.0 {
            return Err(SolverError::Config(format!(
                "truncation at xi_bar = {xi_bar} leaves no mass"
            )));
        }
        let mean = raw_power_moment(m, s, 1.0, &Interval::upto(xi_bar)) / mass;
        if recenter {
            let m2 = m - mean.ln();
            let xi_bar2 = xi_bar / mean;
            let mass2 = norm::cdf((xi_bar2.ln() - m2) / s);
            let mean2 = raw_power_moment(m2, s, 1.0, &Interval::upto(xi_bar2)) / mass2;
            return Ok(DensityModel::TruncatedLognormal {
                m: m2,
                s,
                xi_bar: xi_bar2,
                mass: mass2,
                mean: mean2,
            });
        }
        Ok(DensityModel::TruncatedLognormal { m, s, xi_bar, mass, mean })
    }

    /// Finite discrete law from `(xi, p)` pairs. Probabilities must sum to
    /// one; the mean `E[xi]` is recorded but not forced to one (callers that
    /// need a martingale density check `mean()` themselves).
    pub fn discrete(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(SolverError::Config("discrete law needs at least one state".into()));
        }
        let mut states: Vec<State> = Vec::with_capacity(pairs.len());
        let mut total = 0.0;
        for &(xi, p) in pairs {
            check_pos("state xi", xi)?;
            check_pos("state probability", p)?;
            total += p;
            states.push(State { xi, p });
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(SolverError::Config(format!("probabilities sum to {total}, not 1")));
        }
        states.sort_by(|a, b| a.xi.total_cmp(&b.xi));
        for w in states.windows(2) {
            if w[0].xi == w[1].xi {
                return Err(SolverError::Config(format!("duplicate state xi = {}", w[0].xi)));
            }
        }
        let mean = states.iter().map(|s| s.xi * s.p).sum();
        Ok(DensityModel::Discrete { states, mean })
    }

    pub fn is_atomless(&self) -> bool {
        !matches!(self, DensityModel::Discrete { .. })
    }

    pub fn mean(&self) -> f64 {
        match self {
            DensityModel::Lognormal { m, s } => (m + 0.5 * s * s).exp(),
            DensityModel::TruncatedLognormal { mean, .. } => *mean,
            DensityModel::Discrete { mean, .. } => *mean,
        }
    }

    pub fn ess_inf(&self) -> f64 {
        match self {
            DensityModel::Lognormal { .. } | DensityModel::TruncatedLognormal { .. } => 0.0,
            DensityModel::Discrete { states, .. } => states[0].xi,
        }
    }

    pub fn ess_sup(&self) -> f64 {
        match self {
            DensityModel::Lognormal { .. } => f64::INFINITY,
            DensityModel::TruncatedLognormal { xi_bar, .. } => *xi_bar,
            DensityModel::Discrete { states, .. } => states[states.len() - 1].xi,
        }
    }

    pub fn states(&self) -> Option<&[State]> {
        match self {
            DensityModel::Discrete { states, .. } => Some(states),
            _ => None,
        }
    }

    /// `P(xi <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            DensityModel::Lognormal { m, s } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm::cdf((x.ln() - m) / s)
                }
            }
            DensityModel::TruncatedLognormal { m, s, xi_bar, mass, .. } => {
                if x <= 0.0 {
                    0.0
                } else if x >= *xi_bar {
                    1.0
                } else {
                    (norm::cdf((x.ln() - m) / s) / mass).min(1.0)
                }
            }
            DensityModel::Discrete { states, .. } => {
                states.iter().take_while(|s| s.xi <= x).map(|s| s.p).sum()
            }
        }
    }

    /// Left-continuous generalized inverse `inf { x : F(x) >= u }`, with the
    /// conventions `quantile(0) = ess inf` and `quantile(1) = ess sup`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) || u.is_nan() {
            return Err(SolverError::Domain(format!("quantile needs u in [0,1], got {u}")));
        }
        if u == 0.0 {
            return Ok(self.ess_inf());
        }
        if u == 1.0 {
            return Ok(self.ess_sup());
        }
        match self {
            DensityModel::Lognormal { m, s } => Ok((m + s * norm::quantile(u)?).exp()),
            DensityModel::TruncatedLognormal { m, s, mass, xi_bar, .. } => {
                let x = (m + s * norm::quantile(u * mass)?).exp();
                Ok(x.min(*xi_bar))
            }
            DensityModel::Discrete { states, .. } => {
                let mut cum = 0.0;
                for st in states {
                    cum += st.p;
                    // nudge for accumulated rounding at the last state
                    if cum >= u - 1e-12 {
                        return Ok(st.xi);
                    }
                }
                Ok(states[states.len() - 1].xi)
            }
        }
    }

    /// `P(xi in (lo, hi])`.
    pub fn prob(&self, iv: &Interval) -> f64 {
        self.partial_power_moment(0.0, iv)
    }

    /// `E[xi^p 1{xi in (lo, hi]}]`, closed form.
    pub fn partial_power_moment(&self, p: f64, iv: &Interval) -> f64 {
        if iv.is_empty() {
            return 0.0;
        }
        match self {
            DensityModel::Lognormal { m, s } => raw_power_moment(*m, *s, p, iv),
            DensityModel::TruncatedLognormal { m, s, xi_bar, mass, .. } => {
                raw_power_moment(*m, *s, p, &iv.cap_hi(*xi_bar)) / mass
            }
            DensityModel::Discrete { states, .. } => states
                .iter()
                .filter(|st| st.xi > iv.lo && st.xi <= iv.hi)
                .map(|st| st.p * st.xi.powf(p))
                .sum(),
        }
    }

    /// `E[ln xi 1{xi in (lo, hi]}]`, closed form.
    pub fn partial_log_moment(&self, iv: &Interval) -> f64 {
        if iv.is_empty() {
            return 0.0;
        }
        match self {
            DensityModel::Lognormal { m, s } => raw_log_moment(*m, *s, iv),
            DensityModel::TruncatedLognormal { m, s, xi_bar, mass, .. } => {
                raw_log_moment(*m, *s, &iv.cap_hi(*xi_bar)) / mass
            }
            DensityModel::Discrete { states, .. } => states
                .iter()
                .filter(|st| st.xi > iv.lo && st.xi <= iv.hi)
                .map(|st| st.p * st.xi.ln())
                .sum(),
        }
    }

    /// `E[xi ln xi 1{xi in (lo, hi]}]`, closed form.
    pub fn partial_xi_log_moment(&self, iv: &Interval) -> f64 {
        if iv.is_empty() {
            return 0.0;
        }
        match self {
            DensityModel::Lognormal { m, s } => raw_xi_log_moment(*m, *s, iv),
            DensityModel::TruncatedLognormal { m, s, xi_bar, mass, .. } => {
                raw_xi_log_moment(*m, *s, &iv.cap_hi(*xi_bar)) / mass
            }
            DensityModel::Discrete { states, .. } => states
                .iter()
                .filter(|st| st.xi > iv.lo && st.xi <= iv.hi)
                .map(|st| st.p * st.xi * st.xi.ln())
                .sum(),
        }
    }

    /// `E[xi 1{xi > c}]`, the price of the tail.
    pub fn tail_price(&self, c: f64) -> f64 {
        self.partial_power_moment(1.0, &Interval::above(c))
    }

    /// `E[g(xi) 1{xi in (lo, hi]}]` by adaptive quadrature (exact summation
    /// for discrete laws). Kinks of `g` inside the interval should be listed
    /// in `breaks` so the integrator does not chase them adaptively.
    pub fn expect(
        &self,
        g: &dyn Fn(f64) -> f64,
        iv: &Interval,
        breaks: &[f64],
        cfg: &QuadCfg,
    ) -> Result<f64> {
        if iv.is_empty() {
            return Ok(0.0);
        }
        match self {
            DensityModel::Lognormal { m, s } => lognormal_expect(*m, *s, g, iv, breaks, cfg),
            DensityModel::TruncatedLognormal { m, s, xi_bar, mass, .. } => {
                Ok(lognormal_expect(*m, *s, g, &iv.cap_hi(*xi_bar), breaks, cfg)? / mass)
            }
            DensityModel::Discrete { states, .. } => Ok(states
                .iter()
                .filter(|st| st.xi > iv.lo && st.xi <= iv.hi)
                .map(|st| st.p * g(st.xi))
                .sum()),
        }
    }
}

fn t_of(x: f64, m: f64, s: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else if x == f64::INFINITY {
        f64::INFINITY
    } else {
        (x.ln() - m) / s
    }
}

/// `P(a < Z <= b)` for standard normal `Z`, keeping relative precision when
/// the interval sits in either tail (narrow intervals deep in the upper tail
/// would otherwise cancel to absolute 1e-16 through `cdf` alone).
fn gaussian_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        (norm::sf(a) - norm::sf(b)).max(0.0)
    } else {
        (norm::cdf(b) - norm::cdf(a)).max(0.0)
    }
}

fn raw_power_moment(m: f64, s: f64, p: f64, iv: &Interval) -> f64 {
    if iv.is_empty() {
        return 0.0;
    }
    let t_lo = t_of(iv.lo, m, s);
    let t_hi = t_of(iv.hi, m, s);
    let scale = (p * m + 0.5 * p * p * s * s).exp();
    scale * gaussian_mass(t_lo - p * s, t_hi - p * s)
}

fn raw_log_moment(m: f64, s: f64, iv: &Interval) -> f64 {
    if iv.is_empty() {
        return 0.0;
    }
    let t_lo = t_of(iv.lo, m, s);
    let t_hi = t_of(iv.hi, m, s);
    m * gaussian_mass(t_lo, t_hi) + s * (norm::pdf(t_lo) - norm::pdf(t_hi))
}

fn raw_xi_log_moment(m: f64, s: f64, iv: &Interval) -> f64 {
    if iv.is_empty() {
        return 0.0;
    }
    let t_lo = t_of(iv.lo, m, s) - s;
    let t_hi = t_of(iv.hi, m, s) - s;
    let scale = (m + 0.5 * s * s).exp();
    scale * ((m + s * s) * (norm::cdf(t_hi) - norm::cdf(t_lo)) + s * (norm::pdf(t_lo) - norm::pdf(t_hi)))
}

fn lognormal_expect(
    m: f64,
    s: f64,
    g: &dyn Fn(f64) -> f64,
    iv: &Interval,
    breaks: &[f64],
    cfg: &QuadCfg,
) -> Result<f64> {
    let t_lo = t_of(iv.lo, m, s).max(-Z_MAX);
    let t_hi = t_of(iv.hi, m, s).min(Z_MAX);
    if t_hi <= t_lo {
        return Ok(0.0);
    }
    let integrand = move |t: f64| g((m + s * t).exp()) * norm::pdf(t);
    let t_breaks: Vec<f64> =
        breaks.iter().filter(|&&x| x > 0.0 && x.is_finite()).map(|&x| t_of(x, m, s)).collect();
    quad::integrate_with_breaks(&integrand, t_lo, t_hi, &t_breaks, cfg)
}

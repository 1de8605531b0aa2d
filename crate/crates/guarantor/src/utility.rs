//! Utility functions on gains (domain `x >= 0`), their inverse marginals,
//! and convex conjugates `v(y) = sup_{x >= 0} (u(x) - x y)`.
//!
//! The inverse marginal is extended by zero once `y` exceeds `u'(0)`, which
//! is what makes conjugates finite and budget equations well posed:
//! `sup` in the conjugate is attained at `x = inverse_marginal(y)`.

use crate::error::{Result, SolverError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    /// `u(x) = 1 - exp(-delta x)`, CARA with absolute risk aversion `delta`.
    Exponential { delta: f64 },
    /// `u(x) = x^gamma`, `0 < gamma < 1`.
    Power { gamma: f64 },
    /// `u(x) = ln(1 + x/a)`, `a > 0`.
    LogShifted { a: f64 },
}

impl UtilitySpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            UtilitySpec::Exponential { delta } => delta.is_finite() && *delta > 0.0,
            UtilitySpec::Power { gamma } => gamma.is_finite() && *gamma > 0.0 && *gamma < 1.0,
            UtilitySpec::LogShifted { a } => a.is_finite() && *a > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SolverError::Config(format!("utility parameters out of range: {self:?}")))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match self {
            UtilitySpec::Exponential { delta } => 1.0 - (-delta * x).exp(),
            UtilitySpec::Power { gamma } => x.powf(*gamma),
            UtilitySpec::LogShifted { a } => (1.0 + x / a).ln(),
        }
    }

    pub fn marginal(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match self {
            UtilitySpec::Exponential { delta } => delta * (-delta * x).exp(),
            UtilitySpec::Power { gamma } => gamma * x.powf(gamma - 1.0),
            UtilitySpec::LogShifted { a } => 1.0 / (a + x),
        }
    }

    /// `u'(0+)`; infinite for the power family.
    pub fn marginal_at_zero(&self) -> f64 {
        match self {
            UtilitySpec::Exponential { delta } => *delta,
            UtilitySpec::Power { .. } => f64::INFINITY,
            UtilitySpec::LogShifted { a } => 1.0 / a,
        }
    }

    /// `sup_x u(x)`: 1 for exponential, infinite otherwise.
    pub fn sup_value(&self) -> f64 {
        match self {
            UtilitySpec::Exponential { .. } => 1.0,
            _ => f64::INFINITY,
        }
    }

    /// Inverse marginal `I(y) = (u')^{-1}(y)`, extended by zero for
    /// `y >= u'(0)`. Requires `y > 0`.
    pub fn inverse_marginal(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(SolverError::Domain(format!("inverse marginal needs y > 0, got {y}")));
        }
        Ok(match self {
            UtilitySpec::Exponential { delta } => {
                if y >= *delta {
                    0.0
                } else {
                    (delta / y).ln() / delta
                }
            }
            UtilitySpec::Power { gamma } => (y / gamma).powf(1.0 / (gamma - 1.0)),
            UtilitySpec::LogShifted { a } => (1.0 / y - a).max(0.0),
        })
    }

    /// Convex conjugate `v(y) = sup_{x >= 0} (u(x) - x y)` for `y > 0`.
    pub fn conjugate(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(SolverError::Domain(format!("conjugate needs y > 0, got {y}")));
        }
        Ok(match self {
            UtilitySpec::Exponential { delta } => {
                if y >= *delta {
                    0.0
                } else {
                    let r = y / delta;
                    1.0 - r + r * r.ln()
                }
            }
            UtilitySpec::Power { gamma } => {
                (1.0 - gamma) * (y / gamma).powf(gamma / (gamma - 1.0))
            }
            UtilitySpec::LogShifted { a } => {
                if y >= 1.0 / a {
                    0.0
                } else {
                    -(a * y).ln() - 1.0 + a * y
                }
            }
        })
    }

    /// Upper end of `{ x : I(lambda x) > 0 }`: gains are bought only on
    /// states cheaper than this.
    pub fn gains_support_bound(&self, lambda: f64) -> f64 {
        match self {
            UtilitySpec::Exponential { delta } => delta / lambda,
            UtilitySpec::Power { .. } => f64::INFINITY,
            UtilitySpec::LogShifted { a } => 1.0 / (a * lambda),
        }
    }
}

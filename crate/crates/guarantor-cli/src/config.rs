//! Config file schema (`guarantor-config/1`) and its lowering onto the
//! solver's problem types.

use guarantor::{BsMarket, DensityModel, Numerics, ProblemSpec, RiskSpec, SpectralAtom, UtilitySpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_SCHEMA: &str = "guarantor-config/1";
pub const SOLUTION_SCHEMA: &str = "guarantor-solution/1";
pub const VERIFICATION_SCHEMA: &str = "guarantor-verification/1";
pub const INSTANCE_SCHEMA: &str = "guarantor-instance/1";
pub const ORACLE_SCHEMA: &str = "guarantor-oracle/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    pub market: MarketCfg,
    pub guarantee: f64,
    pub initial_value: f64,
    pub utility: UtilitySpec,
    pub risk: RiskCfg,
    pub risk_budget: f64,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketCfg {
    /// Complete market with excess drift `b`, volatility `sigma`, horizon
    /// `t`; `truncation` caps the implied pricing density at `xi_bar`.
    BlackScholes {
        s0: f64,
        b: f64,
        sigma: f64,
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncation: Option<Truncation>,
    },
    /// Pricing density given directly by its log-moments.
    Lognormal { m: f64, s: f64 },
    /// Finite state space, `states` as `[xi, p]` pairs.
    Discrete { states: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub xi_bar: f64,
    /// Rescale so the truncated density keeps price mass `E[xi] = 1`.
    #[serde(default)]
    pub recenter: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RiskCfg {
    Entropic { beta: f64 },
    Cvar { level: f64 },
    Spectral { atoms: Vec<SpectralAtom> },
}

impl RiskCfg {
    pub fn lower(&self) -> Result<RiskSpec, CliError> {
        match self {
            RiskCfg::Entropic { beta } => RiskSpec::entropic(*beta),
            RiskCfg::Cvar { level } => RiskSpec::cvar(*level),
            RiskCfg::Spectral { atoms } => RiskSpec::spectral(atoms.clone()),
        }
        .map_err(CliError::Solver)
    }
}

/// Output file names, resolved against the output directory unless absolute.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub solution: Option<String>,
    pub payoff: Option<String>,
    pub verification: Option<String>,
    pub sweep: Option<String>,
}

impl Config {
    pub fn check_schema(&self) -> Result<(), CliError> {
        if self.schema != CONFIG_SCHEMA {
            return Err(CliError::Config(format!(
                "unsupported config schema {:?}, expected {CONFIG_SCHEMA:?}",
                self.schema
            )));
        }
        Ok(())
    }

    pub fn to_spec(&self) -> Result<ProblemSpec, CliError> {
        self.check_schema()?;
        let (model, market) = match &self.market {
            MarketCfg::BlackScholes { s0, b, sigma, t, truncation } => {
                let bs = BsMarket { s0: *s0, b: *b, sigma: *sigma, t: *t };
                bs.validate().map_err(CliError::Solver)?;
                match truncation {
                    None => (DensityModel::black_scholes(*b, *sigma, *t), Some(bs)),
                    Some(tr) => {
                        let s = (b / sigma) * t.sqrt();
                        // the S_T payoff map needs the untruncated density, so
                        // a capped market drops to the generic output format
                        (DensityModel::truncated_lognormal(-0.5 * s * s, s, tr.xi_bar, tr.recenter), None)
                    }
                }
            }
            MarketCfg::Lognormal { m, s } => (DensityModel::lognormal(*m, *s), None),
            MarketCfg::Discrete { states } => (DensityModel::discrete(states), None),
        };
        let mut spec = ProblemSpec::new(
            model.map_err(CliError::Solver)?,
            self.utility,
            self.risk.lower()?,
            self.initial_value,
            self.guarantee,
            self.risk_budget,
        )
        .map_err(CliError::Solver)?;
        spec.market = market;
        spec.numerics = self.numerics;
        spec.validate().map_err(CliError::Solver)?;
        Ok(spec)
    }
}

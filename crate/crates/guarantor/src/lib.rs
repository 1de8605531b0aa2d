//! Payoff design for guaranteed funds.
//!
//! An investor hands over capital against a hard guarantee; the guarantor
//! keeps the upside above the guarantee but must keep the shortfall risk of
//! the hedging position within a budget. The planner in this crate splits
//! the market into a gains region and a loss region, prices the cheapest
//! risk-budget-compliant loss profile, spends what is left of the budget on
//! utility-optimal gains, and searches over the split.

pub mod density;
pub mod error;
pub mod exec;
pub mod gains;
pub mod norm;
pub mod oracle;
pub mod planner;
pub mod quad;
pub mod risk;
pub mod root;
pub mod shortfall;
pub mod utility;

pub use density::{DensityModel, Interval, State};
pub use error::{Result, SolverError};
pub use gains::GainsSolution;
pub use oracle::{OracleInstance, OracleResult, SubsetRow, VerificationReport};
pub use planner::{
    BsConstants, BsMarket, CPoint, Classification, Diagnostics, Numerics, PayoffRule, Plan,
    ProblemSpec, Residuals,
};
pub use quad::QuadCfg;
pub use risk::{Penalty, RiskInput, RiskSpec, SpectralAtom};
pub use shortfall::{Limit, LossProfile, ShortfallSolution};
pub use utility::UtilitySpec;

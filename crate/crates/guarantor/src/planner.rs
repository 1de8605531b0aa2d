//! End-to-end payoff design: pick the gains threshold, price the shortfall,
//! spend the enlarged budget, classify the outcome.
//!
//! Atomless price densities are handled by a grid-plus-golden search over the
//! threshold quantile `q` (the gains set is `{xi <= quantile(q)}`). Models
//! with atoms are routed to the subset enumeration in [`crate::oracle`],
//! where thresholds are ill-posed but brute force is exact.

use crate::density::{DensityModel, Interval};
use crate::error::{Result, SolverError};
use crate::exec;
use crate::gains::{self, GainsSolution};
use crate::norm;
use crate::oracle::{self, OracleInstance};
use crate::quad::QuadCfg;
use crate::risk::{Penalty, RiskInput, RiskSpec};
use crate::root;
use crate::shortfall::{self, Limit, LossProfile, ShortfallSolution};
use crate::utility::UtilitySpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Numerics {
    pub grid_points: usize,
    pub q_min: f64,
    pub q_max: f64,
    /// Width tolerance of the golden-section refinement.
    pub q_tol: f64,
    /// Slack granted to residual and Monte Carlo checks.
    pub check_tol: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub mc_paths: usize,
    pub seed: Option<u64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            grid_points: 256,
            q_min: 1e-4,
            q_max: 1.0 - 1e-6,
            q_tol: 1e-6,
            check_tol: 1e-6,
            rel_tol: 1e-9,
            abs_tol: 1e-14,
            mc_paths: 1_000_000,
            seed: None,
        }
    }
}

impl Numerics {
    pub fn quad(&self) -> QuadCfg {
        QuadCfg { rel_tol: self.rel_tol, abs_tol: self.abs_tol, ..QuadCfg::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.grid_points < 8 {
            return Err(SolverError::Config("need at least 8 grid points".into()));
        }
        if !(0.0 < self.q_min && self.q_min < self.q_max && self.q_max < 1.0) {
            return Err(SolverError::Config(format!(
                "quantile window must satisfy 0 < q_min < q_max < 1, got [{}, {}]",
                self.q_min, self.q_max
            )));
        }
        if !(self.q_tol > 0.0 && self.check_tol > 0.0 && self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(SolverError::Config("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Geometric Brownian market behind a lognormal price density; carried for
/// reporting the claim in terms of the terminal asset price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsMarket {
    pub s0: f64,
    /// Excess drift of the risky asset.
    pub b: f64,
    pub sigma: f64,
    pub t: f64,
}

impl BsMarket {
    pub fn validate(&self) -> Result<()> {
        let ok = self.s0 > 0.0
            && self.b > 0.0
            && self.sigma > 0.0
            && self.t > 0.0
            && [self.s0, self.b, self.sigma, self.t].iter().all(|v| v.is_finite());
        if !ok {
            return Err(SolverError::Config(
                "market needs positive finite s0, b, sigma, t".into(),
            ));
        }
        Ok(())
    }

    fn implied_lognormal(&self) -> (f64, f64) {
        let mu = self.b / self.sigma;
        let s = mu * self.t.sqrt();
        (-s * s / 2.0, s)
    }
}

/// Price density at a terminal asset price, `xi = (S_T e^{T(sigma^2-b)/2} / S_0)^{-b/sigma^2}`.
pub fn xi_of_s(market: &BsMarket, s_t: f64) -> f64 {
    let l = market.b / (market.sigma * market.sigma);
    (-l * ((s_t / market.s0).ln() + market.t * (market.sigma * market.sigma - market.b) / 2.0)).exp()
}

/// Terminal asset price at a density level; inverse of [`xi_of_s`].
pub fn s_of_xi(market: &BsMarket, xi: f64) -> f64 {
    let sig2 = market.sigma * market.sigma;
    market.s0 * (market.t * (market.b - sig2) / 2.0).exp() * xi.powf(-sig2 / market.b)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub model: DensityModel,
    pub utility: UtilitySpec,
    pub risk: RiskSpec,
    /// Price the investor pays at inception.
    pub v0: f64,
    /// Guaranteed terminal floor.
    pub z: f64,
    /// Risk budget granted to the shortfall side.
    pub rho0: f64,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<BsMarket>,
}

impl ProblemSpec {
    pub fn new(
        model: DensityModel,
        utility: UtilitySpec,
        risk: RiskSpec,
        v0: f64,
        z: f64,
        rho0: f64,
    ) -> Result<Self> {
        let spec = ProblemSpec {
            model,
            utility,
            risk,
            v0,
            z,
            rho0,
            numerics: Numerics::default(),
            market: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Surplus over the guarantee, the budget of the whole design.
    pub fn x0(&self) -> f64 {
        self.v0 - self.z
    }

    pub fn validate(&self) -> Result<()> {
        self.utility.validate()?;
        self.risk.validate()?;
        self.numerics.validate()?;
        if !(self.z.is_finite() && self.z >= 0.0) {
            return Err(SolverError::Config(format!("guarantee must be nonnegative, got {}", self.z)));
        }
        if !(self.v0.is_finite() && self.v0 >= self.z) {
            return Err(SolverError::Config(format!(
                "initial value {} cannot fund a guarantee of {}",
                self.v0, self.z
            )));
        }
        if !(self.rho0.is_finite() && self.rho0 >= 0.0) {
            return Err(SolverError::Config(format!("risk budget must be nonnegative, got {}", self.rho0)));
        }
        if let Some(market) = &self.market {
            market.validate()?;
            let (m_implied, s_implied) = market.implied_lognormal();
            let (m, s) = match &self.model {
                DensityModel::Lognormal { m, s } => (*m, *s),
                DensityModel::TruncatedLognormal { m, s, .. } => (*m, *s),
                DensityModel::Discrete { .. } => {
                    return Err(SolverError::Config(
                        "a market attachment implies a lognormal density".into(),
                    ))
                }
            };
            if (m - m_implied).abs() > 1e-9 || (s - s_implied).abs() > 1e-9 {
                return Err(SolverError::Config(format!(
                    "market implies lognormal({m_implied:.6}, {s_implied:.6}) but the model has ({m:.6}, {s:.6})"
                )));
            }
        }
        self.integrability_probe()
    }

    /// The dual objective `E[v(lambda xi)]` must be finite for the budget
    /// equation to mean anything; probe it across three decades.
    fn integrability_probe(&self) -> Result<()> {
        if self.model.states().is_some() {
            return Ok(());
        }
        for lambda in [1e-3, 1.0, 1e3] {
            let kink = self.utility.gains_support_bound(lambda);
            let breaks: Vec<f64> = if kink.is_finite() { vec![kink] } else { vec![] };
            let g = |xi: f64| self.utility.conjugate(lambda * xi).unwrap_or(f64::NAN);
            let v = self
                .model
                .expect(&g, &Interval::all(), &breaks, &self.numerics.quad())
                .map_err(|e| {
                    SolverError::Config(format!("dual objective fails to integrate at lambda={lambda}: {e}"))
                })?;
            if !v.is_finite() {
                return Err(SolverError::Config(format!(
                    "dual objective is not integrable at lambda={lambda}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    /// The search found an interior maximiser and the claim attains it.
    Optimal,
    /// The supremum is finite but not attained by any threshold; the plan
    /// carries the best claim found and an `epsilon` gap bound.
    NoOptimum,
    /// The shortfall side can finance arbitrarily large gains budgets.
    Unbounded,
}

/// One evaluated threshold: the planner's view of a candidate design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CPoint {
    pub c: f64,
    pub q: f64,
    pub delta: f64,
    pub lambda: Option<f64>,
    pub value: f64,
}

/// The claim as a function of the realised price density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffRule {
    /// Gains `I(lambda xi)` up to the threshold, the loss profile beyond it.
    Threshold {
        c: f64,
        lambda: f64,
        utility: UtilitySpec,
        loss: LossProfile,
    },
    /// Explicit claim per price atom.
    States { xi: Vec<f64>, x: Vec<f64> },
}

impl PayoffRule {
    pub fn eval(&self, xi: f64) -> f64 {
        match self {
            PayoffRule::Threshold { c, lambda, utility, loss } => {
                if xi <= *c {
                    if xi <= 0.0 {
                        return 0.0;
                    }
                    utility.inverse_marginal(lambda * xi).unwrap_or(0.0)
                } else {
                    loss.eval(xi)
                }
            }
            PayoffRule::States { xi: grid, x } => {
                if grid.is_empty() {
                    return 0.0;
                }
                let idx = grid.partition_point(|&g| g < xi);
                let lo = idx.saturating_sub(1);
                let hi = idx.min(grid.len() - 1);
                if (grid[hi] - xi).abs() < (xi - grid[lo]).abs() {
                    x[hi]
                } else {
                    x[lo]
                }
            }
        }
    }

    /// Kinks of `xi -> eval(xi)`, handed to quadrature as segment breaks.
    fn breaks(&self) -> Vec<f64> {
        match self {
            PayoffRule::Threshold { c, lambda, utility, loss } => {
                let mut b = vec![*c];
                let bound = utility.gains_support_bound(*lambda);
                if bound.is_finite() {
                    b.push(bound);
                }
                if let LossProfile::LogTail { d, .. } = loss {
                    b.push(*d);
                }
                b
            }
            PayoffRule::States { .. } => vec![],
        }
    }
}

/// Absolute defects of the three defining identities, measured on the final
/// claim through quadrature or exact sums, not through the solver's own
/// closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub budget: f64,
    pub value: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    /// The threshold sweep (atomless) or the lower-set sweep (discrete).
    pub samples: Vec<CPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub existence_limit: Option<Limit>,
    pub penalty: Penalty,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
    pub warnings: Vec<String>,
}

/// Constants of the claim written in terms of the terminal asset price:
/// `X(S_T) = [l/delta ln S_T + k1]^+` above `s_star`, and
/// `-beta [k2 - l ln S_T]^+` below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsConstants {
    pub l: f64,
    pub s_star: f64,
    pub k1: f64,
    pub k2: f64,
    /// Probability the terminal price clears `s_star`.
    pub p_no_loss: f64,
}

pub fn bs_constants(
    market: &BsMarket,
    delta: f64,
    beta: f64,
    c_star: f64,
    lambda_star: f64,
    eta_star: f64,
) -> BsConstants {
    let sig2 = market.sigma * market.sigma;
    let l = market.b / sig2;
    let s_star = s_of_xi(market, c_star);
    let drift_term = market.b * (sig2 - market.b) * market.t / (2.0 * sig2);
    let k1 = (drift_term - l * market.s0.ln() - (lambda_star / delta).ln()) / delta;
    let k2 = l * market.s0.ln() - drift_term + (beta / eta_star).ln();
    let z = ((market.s0 / s_star).ln() + (market.b - sig2 / 2.0) * market.t)
        / (market.sigma * market.t.sqrt());
    BsConstants { l, s_star, k1, k2, p_no_loss: norm::cdf(z) }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Plan {
    pub classification: Classification,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// `NoOptimum` only: the value left between the plan and the supremum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shortfall: Option<ShortfallSolution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs_constants: Option<BsConstants>,
    pub diagnostics: Diagnostics,
}

/// Best value with the risk budget unused: gains on the whole space.
pub fn no_risk_benchmark(spec: &ProblemSpec) -> Result<f64> {
    Ok(gains::solve(&spec.model, &spec.utility, f64::INFINITY, spec.x0())?.value)
}

fn shortfall_at(spec: &ProblemSpec, c: f64) -> Result<ShortfallSolution> {
    let solved = match &spec.risk {
        RiskSpec::Entropic { beta } => shortfall::solve_entropic(&spec.model, *beta, spec.rho0, c),
        RiskSpec::Spectral { .. } => shortfall::solve_spectral(&spec.model, &spec.risk, spec.rho0, c),
    };
    match solved {
        Err(SolverError::InfeasibleTail { .. }) => Ok(ShortfallSolution::zero(c, 0.0)),
        other => other,
    }
}

fn eval_c(spec: &ProblemSpec, c: f64, q: f64) -> Result<(CPoint, ShortfallSolution, GainsSolution)> {
    let sh = shortfall_at(spec, c)?;
    let x_plus = spec.x0() - sh.delta;
    let g = gains::solve(&spec.model, &spec.utility, c, x_plus)?;
    let lambda = if g.lambda.is_finite() { Some(g.lambda) } else { None };
    Ok((CPoint { c, q, delta: sh.delta, lambda, value: g.value }, sh, g))
}

/// Evaluate one threshold of the design family; used by parameter sweeps.
pub fn evaluate_at_c(spec: &ProblemSpec, c: f64) -> Result<CPoint> {
    if !(c.is_finite() && c > 0.0) {
        return Err(SolverError::Config(format!("threshold must be positive, got {c}")));
    }
    eval_c(spec, c, spec.model.cdf(c)).map(|(cp, _, _)| cp)
}

/// `E[xi X(xi)]` of a payoff rule.
pub fn claim_price(spec: &ProblemSpec, payoff: &PayoffRule) -> Result<f64> {
    if let (Some(states), PayoffRule::States { x, .. }) = (spec.model.states(), payoff) {
        return Ok(oracle::claim_price(states, x));
    }
    let g = |xi: f64| xi * payoff.eval(xi);
    spec.model.expect(&g, &Interval::all(), &payoff.breaks(), &spec.numerics.quad())
}

/// `E[u(X(xi)^+)]` of a payoff rule.
pub fn claim_value(spec: &ProblemSpec, payoff: &PayoffRule) -> Result<f64> {
    if let (Some(states), PayoffRule::States { x, .. }) = (spec.model.states(), payoff) {
        return Ok(oracle::claim_utility(&spec.utility, states, x));
    }
    let g = |xi: f64| spec.utility.eval(payoff.eval(xi).max(0.0));
    spec.model.expect(&g, &Interval::all(), &payoff.breaks(), &spec.numerics.quad())
}

/// Risk of the shortfall part of a payoff rule.
pub fn claim_risk(spec: &ProblemSpec, payoff: &PayoffRule) -> Result<f64> {
    if let (Some(states), PayoffRule::States { x, .. }) = (spec.model.states(), payoff) {
        return oracle::claim_risk(&spec.risk, states, x);
    }
    let q_loss = |u: f64| match spec.model.quantile(1.0 - u) {
        Ok(xi) => payoff.eval(xi).min(0.0),
        Err(_) => f64::NAN,
    };
    // payoff kinks at xi = k sit at u = 1 - F(k) on the quantile axis
    let breaks: Vec<f64> = payoff
        .breaks()
        .iter()
        .map(|&k| 1.0 - spec.model.cdf(k))
        .filter(|u| (0.0..1.0).contains(u))
        .collect();
    spec.risk.eval_risk(RiskInput::Quantile { q: &q_loss, breaks: &breaks }, &spec.numerics.quad())
}

fn residuals_for(spec: &ProblemSpec, payoff: &PayoffRule, value: f64, delta: f64) -> Result<Residuals> {
    let price = claim_price(spec, payoff)?;
    let val = claim_value(spec, payoff)?;
    let rho = claim_risk(spec, payoff)?;
    let risk_defect = if delta < -1e-12 {
        (rho - spec.rho0).abs()
    } else {
        (rho - spec.rho0).max(0.0)
    };
    Ok(Residuals {
        budget: (price - spec.x0()).abs(),
        value: (val - value).abs(),
        risk: risk_defect,
    })
}

fn solve_discrete(spec: &ProblemSpec, penalty: Penalty, limit: Option<Limit>) -> Result<Plan> {
    let inst = OracleInstance::new(
        spec.model.clone(),
        spec.utility,
        spec.risk.clone(),
        spec.x0(),
        spec.rho0,
    )?;
    let res = oracle::enumerate_solve(&inst)?;
    let states = spec.model.states().expect("discrete route");
    let n = states.len();
    let payoff = PayoffRule::States {
        xi: states.iter().map(|s| s.xi).collect(),
        x: res.best_claim.clone(),
    };
    let mut samples = Vec::with_capacity(n + 1);
    let mut cum = 0.0;
    for j in 0..=n {
        let row = res.rows[(1usize << j) - 1];
        let (c, q) = if j == 0 {
            (spec.model.ess_inf(), 0.0)
        } else {
            cum += states[j - 1].p;
            (states[j - 1].xi, cum.min(1.0))
        };
        samples.push(CPoint { c, q, delta: row.delta, lambda: row.lambda, value: row.value });
    }
    let mut warnings = Vec::new();
    let is_prefix = (res.best.mask & (res.best.mask + 1)) == 0;
    let (c_star, q_star) = if is_prefix && res.best.mask != 0 {
        let j = res.best.mask.count_ones() as usize;
        (Some(states[j - 1].xi), Some(states[..j].iter().map(|s| s.p).sum::<f64>()))
    } else {
        if !is_prefix {
            warnings.push("optimal gains set is not a lower set of the price density".into());
        }
        (None, None)
    };
    let residuals = residuals_for(spec, &payoff, res.best.value, res.best.delta)?;
    Ok(Plan {
        classification: Classification::Optimal,
        c_star,
        q_star,
        lambda_star: res.best.lambda,
        value: Some(res.best.value),
        epsilon: None,
        shortfall: None,
        payoff: Some(payoff),
        bs_constants: None,
        diagnostics: Diagnostics {
            samples,
            existence_limit: limit,
            penalty,
            residuals: Some(residuals),
            warnings,
        },
    })
}

pub fn solve(spec: &ProblemSpec) -> Result<Plan> {
    spec.validate()?;
    let penalty = spec.risk.penalty_at_density(&spec.model);
    let limit = if spec.risk.is_spectral() {
        Some(shortfall::existence_limit(&spec.model, &spec.risk)?)
    } else {
        None
    };
    if spec.rho0 > 0.0 {
        if let Some(Limit::Infinite) = limit {
            return Ok(Plan {
                classification: Classification::Unbounded,
                c_star: None,
                q_star: None,
                lambda_star: None,
                value: None,
                epsilon: None,
                shortfall: None,
                payoff: None,
                bs_constants: None,
                diagnostics: Diagnostics {
                    samples: vec![],
                    existence_limit: limit,
                    penalty,
                    residuals: None,
                    warnings: vec![
                        "shortfall relief grows without bound on this density; no design attains the supremum"
                            .into(),
                    ],
                },
            });
        }
    }
    if spec.x0() == 0.0 && spec.rho0 == 0.0 {
        return Ok(Plan {
            classification: Classification::Optimal,
            c_star: None,
            q_star: None,
            lambda_star: None,
            value: Some(0.0),
            epsilon: None,
            shortfall: None,
            payoff: Some(PayoffRule::States { xi: vec![], x: vec![] }),
            bs_constants: None,
            diagnostics: Diagnostics {
                samples: vec![],
                existence_limit: limit,
                penalty,
                residuals: Some(Residuals { budget: 0.0, value: 0.0, risk: 0.0 }),
                warnings: vec!["zero surplus and zero risk budget: the claim is identically zero".into()],
            },
        });
    }
    if spec.model.states().is_some() {
        return solve_discrete(spec, penalty, limit);
    }

    let nm = spec.numerics;
    let g = nm.grid_points;
    let span = nm.q_max - nm.q_min;
    let qs: Vec<f64> = (0..g).map(|i| nm.q_min + span * i as f64 / (g - 1) as f64).collect();
    let samples: Vec<CPoint> = exec::try_map_indexed(g, |i| {
        let c = spec.model.quantile(qs[i])?;
        eval_c(spec, c, qs[i]).map(|(cp, _, _)| cp)
    })?;
    let mut i_star = 0usize;
    for (i, pt) in samples.iter().enumerate() {
        if pt.value > samples[i_star].value {
            i_star = i;
        }
    }

    // golden refinement inside the bracketing cells
    let lo = qs[i_star.saturating_sub(1)];
    let hi = qs[(i_star + 1).min(g - 1)];
    let mut probe = |q: f64| match spec.model.quantile(q).and_then(|c| eval_c(spec, c, q)) {
        Ok((cp, _, _)) => cp.value,
        Err(_) => f64::NEG_INFINITY,
    };
    let (mut q_star, refined) = root::golden_max(&mut probe, lo, hi, nm.q_tol);
    if refined < samples[i_star].value {
        q_star = qs[i_star];
    }

    let boundary = i_star + 3 > g;
    let mut warnings = Vec::new();
    let (cp, sh, gains_sol) = {
        let c = spec.model.quantile(q_star)?;
        eval_c(spec, c, q_star)?
    };

    // a grid maximiser should survive a small perturbation to either side
    if !boundary {
        let dq = span * 1e-3;
        for q in [q_star - dq, q_star + dq] {
            if q > nm.q_min && q < nm.q_max {
                if let Ok(c) = spec.model.quantile(q) {
                    if let Ok((other, _, _)) = eval_c(spec, c, q) {
                        if other.value > cp.value + 1e-9 {
                            warnings.push(format!(
                                "threshold q={q_star:.6} failed a local perturbation check"
                            ));
                        }
                    }
                }
            }
        }
    }

    let classification = if boundary {
        if spec.risk.is_spectral() {
            Classification::NoOptimum
        } else {
            warnings.push("optimum pinned at the upper grid boundary".into());
            Classification::Optimal
        }
    } else {
        Classification::Optimal
    };

    let epsilon = if classification == Classification::NoOptimum {
        let rate = match shortfall::relief_rate_bound(&spec.model, &spec.risk)? {
            Limit::Finite { value } => value,
            Limit::Infinite => unreachable!("infinite limits classify as unbounded earlier"),
        };
        let x_sup = spec.x0() + spec.rho0 * rate;
        let v_sup = gains::solve(&spec.model, &spec.utility, f64::INFINITY, x_sup)?.value;
        warnings.push(
            "no threshold attains the supremum; the plan is feasible and epsilon-close to it".into(),
        );
        Some((v_sup - cp.value).max(0.0))
    } else {
        None
    };

    let payoff = PayoffRule::Threshold {
        c: cp.c,
        lambda: gains_sol.lambda,
        utility: spec.utility,
        loss: sh.profile,
    };
    let residuals = residuals_for(spec, &payoff, cp.value, sh.delta)?;

    let bs = match (&spec.market, &spec.utility, &spec.risk, &spec.model) {
        (
            Some(market),
            UtilitySpec::Exponential { delta },
            RiskSpec::Entropic { beta },
            DensityModel::Lognormal { .. },
        ) => sh.eta.map(|eta| bs_constants(market, *delta, *beta, cp.c, gains_sol.lambda, eta)),
        _ => None,
    };

    Ok(Plan {
        classification,
        c_star: Some(cp.c),
        q_star: Some(q_star),
        lambda_star: Some(gains_sol.lambda),
        value: Some(cp.value),
        epsilon,
        shortfall: Some(sh),
        payoff: Some(payoff),
        bs_constants: bs,
        diagnostics: Diagnostics {
            samples,
            existence_limit: limit,
            penalty,
            residuals: Some(residuals),
            warnings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn paper_market() -> BsMarket {
        BsMarket { s0: 5.0, b: 0.15, sigma: 0.4, t: 1.0 }
    }

    fn base_spec() -> ProblemSpec {
        let mut spec = ProblemSpec::new(
            DensityModel::black_scholes(0.15, 0.4, 1.0).unwrap(),
            UtilitySpec::Exponential { delta: 0.6 },
            RiskSpec::entropic(1.0).unwrap(),
            1.5,
            0.0,
            1.5,
        )
        .unwrap();
        spec.market = Some(paper_market());
        spec
    }

    #[test]
    fn entropic_lognormal_design_is_interior_and_consistent() {
        let spec = base_spec();
        let plan = solve(&spec).unwrap();
        assert_eq!(plan.classification, Classification::Optimal);
        let q = plan.q_star.unwrap();
        assert!(q > 0.5 && q < 0.995, "q* = {q}");
        let c = plan.c_star.unwrap();
        assert!(c > 1.2 && c < 1.8, "c* = {c}");
        let res = plan.diagnostics.residuals.unwrap();
        assert!(res.budget <= 1e-6, "budget residual {}", res.budget);
        assert!(res.value <= 1e-6, "value residual {}", res.value);
        assert!(res.risk <= 1e-6, "risk residual {}", res.risk);
        let bench = no_risk_benchmark(&spec).unwrap();
        assert!(plan.value.unwrap() > bench + 0.05, "{} vs {}", plan.value.unwrap(), bench);
        let bs = plan.bs_constants.unwrap();
        assert_abs_diff_eq!(bs.l, 0.9375, epsilon = 1e-12);
        assert!(plan.diagnostics.warnings.is_empty(), "{:?}", plan.diagnostics.warnings);
        assert!(matches!(plan.diagnostics.penalty, Penalty::Finite { .. }));
    }

    #[test]
    fn reported_constants_match_independent_computation() {
        // the claim in price terms at a fixed reference triple
        let bs = bs_constants(&paper_market(), 0.6, 1.0, 2.72293, 0.0596571, 0.185501);
        assert_abs_diff_eq!(bs.l, 0.9375, epsilon = 1e-12);
        assert_abs_diff_eq!(bs.s_star, 1.70914, epsilon = 2e-4);
        assert_abs_diff_eq!(bs.k1, 1.340259, epsilon = 2e-5);
        assert_abs_diff_eq!(bs.k2, 3.188856, epsilon = 2e-5);
        assert_abs_diff_eq!(bs.p_no_loss, 0.99788, epsilon = 5e-4);
    }

    #[test]
    fn price_map_round_trips() {
        let market = paper_market();
        for &xi in &[0.3, 1.0, 2.72293] {
            let s = s_of_xi(&market, xi);
            assert_abs_diff_eq!(xi_of_s(&market, s), xi, epsilon = 1e-12);
        }
        // cheaper states of the world carry higher prices
        assert!(xi_of_s(&market, 2.0) > xi_of_s(&market, 6.0));
    }

    #[test]
    fn cvar_on_lognormal_is_unbounded() {
        let spec = ProblemSpec::new(
            DensityModel::black_scholes(0.15, 0.4, 1.0).unwrap(),
            UtilitySpec::Exponential { delta: 0.6 },
            RiskSpec::cvar(0.5).unwrap(),
            1.5,
            0.0,
            0.3,
        )
        .unwrap();
        let plan = solve(&spec).unwrap();
        assert_eq!(plan.classification, Classification::Unbounded);
        assert!(plan.value.is_none() && plan.payoff.is_none() && plan.c_star.is_none());
        assert_eq!(plan.diagnostics.existence_limit, Some(Limit::Infinite));
        assert!(!plan.diagnostics.warnings.is_empty());
    }

    #[test]
    fn cvar_on_bounded_density_has_no_optimum_but_a_close_plan() {
        let mut spec = ProblemSpec::new(
            DensityModel::truncated_lognormal(-0.0703125, 0.375, 3.0, true).unwrap(),
            UtilitySpec::Exponential { delta: 0.6 },
            RiskSpec::cvar(0.5).unwrap(),
            1.0,
            0.0,
            0.3,
        )
        .unwrap();
        spec.numerics.grid_points = 128;
        let plan = solve(&spec).unwrap();
        assert_eq!(plan.classification, Classification::NoOptimum);
        let eps = plan.epsilon.unwrap();
        assert!(eps >= 0.0 && eps < 1e-2, "epsilon = {eps}");
        assert!(plan.payoff.is_some() && plan.value.is_some());
        match plan.diagnostics.existence_limit {
            Some(Limit::Finite { value }) => assert!(value > 1.0 && value < 2.5, "limit {value}"),
            other => panic!("expected a finite limit, got {other:?}"),
        }
        let res = plan.diagnostics.residuals.unwrap();
        assert!(res.budget <= 1e-5 && res.risk <= 1e-4, "{res:?}");
    }

    #[test]
    fn discrete_models_take_the_enumeration_route() {
        let spec = ProblemSpec::new(
            DensityModel::discrete(&[(0.4, 0.25), (0.9, 0.35), (1.4, 0.25), (2.2, 0.15)]).unwrap(),
            UtilitySpec::Exponential { delta: 0.6 },
            RiskSpec::entropic(1.0).unwrap(),
            1.2,
            0.0,
            0.8,
        )
        .unwrap();
        let plan = solve(&spec).unwrap();
        assert_eq!(plan.classification, Classification::Optimal);
        assert!(matches!(plan.payoff, Some(PayoffRule::States { .. })));
        assert_eq!(plan.diagnostics.samples.len(), 5);
        let res = plan.diagnostics.residuals.unwrap();
        assert!(res.budget <= 1e-8 && res.value <= 1e-8 && res.risk <= 1e-7, "{res:?}");
        // the sweep over lower sets can never beat the full enumeration
        let best_sample = plan.diagnostics.samples.iter().map(|s| s.value).fold(f64::MIN, f64::max);
        assert!(plan.value.unwrap() >= best_sample - 1e-12);
    }

    #[test]
    fn zero_budgets_give_the_zero_claim() {
        let spec = ProblemSpec::new(
            DensityModel::black_scholes(0.15, 0.4, 1.0).unwrap(),
            UtilitySpec::Exponential { delta: 0.6 },
            RiskSpec::entropic(1.0).unwrap(),
            1.0,
            1.0,
            0.0,
        )
        .unwrap();
        let plan = solve(&spec).unwrap();
        assert_eq!(plan.classification, Classification::Optimal);
        assert_eq!(plan.value, Some(0.0));
        assert_eq!(plan.payoff.as_ref().unwrap().eval(1.3), 0.0);
    }

    #[test]
    fn no_risk_budget_recovers_the_benchmark() {
        let mut spec = base_spec();
        spec.rho0 = 0.0;
        spec.numerics.grid_points = 96;
        let plan = solve(&spec).unwrap();
        assert_eq!(plan.classification, Classification::Optimal);
        assert!(!plan.diagnostics.warnings.is_empty());
        let bench = no_risk_benchmark(&spec).unwrap();
        assert_abs_diff_eq!(plan.value.unwrap(), bench, epsilon = 1e-5);
    }

    #[test]
    fn value_is_monotone_in_risk_budget_and_surplus() {
        let coarse = |v0: f64, rho0: f64| {
            let mut spec = base_spec();
            spec.market = None;
            spec.v0 = v0;
            spec.rho0 = rho0;
            spec.numerics.grid_points = 64;
            solve(&spec).unwrap().value.unwrap()
        };
        let base = coarse(1.5, 0.75);
        assert!(coarse(1.5, 1.5) >= base - 1e-9);
        assert!(coarse(1.8, 0.75) >= base - 1e-9);
        assert!(coarse(1.2, 0.75) <= base + 1e-9);
    }

    #[test]
    fn sweep_point_matches_threshold_family() {
        let spec = base_spec();
        let cp = evaluate_at_c(&spec, 1.43).unwrap();
        assert_abs_diff_eq!(cp.c, 1.43, epsilon = 0.0);
        assert_abs_diff_eq!(cp.q, spec.model.cdf(1.43), epsilon = 0.0);
        assert!(cp.delta < 0.0);
        assert!(cp.lambda.is_some());
        assert!(cp.value > 0.0 && cp.value < 1.0);
        // beyond the support the relief vanishes and gains use the whole space
        let spec2 = ProblemSpec::new(
            DensityModel::truncated_lognormal(-0.0703125, 0.375, 3.0, true).unwrap(),
            UtilitySpec::Exponential { delta: 0.6 },
            RiskSpec::entropic(1.0).unwrap(),
            1.5,
            0.0,
            1.5,
        )
        .unwrap();
        let far = evaluate_at_c(&spec2, 10.0).unwrap();
        assert_eq!(far.delta, 0.0);
        assert_abs_diff_eq!(far.value, no_risk_benchmark(&spec2).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn plans_survive_a_serde_round_trip() {
        let mut spec = base_spec();
        spec.numerics.grid_points = 48;
        let plan = solve(&spec).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        let back: Plan = serde_json::from_str(&json).unwrap();
        let again = serde_json::to_string(&back).unwrap();
        assert_eq!(json, again);
        assert_eq!(back.value, plan.value);

        let unbounded = solve(
            &ProblemSpec::new(
                DensityModel::black_scholes(0.15, 0.4, 1.0).unwrap(),
                UtilitySpec::Exponential { delta: 0.6 },
                RiskSpec::cvar(0.5).unwrap(),
                1.5,
                0.0,
                0.3,
            )
            .unwrap(),
        )
        .unwrap();
        let json = serde_json::to_string(&unbounded).unwrap();
        let back: Plan = serde_json::from_str(&json).unwrap();
        assert_eq!(back.classification, Classification::Unbounded);
    }

    #[test]
    fn bad_specifications_are_rejected() {
        let model = DensityModel::black_scholes(0.15, 0.4, 1.0).unwrap();
        let u = UtilitySpec::Exponential { delta: 0.6 };
        let r = RiskSpec::entropic(1.0).unwrap();
        assert!(ProblemSpec::new(model.clone(), u, r.clone(), 0.8, 1.0, 0.5).is_err());
        assert!(ProblemSpec::new(model.clone(), u, r.clone(), 1.5, -0.1, 0.5).is_err());
        assert!(ProblemSpec::new(model.clone(), u, r.clone(), 1.5, 0.0, -0.5).is_err());
        // market attachment must agree with the density
        let mut spec = ProblemSpec::new(model, u, r, 1.5, 0.0, 0.5).unwrap();
        spec.market = Some(BsMarket { s0: 5.0, b: 0.2, sigma: 0.4, t: 1.0 });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn monte_carlo_audit_passes_on_the_solved_design_and_fails_on_a_corrupted_one() {
        let mut spec = base_spec();
        spec.numerics.seed = Some(42);
        let plan = solve(&spec).unwrap();
        let report = oracle::verify_solution(&spec, &plan, 200_000, spec.numerics.seed).unwrap();
        assert!(report.pass, "{report:?}");
        assert_eq!(report.checks.len(), 3);

        let mut bad = plan.clone();
        if let Some(PayoffRule::Threshold { lambda, .. }) = bad.payoff.as_mut() {
            *lambda *= 1.1;
        }
        let report = oracle::verify_solution(&spec, &bad, 200_000, spec.numerics.seed).unwrap();
        assert!(!report.pass);
        assert!(!report.checks.iter().find(|c| c.name == "budget").unwrap().pass);

        assert!(matches!(
            oracle::verify_solution(&spec, &plan, 200_000, None),
            Err(SolverError::SeedMissing)
        ));
    }
}

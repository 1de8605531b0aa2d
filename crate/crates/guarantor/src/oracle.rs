//! Exhaustive reference solver on small finite state spaces.
//!
//! With at most [`MAX_STATES`] price atoms the gains set can be enumerated
//! outright: every subset of states gets the decoupled treatment (shortfall
//! relief priced on the complement, gains budget spent inside), and the best
//! subset wins. The planner routes atom-bearing models here, and the test
//! suite uses the enumeration as ground truth for the threshold family.

use crate::density::{DensityModel, State};
use crate::error::{Result, SolverError};
use crate::exec;
use crate::planner::{Classification, Plan, ProblemSpec};
use crate::risk::{RiskInput, RiskSpec};
use crate::root::{self, RootCfg};
use crate::utility::UtilitySpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Enumeration covers `2^n` subsets; past this the table stops being cheap.
pub const MAX_STATES: usize = 16;

#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub model: DensityModel,
    pub utility: UtilitySpec,
    pub risk: RiskSpec,
    pub x0: f64,
    pub rho0: f64,
}

impl OracleInstance {
    pub fn new(
        model: DensityModel,
        utility: UtilitySpec,
        risk: RiskSpec,
        x0: f64,
        rho0: f64,
    ) -> Result<Self> {
        utility.validate()?;
        risk.validate()?;
        let n = model
            .states()
            .ok_or_else(|| SolverError::Config("enumeration needs a discrete price density".into()))?
            .len();
        if n > MAX_STATES {
            return Err(SolverError::BudgetExceeded { n, max: MAX_STATES });
        }
        if !(x0.is_finite() && x0 >= 0.0) {
            return Err(SolverError::Config(format!("initial surplus must be nonnegative, got {x0}")));
        }
        if !(rho0.is_finite() && rho0 >= 0.0) {
            return Err(SolverError::Config(format!("risk budget must be nonnegative, got {rho0}")));
        }
        Ok(OracleInstance { model, utility, risk, x0, rho0 })
    }

    pub fn states(&self) -> &[State] {
        self.model.states().expect("validated at construction")
    }
}

/// One subset of the enumeration table. `mask` bit `i` set means state `i`
/// (states in increasing price order) carries gains; clear means it may
/// carry shortfall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub mask: u32,
    /// Shortfall subsidy collected on the complement, `<= 0`.
    pub delta: f64,
    /// Gains budget `x0 - delta`.
    pub x_plus: f64,
    /// Gains multiplier; absent when the subset cannot spend the budget.
    pub lambda: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    /// Indexed by mask.
    pub rows: Vec<SubsetRow>,
    pub best: SubsetRow,
    /// State-by-state claim attaining `best.value`.
    pub best_claim: Vec<f64>,
    /// Best row among lower sets `{xi <= xi_j}` (prefix masks).
    pub best_lower: SubsetRow,
    /// `best.value - best_lower.value >= 0`.
    pub lower_set_gap: f64,
}

/// Shortfall levels on a fixed set of states, risk budget exhausted.
struct LossPlan {
    delta: f64,
    /// Parallel to the `sel` slice it was built from.
    levels: Vec<f64>,
}

fn loss_on_set(risk: &RiskSpec, rho0: f64, sel: &[State]) -> Result<LossPlan> {
    if sel.is_empty() || rho0 == 0.0 {
        return Ok(LossPlan { delta: 0.0, levels: vec![0.0; sel.len()] });
    }
    match risk {
        RiskSpec::Entropic { beta } => {
            let mass: f64 = sel.iter().map(|st| st.p).sum();
            let rhs = (rho0 / beta).exp() - 1.0 + mass;
            let mut residual = |eta: f64| {
                sel.iter().map(|st| st.p * (beta * st.xi / eta).max(1.0)).sum::<f64>() - rhs
            };
            let eta = root::solve_decreasing_log(&mut residual, *beta, &RootCfg::default(), "subset eta")?;
            let levels: Vec<f64> = sel
                .iter()
                .map(|st| {
                    let r = beta * st.xi / eta;
                    if r > 1.0 { -beta * r.ln() } else { 0.0 }
                })
                .collect();
            let delta = sel.iter().zip(&levels).map(|(st, y)| st.p * st.xi * y).sum();
            Ok(LossPlan { delta, levels })
        }
        RiskSpec::Spectral { .. } => {
            // Flat level on the j most expensive states of the set, for the
            // best j. Vertices of the (sorted-level) feasible polytope carry
            // a single nonzero level, and price is minimised by stacking it
            // against the largest prices.
            let mut order: Vec<usize> = (0..sel.len()).collect();
            order.sort_by(|&a, &b| sel[b].xi.total_cmp(&sel[a].xi));
            let (mut t, mut p) = (0.0, 0.0);
            let mut best: Option<(usize, f64)> = None;
            for (j, &idx) in order.iter().enumerate() {
                t += sel[idx].p * sel[idx].xi;
                p += sel[idx].p;
                let ratio = t / risk.phi_integral(p.min(1.0))?;
                if best.map_or(true, |(_, r)| ratio > r) {
                    best = Some((j, ratio));
                }
            }
            let (j_best, ratio) = best.expect("set is nonempty");
            let chosen_mass: f64 = order[..=j_best].iter().map(|&i| sel[i].p).sum();
            let level = -rho0 / risk.phi_integral(chosen_mass.min(1.0))?;
            let mut levels = vec![0.0; sel.len()];
            for &idx in &order[..=j_best] {
                levels[idx] = level;
            }
            Ok(LossPlan { delta: -rho0 * ratio, levels })
        }
    }
}

/// Spend `x_plus` on the set: multiplier, utility, and per-state claims.
fn gains_on_set(u: &UtilitySpec, sel: &[State], x_plus: f64) -> Result<(Option<f64>, f64, Vec<f64>)> {
    if sel.is_empty() || x_plus <= 0.0 {
        return Ok((None, 0.0, vec![0.0; sel.len()]));
    }
    // exponential below the support bound is log-linear in lambda; solve it
    // directly, since bisection cannot reach the multiplier on sets whose
    // priced mass is small against the budget
    if let UtilitySpec::Exponential { delta } = u {
        let s1: f64 = sel.iter().map(|st| st.p * st.xi).sum();
        let sxl: f64 = sel.iter().map(|st| st.p * st.xi * st.xi.ln()).sum();
        let xi_max = sel.iter().map(|st| st.xi).fold(0.0, f64::max);
        let lambda = (delta.ln() - (delta * x_plus + sxl) / s1).exp().max(f64::MIN_POSITIVE);
        if lambda <= delta / xi_max {
            let claims: Vec<f64> =
                sel.iter().map(|st| u.inverse_marginal(lambda * st.xi).unwrap_or(0.0)).collect();
            let value = sel.iter().zip(&claims).map(|(st, x)| st.p * u.eval(*x)).sum();
            return Ok((Some(lambda), value, claims));
        }
    }
    let mut residual = |lambda: f64| {
        sel.iter()
            .map(|st| st.p * st.xi * u.inverse_marginal(lambda * st.xi).unwrap_or(0.0))
            .sum::<f64>()
            - x_plus
    };
    let lambda = root::solve_decreasing_log(&mut residual, 1.0, &RootCfg::default(), "subset lambda")?;
    let claims: Vec<f64> = sel.iter().map(|st| u.inverse_marginal(lambda * st.xi).unwrap_or(0.0)).collect();
    let value = sel.iter().zip(&claims).map(|(st, x)| st.p * u.eval(*x)).sum();
    Ok((Some(lambda), value, claims))
}

fn split_states(states: &[State], mask: u32) -> (Vec<State>, Vec<State>) {
    let mut gain = Vec::new();
    let mut loss = Vec::new();
    for (i, st) in states.iter().enumerate() {
        if mask & (1 << i) != 0 {
            gain.push(*st);
        } else {
            loss.push(*st);
        }
    }
    (gain, loss)
}

fn eval_mask(inst: &OracleInstance, mask: u32) -> Result<SubsetRow> {
    let (gain, loss) = split_states(inst.states(), mask);
    let lp = loss_on_set(&inst.risk, inst.rho0, &loss)?;
    let x_plus = inst.x0 - lp.delta;
    let (lambda, value, _) = gains_on_set(&inst.utility, &gain, x_plus)?;
    Ok(SubsetRow { mask, delta: lp.delta, x_plus, lambda, value })
}

/// Full claim vector for one subset, in state order.
pub fn claim_for_mask(inst: &OracleInstance, mask: u32) -> Result<Vec<f64>> {
    let states = inst.states();
    let (gain, loss) = split_states(states, mask);
    let lp = loss_on_set(&inst.risk, inst.rho0, &loss)?;
    let (_, _, gains) = gains_on_set(&inst.utility, &gain, inst.x0 - lp.delta)?;
    let mut claim = vec![0.0; states.len()];
    let (mut gi, mut li) = (0, 0);
    for (i, _) in states.iter().enumerate() {
        if mask & (1 << i) != 0 {
            claim[i] = gains[gi];
            gi += 1;
        } else {
            claim[i] = lp.levels[li];
            li += 1;
        }
    }
    Ok(claim)
}

/// Price of a claim vector, `sum p_i xi_i x_i`.
pub fn claim_price(states: &[State], x: &[f64]) -> f64 {
    states.iter().zip(x).map(|(st, xi)| st.p * st.xi * xi).sum()
}

/// Expected utility of the gains part, `sum p_i u(x_i^+)`.
pub fn claim_utility(u: &UtilitySpec, states: &[State], x: &[f64]) -> f64 {
    states.iter().zip(x).map(|(st, xi)| st.p * u.eval(xi.max(0.0))).sum()
}

/// Risk of the shortfall part `min(x_i, 0)`.
pub fn claim_risk(risk: &RiskSpec, states: &[State], x: &[f64]) -> Result<f64> {
    let steps: Vec<(f64, f64)> = states.iter().zip(x).map(|(st, xi)| (xi.min(0.0), st.p)).collect();
    risk.eval_risk(RiskInput::Steps(&steps), &Default::default())
}

pub fn subset_table(inst: &OracleInstance) -> Result<Vec<SubsetRow>> {
    let total = 1usize << inst.states().len();
    exec::try_map_indexed(total, |mask| eval_mask(inst, mask as u32))
}

/// Sequential twin of [`subset_table`], kept as the benchmark baseline.
pub fn subset_table_seq(inst: &OracleInstance) -> Result<Vec<SubsetRow>> {
    let total = 1usize << inst.states().len();
    exec::try_map_indexed_seq(total, |mask| eval_mask(inst, mask as u32))
}

pub fn enumerate_solve(inst: &OracleInstance) -> Result<OracleResult> {
    let rows = subset_table(inst)?;
    let n = inst.states().len();
    let best = *rows
        .iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("table is nonempty");
    let mut best_lower = rows[0];
    for j in 1..=n {
        let row = rows[(1usize << j) - 1];
        if row.value > best_lower.value {
            best_lower = row;
        }
    }
    let best_claim = claim_for_mask(inst, best.mask)?;
    let lower_set_gap = best.value - best_lower.value;
    Ok(OracleResult { rows, best, best_claim, best_lower, lower_set_gap })
}

/// Multi-start projected coordinate ascent over raw claim vectors.
///
/// Moves are budget-preserving transfers between pairs of states, so the
/// search is free of the gains/loss split the enumeration assumes; agreement
/// between the two is evidence the split is not leaving value on the table.
pub fn direct_search_best(inst: &OracleInstance, seed: u64) -> Result<f64> {
    let states = inst.states();
    let n = states.len();
    let full = ((1u64 << n) - 1) as u32;
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for j in 0..=n {
        // every lower-set pattern, gains on the j cheapest states
        starts.push(claim_for_mask(inst, ((1u64 << j) - 1) as u32)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..32 {
        starts.push(claim_for_mask(inst, rng.gen_range(0..=full))?);
    }
    for _ in 0..4 {
        // raw positive vector scaled onto the budget
        let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let price = claim_price(states, &raw);
        if price > 0.0 {
            starts.push(raw.iter().map(|x| x * inst.x0 / price).collect());
        }
    }
    let mut best = f64::NEG_INFINITY;
    for mut x in starts {
        let v = ascend(inst, &mut x)?;
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

fn ascend(inst: &OracleInstance, x: &mut [f64]) -> Result<f64> {
    let states = inst.states();
    let n = states.len();
    let scale = inst.x0.abs() + inst.rho0 + 1.0;
    let mut cur = claim_utility(&inst.utility, states, x);
    let mut cur_rho = claim_risk(&inst.risk, states, x)?;
    for _sweep in 0..400 {
        let mut improved = false;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                // move budget t from state j to state i
                let mut t = scale;
                while t > 1e-9 * scale {
                    let xi_new = x[i] + t / (states[i].p * states[i].xi);
                    let xj_new = x[j] - t / (states[j].p * states[j].xi);
                    let (old_i, old_j) = (x[i], x[j]);
                    x[i] = xi_new;
                    x[j] = xj_new;
                    let rho = claim_risk(&inst.risk, states, x)?;
                    let v = if rho <= inst.rho0 + 1e-9 {
                        claim_utility(&inst.utility, states, x)
                    } else {
                        f64::NEG_INFINITY
                    };
                    // accept on utility, or on equal utility with strictly
                    // lower risk: loss-side rebalances keep the utility fixed
                    // but free slack that later transfers can spend
                    if v > cur + 1e-12 || (v >= cur - 1e-15 && rho < cur_rho - 1e-12) {
                        cur = v.max(cur);
                        cur_rho = rho;
                        improved = true;
                        break;
                    }
                    x[i] = old_i;
                    x[j] = old_j;
                    t *= 0.5;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(cur)
}

/// Deterministic random instance for cross-checks and benches.
pub fn seeded_instance(seed: u64, n: usize) -> Result<OracleInstance> {
    assert!((1..=MAX_STATES).contains(&n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xis: Vec<f64> = Vec::with_capacity(n);
    while xis.len() < n {
        let cand = 0.2 + 3.0 * rng.gen::<f64>();
        if xis.iter().all(|&x: &f64| (x - cand).abs() > 1e-3) {
            xis.push(cand);
        }
    }
    xis.sort_by(f64::total_cmp);
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.gen::<f64>()).collect();
    let mass: f64 = raw.iter().sum();
    let pairs: Vec<(f64, f64)> = xis.iter().zip(&raw).map(|(&xi, &w)| (xi, w / mass)).collect();
    let model = DensityModel::discrete(&pairs)?;
    let utility = match seed % 3 {
        0 => UtilitySpec::Exponential { delta: 0.6 },
        1 => UtilitySpec::Power { gamma: 0.5 },
        _ => UtilitySpec::LogShifted { a: 1.0 },
    };
    let risk = if seed % 2 == 0 {
        RiskSpec::entropic(0.5 + rng.gen::<f64>())?
    } else {
        RiskSpec::cvar(0.3 + 0.6 * rng.gen::<f64>())?
    };
    let x0 = 0.5 + 2.5 * rng.gen::<f64>();
    let rho0 = 2.0 * rng.gen::<f64>();
    OracleInstance::new(model, utility, risk, x0, rho0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RearrangementCheck {
    /// Mean of the comonotone pairing (both sequences ascending).
    pub comonotone: f64,
    pub best: f64,
    pub worst: f64,
}

/// Exhaustive check that the comonotone pairing maximises `E[XY]` over all
/// pairings of two equal-weight sequences. Limited to eight points.
pub fn rearrangement_check(xs: &[f64], ys: &[f64]) -> Result<RearrangementCheck> {
    let n = xs.len();
    if n == 0 || n != ys.len() {
        return Err(SolverError::Config("rearrangement check needs equal nonempty sequences".into()));
    }
    if n > 8 {
        return Err(SolverError::BudgetExceeded { n, max: 8 });
    }
    let mut xs_sorted = xs.to_vec();
    let mut ys_sorted = ys.to_vec();
    xs_sorted.sort_by(f64::total_cmp);
    ys_sorted.sort_by(f64::total_cmp);
    let mean = |perm: &[f64]| -> f64 {
        xs_sorted.iter().zip(perm).map(|(a, b)| a * b).sum::<f64>() / n as f64
    };
    let comonotone = mean(&ys_sorted);
    let (mut best, mut worst) = (f64::NEG_INFINITY, f64::INFINITY);
    permute(&mut ys_sorted, 0, &mut |perm| {
        let v = mean(perm);
        best = best.max(v);
        worst = worst.min(v);
    });
    Ok(RearrangementCheck { comonotone, best, worst })
}

fn permute(ys: &mut [f64], k: usize, visit: &mut dyn FnMut(&[f64])) {
    if k == ys.len() {
        visit(ys);
        return;
    }
    for i in k..ys.len() {
        ys.swap(k, i);
        permute(ys, k + 1, visit);
        ys.swap(k, i);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub paths: usize,
    pub seed: u64,
    pub checks: Vec<CheckLine>,
    pub pass: bool,
}

struct MeanVar {
    n: f64,
    mean: f64,
    m2: f64,
}

impl MeanVar {
    fn new() -> Self {
        MeanVar { n: 0.0, mean: 0.0, m2: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn se(&self) -> f64 {
        if self.n < 2.0 {
            return f64::INFINITY;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Monte Carlo audit of a solved plan: draws price paths by inverse CDF and
/// checks the budget identity, the reported value, and risk feasibility at
/// three standard errors plus the configured tolerance.
pub fn verify_solution(
    spec: &ProblemSpec,
    plan: &Plan,
    paths: usize,
    seed: Option<u64>,
) -> Result<VerificationReport> {
    let seed = seed.ok_or(SolverError::SeedMissing)?;
    if plan.classification == Classification::Unbounded {
        return Err(SolverError::Config("an unbounded problem has no claim to verify".into()));
    }
    let payoff = plan
        .payoff
        .as_ref()
        .ok_or_else(|| SolverError::Config("plan carries no payoff rule".into()))?;
    let value = plan.value.ok_or_else(|| SolverError::Config("plan carries no value".into()))?;
    if paths < 64 {
        return Err(SolverError::Config(format!("need at least 64 paths, got {paths}")));
    }
    let tol = spec.numerics.check_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut budget = MeanVar::new();
    let mut util = MeanVar::new();
    let n_batches = 32usize;
    let batch_len = paths / n_batches;
    // entropic risk streams through exp(-loss/beta); spectral risk needs the
    // loss sample itself, batched so the spread of batch risks gives an SE
    let mut exp_acc = MeanVar::new();
    let mut batches: Vec<Vec<f64>> = vec![Vec::new(); n_batches];
    for i in 0..paths {
        let u = ((rng.gen::<u64>() >> 11) as f64 + 0.5) * (2f64).powi(-53);
        let xi = spec.model.quantile(u)?;
        let x = payoff.eval(xi);
        budget.push(xi * x);
        util.push(spec.utility.eval(x.max(0.0)));
        let loss = x.min(0.0);
        match &spec.risk {
            RiskSpec::Entropic { beta } => exp_acc.push((-loss / beta).exp()),
            RiskSpec::Spectral { .. } => batches[(i / batch_len.max(1)).min(n_batches - 1)].push(loss),
        }
    }
    let (risk_est, risk_se) = match &spec.risk {
        RiskSpec::Entropic { beta } => {
            (beta * exp_acc.mean.ln(), beta * exp_acc.se() / exp_acc.mean)
        }
        RiskSpec::Spectral { .. } => {
            let mut per_batch = MeanVar::new();
            for b in &batches {
                per_batch.push(spec.risk.eval_risk(RiskInput::Sample(b), &Default::default())?);
            }
            (per_batch.mean, per_batch.se())
        }
    };
    let x0 = spec.x0();
    let checks = vec![
        CheckLine {
            name: "budget".into(),
            estimate: budget.mean,
            se: budget.se(),
            target: x0,
            pass: (budget.mean - x0).abs() <= 3.0 * budget.se() + tol,
        },
        CheckLine {
            name: "value".into(),
            estimate: util.mean,
            se: util.se(),
            target: value,
            pass: (util.mean - value).abs() <= 3.0 * util.se() + tol,
        },
        CheckLine {
            name: "risk".into(),
            estimate: risk_est,
            se: risk_se,
            target: spec.rho0,
            pass: risk_est <= spec.rho0 + 3.0 * risk_se + tol,
        },
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport { paths, seed, checks, pass })
}

//! Convex risk measures on loss positions (`X <= 0` in the use we make of
//! them, though the definitions work on any integrable position).
//!
//! Two families are supported:
//! * entropic: `rho_beta(X) = beta ln E[exp(-X/beta)]`,
//! * spectral with finitely many CVaR atoms:
//!   `rho_mu(X) = sum_i w_i CVaR_{b_i}(X)`, evaluated through the spectrum
//!   `phi(x) = sum_{i: b_i > x} w_i / b_i` and its integral
//!   `Phi(z) = sum_i w_i min(z, b_i)/b_i` as
//!   `rho_mu(X) = -int_0^1 phi(u) q_X(u) du`.
//!
//! CVaR at level `b` is the single-atom case. Positions can be passed as an
//! equal-weight sample, as explicit `(value, probability)` steps, or as a
//! quantile function (integrated adaptively).

use crate::density::DensityModel;
use crate::error::{Result, SolverError};
use crate::quad::{self, QuadCfg};
use serde::{Deserialize, Serialize};

/// Clip for quantile-space integrals at both ends of `(0, 1)`.
const U_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralAtom {
    pub weight: f64,
    /// CVaR level in `(0, 1]`.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskSpec {
    Entropic { beta: f64 },
    Spectral { atoms: Vec<SpectralAtom> },
}

/// The model-dependent penalty floor `gamma_min` of a risk measure at a
/// pricing density; `-Delta(A) <= gamma_min + rho0` whenever it is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    Finite { value: f64 },
    Infinite,
    /// Multi-atom spectral penalties are not evaluated in closed form.
    NotComputed,
}

#[derive(Clone, Copy)]
pub enum RiskInput<'a> {
    /// Equal-weight sample of position values.
    Sample(&'a [f64]),
    /// `(value, probability)` pairs; probabilities must sum to one.
    Steps(&'a [(f64, f64)]),
    /// Quantile function `u -> q(u)` on `(0, 1)`, nondecreasing. `breaks`
    /// lists its interior kinks and jumps; without them quadrature can step
    /// straight over a thin feature and never notice it.
    Quantile { q: &'a dyn Fn(f64) -> f64, breaks: &'a [f64] },
}

impl RiskSpec {
    pub fn entropic(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(SolverError::Config(format!("entropic beta must be positive, got {beta}")));
        }
        Ok(RiskSpec::Entropic { beta })
    }

    pub fn cvar(level: f64) -> Result<Self> {
        RiskSpec::spectral(vec![SpectralAtom { weight: 1.0, level }])
    }

    pub fn spectral(atoms: Vec<SpectralAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(SolverError::Config("spectral measure needs at least one atom".into()));
        }
        let mut total = 0.0;
        for a in &atoms {
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return Err(SolverError::Config(format!("atom weight must be positive, got {}", a.weight)));
            }
            if !(a.level.is_finite() && a.level > 0.0 && a.level <= 1.0) {
                return Err(SolverError::Config(format!("atom level must lie in (0,1], got {}", a.level)));
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(SolverError::Config(format!("atom weights sum to {total}, not 1")));
        }
        Ok(RiskSpec::Spectral { atoms })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RiskSpec::Entropic { beta } => RiskSpec::entropic(*beta).map(|_| ()),
            RiskSpec::Spectral { atoms } => RiskSpec::spectral(atoms.clone()).map(|_| ()),
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, RiskSpec::Spectral { .. })
    }

    /// Spectrum `phi(x)` of a spectral measure (nonincreasing, integrates to 1).
    pub fn phi(&self, x: f64) -> Result<f64> {
        let RiskSpec::Spectral { atoms } = self else {
            return Err(SolverError::Domain("phi is defined for spectral measures only".into()));
        };
        if !(0.0..=1.0).contains(&x) || x.is_nan() {
            return Err(SolverError::Domain(format!("phi needs x in [0,1], got {x}")));
        }
        Ok(atoms.iter().filter(|a| a.level > x).map(|a| a.weight / a.level).sum())
    }

    /// `phi(0) = sum w_i / b_i`, the spectrum's value at the worst outcomes.
    pub fn phi_zero(&self) -> Result<f64> {
        self.phi(0.0)
    }

    /// `Phi(z) = int_0^z phi(u) du = sum_i w_i min(z, b_i)/b_i`.
    pub fn phi_integral(&self, z: f64) -> Result<f64> {
        let RiskSpec::Spectral { atoms } = self else {
            return Err(SolverError::Domain("phi_integral is defined for spectral measures only".into()));
        };
        if !(0.0..=1.0).contains(&z) || z.is_nan() {
            return Err(SolverError::Domain(format!("phi_integral needs z in [0,1], got {z}")));
        }
        Ok(atoms.iter().map(|a| a.weight * z.min(a.level) / a.level).sum())
    }

    /// Evaluate the risk measure on a position.
    pub fn eval_risk(&self, input: RiskInput<'_>, cfg: &QuadCfg) -> Result<f64> {
        match self {
            RiskSpec::Entropic { beta } => entropic_eval(*beta, input, cfg),
            RiskSpec::Spectral { atoms } => spectral_eval(self, atoms, input, cfg),
        }
    }

    /// Penalty floor at a pricing density.
    pub fn penalty_at_density(&self, model: &DensityModel) -> Penalty {
        match self {
            RiskSpec::Entropic { beta } => {
                let e = model.partial_xi_log_moment(&crate::density::Interval::all());
                if e.is_finite() {
                    Penalty::Finite { value: beta * e }
                } else {
                    Penalty::Infinite
                }
            }
            RiskSpec::Spectral { atoms } => {
                if atoms.len() == 1 {
                    if model.ess_sup() <= 1.0 / atoms[0].level {
                        Penalty::Finite { value: 0.0 }
                    } else {
                        Penalty::Infinite
                    }
                } else {
                    Penalty::NotComputed
                }
            }
        }
    }
}

fn entropic_eval(beta: f64, input: RiskInput<'_>, cfg: &QuadCfg) -> Result<f64> {
    let mean = match input {
        RiskInput::Sample(xs) => {
            if xs.is_empty() {
                return Err(SolverError::Domain("empty sample".into()));
            }
            xs.iter().map(|x| (-x / beta).exp()).sum::<f64>() / xs.len() as f64
        }
        RiskInput::Steps(steps) => steps.iter().map(|(v, p)| p * (-v / beta).exp()).sum(),
        RiskInput::Quantile { q, breaks } => {
            let f = move |u: f64| (-q(u) / beta).exp();
            quad::integrate_with_breaks(&f, U_CLIP, 1.0 - U_CLIP, breaks, cfg)?
        }
    };
    if !mean.is_finite() {
        return Err(SolverError::non_convergent("entropic risk", "E[exp(-X/beta)] diverged"));
    }
    Ok(beta * mean.ln())
}

fn spectral_eval(
    spec: &RiskSpec,
    atoms: &[SpectralAtom],
    input: RiskInput<'_>,
    cfg: &QuadCfg,
) -> Result<f64> {
    match input {
        RiskInput::Sample(xs) => {
            if xs.is_empty() {
                return Err(SolverError::Domain("empty sample".into()));
            }
            let mut sorted = xs.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len() as f64;
            let mut rho = 0.0;
            let mut prev = 0.0;
            for (k, x) in sorted.iter().enumerate() {
                let cum = (k as f64 + 1.0) / n;
                let w = spec.phi_integral(cum)? - prev;
                rho -= x * w;
                prev += w;
            }
            Ok(rho)
        }
        RiskInput::Steps(steps) => {
            let mut sorted = steps.to_vec();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut rho = 0.0;
            let mut cum = 0.0;
            let mut prev = 0.0;
            for (v, p) in sorted {
                cum = (cum + p).min(1.0);
                let here = spec.phi_integral(cum)?;
                rho -= v * (here - prev);
                prev = here;
            }
            Ok(rho)
        }
        RiskInput::Quantile { q, breaks } => {
            // piecewise-constant spectrum: integrate the quantile between
            // consecutive atom levels
            let mut cuts: Vec<f64> = atoms.iter().map(|a| a.level).collect();
            cuts.push(0.0);
            cuts.push(1.0);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut rho = 0.0;
            for w in cuts.windows(2) {
                let (a, b) = (w[0].max(U_CLIP), w[1].min(1.0 - U_CLIP));
                if b <= a {
                    continue;
                }
                let phi_here = spec.phi(0.5 * (w[0] + w[1]))?;
                if phi_here == 0.0 {
                    continue;
                }
                let piece = quad::integrate_with_breaks(q, a, b, breaks, cfg)?;
                rho -= phi_here * piece;
            }
            Ok(rho)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> QuadCfg {
        QuadCfg::default()
    }

    fn two_atom() -> RiskSpec {
        RiskSpec::spectral(vec![
            SpectralAtom { weight: 0.5, level: 0.25 },
            SpectralAtom { weight: 0.5, level: 1.0 },
        ])
        .unwrap()
    }

    #[test]
    fn cvar_spectrum() {
        let r = RiskSpec::cvar(0.5).unwrap();
        assert_abs_diff_eq!(r.phi(0.3).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.phi(0.7).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.phi_integral(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.phi_integral(1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(r.phi(-0.1).is_err());
        assert!(r.phi_integral(1.2).is_err());
    }

    #[test]
    fn mixture_spectrum_and_integral() {
        let r = two_atom();
        assert_abs_diff_eq!(r.phi(0.1).unwrap(), 2.5, epsilon = 1e-15);
        // trapezoid cross-check of Phi on a fine grid
        let n = 20_000;
        let mut acc = 0.0;
        let mut prev = r.phi(0.0).unwrap();
        for i in 1..=n {
            let x = i as f64 / n as f64;
            let cur = r.phi(x).unwrap();
            acc += 0.5 * (prev + cur) / n as f64;
            prev = cur;
        }
        assert_abs_diff_eq!(r.phi_integral(1.0).unwrap(), acc, epsilon = 1e-3);
        assert_abs_diff_eq!(r.phi_integral(1.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn entropic_constant_position() {
        let r = RiskSpec::entropic(1.0).unwrap();
        let v = r.eval_risk(RiskInput::Sample(&[-1.0, -1.0, -1.0]), &cfg()).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cvar_two_point_position() {
        // P(X = -1) = 0.25, P(X = 0) = 0.75: CVaR_{0.5} averages the worst
        // half, half of which is the -1 outcome
        let r = RiskSpec::cvar(0.5).unwrap();
        let v = r.eval_risk(RiskInput::Steps(&[(-1.0, 0.25), (0.0, 0.75)]), &cfg()).unwrap();
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-14);
        // same thing as an equal-weight sample
        let v2 = r.eval_risk(RiskInput::Sample(&[-1.0, 0.0, 0.0, 0.0]), &cfg()).unwrap();
        assert_abs_diff_eq!(v2, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn mixture_two_point_position() {
        let r = two_atom();
        let v = r.eval_risk(RiskInput::Steps(&[(-1.0, 0.25), (0.0, 0.75)]), &cfg()).unwrap();
        // 0.5 * CVaR_{0.25} + 0.5 * CVaR_1 = 0.5 * 1 + 0.5 * 0.25
        assert_abs_diff_eq!(v, 0.625, epsilon = 1e-14);
    }

    #[test]
    fn quantile_input_matches_steps() {
        let r = two_atom();
        let q = |u: f64| if u <= 0.25 { -1.0 } else { 0.0 };
        let v = r.eval_risk(RiskInput::Quantile { q: &q, breaks: &[] }, &cfg()).unwrap();
        assert_abs_diff_eq!(v, 0.625, epsilon = 1e-6);
        let e = RiskSpec::entropic(1.0).unwrap();
        let ve = e.eval_risk(RiskInput::Quantile { q: &q, breaks: &[] }, &cfg()).unwrap();
        let vs = e.eval_risk(RiskInput::Steps(&[(-1.0, 0.25), (0.0, 0.75)]), &cfg()).unwrap();
        assert_abs_diff_eq!(ve, vs, epsilon = 1e-6);
    }

    #[test]
    fn entropic_penalty_at_lognormal() {
        let r = RiskSpec::entropic(1.0).unwrap();
        let m = DensityModel::lognormal_unit(0.375).unwrap();
        match r.penalty_at_density(&m) {
            Penalty::Finite { value } => assert_abs_diff_eq!(value, 0.0703125, epsilon = 1e-12),
            other => panic!("expected finite penalty, got {other:?}"),
        }
    }

    #[test]
    fn cvar_penalty_cases() {
        let r = RiskSpec::cvar(0.5).unwrap();
        let unbounded = DensityModel::lognormal_unit(0.375).unwrap();
        assert_eq!(r.penalty_at_density(&unbounded), Penalty::Infinite);
        // bounded by 1.2 <= 1/0.5
        let bounded = DensityModel::discrete(&[(0.8, 0.5), (1.2, 0.5)]).unwrap();
        assert_eq!(r.penalty_at_density(&bounded), Penalty::Finite { value: 0.0 });
        assert_eq!(two_atom().penalty_at_density(&bounded), Penalty::NotComputed);
    }

    #[test]
    fn cash_translation() {
        let xs = [-2.0, -0.5, 0.0, 1.0];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.7).collect();
        for r in [RiskSpec::entropic(0.8).unwrap(), RiskSpec::cvar(0.4).unwrap(), two_atom()] {
            let a = r.eval_risk(RiskInput::Sample(&xs), &cfg()).unwrap();
            let b = r.eval_risk(RiskInput::Sample(&shifted), &cfg()).unwrap();
            assert_abs_diff_eq!(a - 0.7, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn monotonicity_and_convexity() {
        let xs = [-2.0, -0.5, 0.0, 1.0];
        let ys = [-1.5, -0.5, 0.3, 1.0]; // ys >= xs pointwise
        let mix: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
        for r in [RiskSpec::entropic(0.8).unwrap(), RiskSpec::cvar(0.4).unwrap(), two_atom()] {
            let rx = r.eval_risk(RiskInput::Sample(&xs), &cfg()).unwrap();
            let ry = r.eval_risk(RiskInput::Sample(&ys), &cfg()).unwrap();
            assert!(rx >= ry - 1e-12);
            let rm = r.eval_risk(RiskInput::Sample(&mix), &cfg()).unwrap();
            assert!(rm <= 0.5 * rx + 0.5 * ry + 1e-12);
        }
    }

    #[test]
    fn law_invariance_under_permutation() {
        let xs = [-2.0, -0.5, 0.0, 1.0];
        let perm = [1.0, -2.0, 0.0, -0.5];
        for r in [RiskSpec::entropic(0.8).unwrap(), two_atom()] {
            let a = r.eval_risk(RiskInput::Sample(&xs), &cfg()).unwrap();
            let b = r.eval_risk(RiskInput::Sample(&perm), &cfg()).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn homogeneity_spectral_only() {
        let xs = [-2.0, -0.5, 0.0, 1.0];
        let doubled: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let s = two_atom();
        let a = s.eval_risk(RiskInput::Sample(&xs), &cfg()).unwrap();
        let b = s.eval_risk(RiskInput::Sample(&doubled), &cfg()).unwrap();
        assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-12);
        // entropic is not positively homogeneous
        let e = RiskSpec::entropic(1.0).unwrap();
        let ea = e.eval_risk(RiskInput::Sample(&xs), &cfg()).unwrap();
        let eb = e.eval_risk(RiskInput::Sample(&doubled), &cfg()).unwrap();
        assert!((eb - 2.0 * ea).abs() > 0.05);
    }

    #[test]
    fn spectral_decomposes_over_atoms() {
        let xs = [-3.0, -1.0, -0.2, 0.0, 0.5];
        let r = two_atom();
        let whole = r.eval_risk(RiskInput::Sample(&xs), &cfg()).unwrap();
        let c1 = RiskSpec::cvar(0.25).unwrap().eval_risk(RiskInput::Sample(&xs), &cfg()).unwrap();
        let c2 = RiskSpec::cvar(1.0).unwrap().eval_risk(RiskInput::Sample(&xs), &cfg()).unwrap();
        assert_abs_diff_eq!(whole, 0.5 * c1 + 0.5 * c2, epsilon = 1e-12);
    }

    #[test]
    fn validation() {
        assert!(RiskSpec::entropic(-1.0).is_err());
        assert!(RiskSpec::cvar(0.0).is_err());
        assert!(RiskSpec::cvar(1.1).is_err());
        assert!(RiskSpec::spectral(vec![
            SpectralAtom { weight: 0.6, level: 0.5 },
            SpectralAtom { weight: 0.6, level: 1.0 },
        ])
        .is_err());
        let e = RiskSpec::entropic(1.0).unwrap();
        assert!(e.phi(0.5).is_err());
    }
}

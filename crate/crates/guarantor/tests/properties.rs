//! Randomised invariants of the building blocks: risk measures, densities,
//! utilities, and the two decoupled subproblems.

use guarantor::density::Interval;
use guarantor::risk::RiskInput;
use guarantor::{gains, oracle, shortfall};
use guarantor::{DensityModel, QuadCfg, RiskSpec, UtilitySpec};
use proptest::prelude::*;

fn any_utility() -> impl Strategy<Value = UtilitySpec> {
    prop_oneof![
        (0.2..2.0f64).prop_map(|delta| UtilitySpec::Exponential { delta }),
        (0.1..0.9f64).prop_map(|gamma| UtilitySpec::Power { gamma }),
        (0.3..3.0f64).prop_map(|a| UtilitySpec::LogShifted { a }),
    ]
}

fn any_risk() -> impl Strategy<Value = RiskSpec> {
    prop_oneof![
        (0.3..2.0f64).prop_map(|beta| RiskSpec::entropic(beta).unwrap()),
        (0.2..1.0f64).prop_map(|level| RiskSpec::cvar(level).unwrap()),
        ((0.1..0.45f64), (0.05..0.9f64)).prop_map(|(w, lo)| {
            RiskSpec::spectral(vec![
                guarantor::SpectralAtom { weight: w, level: lo },
                guarantor::SpectralAtom { weight: 1.0 - w, level: 1.0 },
            ])
            .unwrap()
        }),
    ]
}

fn position() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 2..16)
}

fn rho(risk: &RiskSpec, xs: &[f64]) -> f64 {
    risk.eval_risk(RiskInput::Sample(xs), &QuadCfg::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cash_translation(risk in any_risk(), xs in position(), m in -2.0..2.0f64) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + m).collect();
        prop_assert!((rho(&risk, &shifted) - (rho(&risk, &xs) - m)).abs() < 1e-9);
    }

    #[test]
    fn monotonicity(risk in any_risk(), xs in position(), bump in prop::collection::vec(0.0..1.5f64, 16)) {
        let higher: Vec<f64> = xs.iter().zip(&bump).map(|(x, b)| x + b).collect();
        prop_assert!(rho(&risk, &higher) <= rho(&risk, &xs) + 1e-9);
    }

    #[test]
    fn law_invariance_under_permutation(risk in any_risk(), xs in position(), seed in any::<u64>()) {
        let mut permuted = xs.clone();
        // a cheap deterministic shuffle
        let n = permuted.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            permuted.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert!((rho(&risk, &permuted) - rho(&risk, &xs)).abs() < 1e-9);
    }

    #[test]
    fn spectral_positive_homogeneity(level in 0.2..1.0f64, xs in position(), t in 0.1..3.0f64) {
        let risk = RiskSpec::cvar(level).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| t * x).collect();
        prop_assert!((rho(&risk, &scaled) - t * rho(&risk, &xs)).abs() < 1e-9 * (1.0 + t));
    }

    #[test]
    fn convexity_on_comonotone_positions(risk in any_risk(), xs in position(), ys in position(), theta in 0.0..1.0f64) {
        // sort both ascending: comonotone versions with the original laws
        let n = xs.len().min(ys.len());
        let mut a = xs[..n].to_vec();
        let mut b = ys[..n].to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| theta * x + (1.0 - theta) * y).collect();
        prop_assert!(rho(&risk, &mix) <= theta * rho(&risk, &a) + (1.0 - theta) * rho(&risk, &b) + 1e-9);
    }

    #[test]
    fn comonotone_pairing_maximises_the_mean_product(
        xs in prop::collection::vec(-2.0..2.0f64, 2..6),
        ys in prop::collection::vec(-2.0..2.0f64, 2..6),
    ) {
        let n = xs.len().min(ys.len());
        let check = oracle::rearrangement_check(&xs[..n], &ys[..n]).unwrap();
        prop_assert!((check.comonotone - check.best).abs() < 1e-12);
        prop_assert!(check.worst <= check.best + 1e-12);
    }

    #[test]
    fn fenchel_inequality_with_tight_slope(u in any_utility(), x in 0.01..10.0f64, y in 0.01..5.0f64) {
        let v = u.conjugate(y).unwrap();
        prop_assert!(u.eval(x) <= v + x * y + 1e-9);
        let y_star = u.marginal(x);
        if y_star > 0.0 {
            let tight = u.conjugate(y_star).unwrap() + x * y_star;
            prop_assert!((u.eval(x) - tight).abs() < 1e-8 * (1.0 + u.eval(x).abs()));
        }
    }

    #[test]
    fn quantile_inverts_cdf(s in 0.1..1.0f64, u in 0.001..0.999f64) {
        let model = DensityModel::lognormal_unit(s).unwrap();
        let x = model.quantile(u).unwrap();
        prop_assert!((model.cdf(x) - u).abs() < 1e-7);
    }

    #[test]
    fn discrete_quantile_is_a_left_inverse(u in 0.001..0.999f64) {
        let model = DensityModel::discrete(&[(0.4, 0.3), (1.0, 0.4), (1.9, 0.3)]).unwrap();
        let x = model.quantile(u).unwrap();
        // the cdf at the quantile covers the requested level
        prop_assert!(model.cdf(x) >= u - 1e-12);
    }

    #[test]
    fn expectation_is_additive_over_intervals(s in 0.2..0.8f64, a in 0.3..1.0f64, w in 0.1..2.0f64) {
        let model = DensityModel::lognormal_unit(s).unwrap();
        let g = |xi: f64| xi * (1.0 + xi).ln();
        let cfg = QuadCfg::default();
        let whole = model.expect(&g, &Interval::between(0.0, a + w), &[], &cfg).unwrap();
        let left = model.expect(&g, &Interval::between(0.0, a), &[], &cfg).unwrap();
        let right = model.expect(&g, &Interval::between(a, a + w), &[], &cfg).unwrap();
        prop_assert!((whole - left - right).abs() < 1e-8 * (1.0 + whole.abs()));
    }

    #[test]
    fn partial_moments_are_additive(s in 0.2..0.8f64, p in -1.0..2.0f64, a in 0.3..1.0f64, w in 0.1..2.0f64) {
        let model = DensityModel::lognormal_unit(s).unwrap();
        let whole = model.partial_power_moment(p, &Interval::between(0.0, a + w));
        let split = model.partial_power_moment(p, &Interval::between(0.0, a))
            + model.partial_power_moment(p, &Interval::between(a, a + w));
        prop_assert!((whole - split).abs() < 1e-12 * (1.0 + whole.abs()));
    }

    #[test]
    fn tail_price_decreases_in_the_threshold(s in 0.2..0.8f64, c in 0.3..2.0f64, dc in 0.01..1.0f64) {
        let model = DensityModel::lognormal_unit(s).unwrap();
        prop_assert!(model.tail_price(c + dc) <= model.tail_price(c) + 1e-14);
    }

    #[test]
    fn gains_budget_identity_holds(u in any_utility(), q in 0.3..0.95f64, x_plus in 0.05..3.0f64) {
        let model = DensityModel::lognormal_unit(0.375).unwrap();
        let c = model.quantile(q).unwrap();
        let sol = gains::solve(&model, &u, c, x_plus).unwrap();
        let spent = gains::budget_moment(&model, &u, sol.lambda, c);
        prop_assert!((spent - x_plus).abs() < 1e-7 * (1.0 + x_plus), "spent {spent} vs {x_plus}");
    }

    #[test]
    fn entropic_relief_saturates_the_risk_budget(q in 0.3..0.95f64, rho0 in 0.05..2.0f64, beta in 0.4..1.6f64) {
        let model = DensityModel::lognormal_unit(0.375).unwrap();
        let c = model.quantile(q).unwrap();
        let sol = shortfall::solve_entropic(&model, beta, rho0, c).unwrap();
        // risk of the profile, measured through quadrature rather than the
        // solver's own closed form
        let profile = sol.profile;
        let g = |xi: f64| (-profile.eval(xi) / beta).exp();
        let d = match profile {
            guarantor::LossProfile::LogTail { d, .. } => d,
            _ => c,
        };
        let mean = model.expect(&g, &Interval::all(), &[c, d], &QuadCfg::default()).unwrap();
        let measured = beta * mean.ln();
        prop_assert!((measured - rho0).abs() < 1e-7 * (1.0 + rho0), "measured {measured} vs {rho0}");
    }

    #[test]
    fn spectral_relief_is_linear_in_the_budget(q in 0.3..0.9f64, rho0 in 0.05..1.0f64, level in 0.25..0.95f64) {
        let model = DensityModel::truncated_lognormal(-0.0703125, 0.375, 3.0, true).unwrap();
        let risk = RiskSpec::cvar(level).unwrap();
        let c = model.quantile(q).unwrap();
        let one = shortfall::solve_spectral(&model, &risk, rho0, c).unwrap();
        let two = shortfall::solve_spectral(&model, &risk, 2.0 * rho0, c).unwrap();
        prop_assert!((two.delta - 2.0 * one.delta).abs() < 1e-9 * (1.0 + one.delta.abs()));
    }

    #[test]
    fn envelope_sits_between_profile_and_rate_bound(q in 0.3..0.9f64, rho0 in 0.05..1.0f64, level in 0.25..0.95f64) {
        let model = DensityModel::truncated_lognormal(-0.0703125, 0.375, 3.0, true).unwrap();
        let risk = RiskSpec::cvar(level).unwrap();
        let c = model.quantile(q).unwrap();
        let sol = shortfall::solve_spectral(&model, &risk, rho0, c).unwrap();
        let env = sol.envelope.unwrap();
        prop_assert!(env <= sol.delta + 1e-12);
        match shortfall::relief_rate_bound(&model, &risk).unwrap() {
            guarantor::Limit::Finite { value } => prop_assert!(env >= -rho0 * value - 1e-9, "env {env} floor {}", -rho0 * value),
            guarantor::Limit::Infinite => prop_assert!(false, "bounded density cannot have an infinite rate"),
        }
    }
}

//! Property tests for the structural invariants of sublinear expectations.

use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use sublinear::capacity::{lower_cdf, upper_cdf, weighted_sum_capacity, CapacityConfig, ConfidenceQuery, Family};
use sublinear::dp::{gnormal_expectation_iterative, IterationSchedule};
use sublinear::joint::{
    joint_expectation, sequential_monomial, skeleton_expectation, IndependenceMode, JointConfig, SkeletonMode,
    SkeletonSet,
};
use sublinear::kernel::QuadratureRule;
use sublinear::maximal::{maximal_expectation, MaximalOptions};
use sublinear::semignormal::{lower_expectation, upper_expectation, SemiGNormal, SigmaSearch};
use sublinear::test_functions::Monomial;
use sublinear::{MaximalDist, TestFunction, VarianceBand};

/// `E[(σZ − K)⁺]` for `Z ~ N(0, 1)`.
fn bachelier_call(sigma: f64, strike: f64) -> f64 {
    let n = Normal::standard();
    if sigma == 0.0 {
        return (-strike).max(0.0);
    }
    let d = strike / sigma;
    sigma * n.pdf(d) - strike * (1.0 - n.cdf(d))
}

fn gaussian_moment(sigma: f64, k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut df = 1.0;
    let mut j = k as i64 - 1;
    while j > 1 {
        df *= j as f64;
        j -= 2;
    }
    sigma.powi(k as i32) * df
}

fn band() -> impl Strategy<Value = VarianceBand> {
    (0.1f64..1.5, 0.0f64..1.5).prop_map(|(lo, w)| VarianceBand::new(lo, lo + w).unwrap())
}

fn exact_search() -> SigmaSearch {
    SigmaSearch {
        shortcut: false,
        ..SigmaSearch::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convex_calls_collapse_to_the_upper_volatility(b in band(), strike in -2.0f64..2.0) {
        let w = SemiGNormal::new(b);
        let rule = QuadratureRule::default();
        let up = upper_expectation(&w, &TestFunction::call(strike), &rule, &exact_search()).unwrap();
        prop_assert!((up.value - bachelier_call(b.hi(), strike)).abs() < 1e-9);
        let down = upper_expectation(&w, &TestFunction::call(strike).negated(), &rule, &exact_search()).unwrap();
        prop_assert!((down.value + bachelier_call(b.lo(), strike)).abs() < 1e-9);
    }

    #[test]
    fn widening_the_band_never_lowers_the_upper_value(
        b in band(),
        grow in (0.0f64..0.09, 0.0f64..1.0),
        coeffs in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let phi = TestFunction::polynomial(coeffs).unwrap();
        let wide = VarianceBand::new(b.lo() - grow.0, b.hi() + grow.1).unwrap();
        let rule = QuadratureRule::default();
        let inner = upper_expectation(&SemiGNormal::new(b), &phi, &rule, &SigmaSearch::default()).unwrap();
        let outer = upper_expectation(&SemiGNormal::new(wide), &phi, &rule, &SigmaSearch::default()).unwrap();
        prop_assert!(outer.value >= inner.value - 1e-10);
        let lower = lower_expectation(&SemiGNormal::new(b), &phi, &rule, &SigmaSearch::default()).unwrap();
        prop_assert!(lower.value <= inner.value + 1e-12);
    }

    #[test]
    fn hermite_rule_reproduces_gaussian_moments(sigma in 0.05f64..3.0, k in 0u32..=12) {
        let phi = TestFunction::power(k);
        let v = upper_expectation(
            &SemiGNormal::new(VarianceBand::degenerate(sigma).unwrap()),
            &phi,
            &QuadratureRule::default(),
            &exact_search(),
        )
        .unwrap()
        .value;
        let want = gaussian_moment(sigma, k);
        prop_assert!((v - want).abs() <= 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn maximal_expectation_of_a_convex_function_sits_at_an_endpoint(
        a in -3.0f64..3.0,
        w in 0.0f64..3.0,
        k in 1u32..=4,
    ) {
        let phi = TestFunction::power(2 * k);
        let d = MaximalDist::interval(a, a + w).unwrap();
        let got = maximal_expectation(&d, &phi, &MaximalOptions::default()).unwrap().value;
        let want = a.powi(2 * k as i32).max((a + w).powi(2 * k as i32));
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn semi_sequential_values_ignore_variable_order(
        b in band(),
        p in 0u32..=4,
        q in 0u32..=4,
        weights in (-2.0f64..2.0, -2.0f64..2.0),
        exponent in 1u32..=5,
    ) {
        let cfg = JointConfig::default();
        let mut phis = vec![TestFunction::power_of_sum(vec![weights.0, weights.1], exponent).unwrap()];
        if p + q > 0 {
            phis.push(TestFunction::monomial(vec![p, q], 1.0).unwrap());
        }
        for phi in phis {
            let a = joint_expectation(&phi, b, IndependenceMode::SemiSequential, &cfg).unwrap().value;
            let s = joint_expectation(&phi.swapped().unwrap(), b, IndependenceMode::SemiSequential, &cfg).unwrap().value;
            prop_assert!((a - s).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn sequential_monomials_match_the_two_step_skeleton(b in band(), p in 0u32..=5, q in 0u32..=5) {
        prop_assume!(p + q >= 1 && p + q <= 6);
        let phi = TestFunction::monomial(vec![p, q], 1.0).unwrap();
        let skeleton = SkeletonSet::new(SkeletonMode::L2, b);
        let sk = skeleton_expectation(&phi, &skeleton, &QuadratureRule::default()).unwrap().value;
        let seq = sequential_monomial(&Monomial { coefficient: 1.0, exponents: vec![p, q] }, b);
        prop_assert!((sk - seq).abs() <= 1e-9 * seq.abs().max(1.0), "{sk} vs {seq}");
    }

    #[test]
    fn capacity_bounds_are_ordered_and_monotone(b in band(), y in -5.0f64..5.0, dy in 0.0f64..2.0) {
        let d = SemiGNormal::new(b);
        let (lo1, up1) = (lower_cdf(&d, y), upper_cdf(&d, y));
        let (lo2, up2) = (lower_cdf(&d, y + dy), upper_cdf(&d, y + dy));
        prop_assert!((0.0..=1.0).contains(&lo1) && (0.0..=1.0).contains(&up1));
        prop_assert!(lo1 <= up1 + 1e-15);
        prop_assert!(up1 <= up2 + 1e-15 && lo1 <= lo2 + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn sequential_dominates_semi_sequential(
        b in band(),
        weights in (-2.0f64..2.0, -2.0f64..2.0),
        exponent in 2u32..=5,
    ) {
        let cfg = JointConfig::default();
        let phi = TestFunction::power_of_sum(vec![weights.0, weights.1], exponent).unwrap();
        let semi = joint_expectation(&phi, b, IndependenceMode::SemiSequential, &cfg).unwrap().value;
        let seq = joint_expectation(&phi, b, IndependenceMode::Sequential, &cfg).unwrap().value;
        prop_assert!(seq >= semi - 1e-7 * semi.abs().max(1.0), "{seq} < {semi}");
    }

    #[test]
    fn sandwich_brackets_the_closed_form_capacity(b in band(), c in 0.5f64..6.0) {
        let query = ConfidenceQuery::new(vec![1.0], b, 0.05, Family::Sn).unwrap();
        let e = weighted_sum_capacity(&query, c, &CapacityConfig::default()).unwrap();
        prop_assert!(e.sandwich.contains(e.upper_prob));
        prop_assert!(e.half_width.contains(e.upper_prob));
        prop_assert!(e.half_width.lower >= e.sandwich.lower - 1e-9);
        prop_assert!(e.half_width.upper <= e.sandwich.upper + 1e-9);
    }

    #[test]
    fn iteration_of_a_convex_call_is_classical_at_the_upper_volatility(b in band(), strike in -1.0f64..1.0) {
        let out = gnormal_expectation_iterative(&TestFunction::call(strike), b, &IterationSchedule::new(10)).unwrap();
        prop_assert!((out.value - bachelier_call(b.hi(), strike)).abs() < 1e-5);
    }
}

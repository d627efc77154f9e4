//! The acceptance suite: fourteen numbered checks with their tolerances and
//! time budgets, shared by the `verify` command and the test target.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::capacity::{
    coverage_simulation, extremal_policy, policy_by_name, robust_critical_value, upper_cdf, weighted_sum_capacity,
    CapacityConfig, ConfidenceQuery, Family, POLICY_NAMES,
};
use crate::clt::{errors_nonincreasing, gnormal_clt_check, max_mean_demo, CltConfig};
use crate::config::{Numerics, Tolerances};
use crate::dp::{gnormal_expectation_iterative, IterationSchedule};
use crate::error::Result;
use crate::joint::{
    joint_expectation, nested_quadrature, normalized_sum_expectation, skeleton_expectation, IndependenceMode,
    JointConfig, JointIntegrand, SkeletonMode, SkeletonSet,
};
use crate::kernel::{std_normal_quantile, QuadratureRule, RngStream};
use crate::maximal::VarianceBand;
use crate::semignormal::{
    moment_oracle_even, moment_oracle_odd, product_moment_oracle, reversed_product_mc, reversed_product_mean,
    upper_expectation, SemiGNormal, SigmaSearch,
};
use crate::test_functions::{FunctionKind, Monomial, TestFunction};

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Φ(1) and Φ(−1/2) to double precision.
const PHI_AT_ONE: f64 = 0.841_344_746_068_542_9;
const PHI_AT_MINUS_HALF: f64 = 0.308_537_538_725_986_9;

#[derive(Clone, Debug)]
pub struct VerifyContext {
    pub tolerances: Tolerances,
    pub seed: u64,
    pub joint: JointConfig,
    pub capacity: CapacityConfig,
    pub clt: CltConfig,
    pub coverage_reps: usize,
    pub reversed_samples: usize,
    pub max_mean_blocks: usize,
    pub max_mean_samples: usize,
    /// Count runtime over budget as a failure.
    pub enforce_budgets: bool,
}

impl VerifyContext {
    pub fn new(numerics: &Numerics, tolerances: Tolerances, seed: u64) -> Self {
        Self {
            tolerances,
            seed,
            joint: numerics.joint(),
            capacity: numerics.capacity(),
            clt: numerics.clt(),
            ..Self::default()
        }
    }
}

impl Default for VerifyContext {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            seed: DEFAULT_SEED,
            joint: JointConfig::default(),
            capacity: CapacityConfig::default(),
            clt: CltConfig::default(),
            coverage_reps: 100_000,
            reversed_samples: 1_000_000,
            max_mean_blocks: 17,
            max_mean_samples: 100_000,
            enforce_budgets: true,
        }
    }
}

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub budget_secs: f64,
    run: fn(&VerifyContext) -> Result<Outcome>,
}

struct Outcome {
    passed: bool,
    detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub numeric_passed: bool,
    pub detail: String,
    pub elapsed_secs: f64,
    pub budget_secs: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {}: {} [{:.2} s / {} s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed_secs,
            self.budget_secs
        )
    }
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, title: "sequential third moment", budget_secs: 1.0, run: c01_third_moment_seq },
        Criterion { id: 2, title: "semi-sequential third moment", budget_secs: 1.0, run: c02_third_moment_semi },
        Criterion { id: 3, title: "even moments", budget_secs: 1.0, run: c03_even_moments },
        Criterion { id: 4, title: "odd fifth moment", budget_secs: 5.0, run: c04_odd_moment },
        Criterion { id: 5, title: "asymmetry pair", budget_secs: 1.0, run: c05_asymmetry },
        Criterion { id: 6, title: "convex/concave collapse", budget_secs: 2.0, run: c06_collapse },
        Criterion { id: 7, title: "skeleton equals sequential", budget_secs: 10.0, run: c07_skeleton },
        Criterion { id: 8, title: "iteration versus G-heat", budget_secs: 60.0, run: c08_pde },
        Criterion { id: 9, title: "G-normal dominance", budget_secs: 30.0, run: c09_dominance },
        Criterion { id: 10, title: "capacity closed form", budget_secs: 5.0, run: c10_capacity },
        Criterion { id: 11, title: "robust interval coverage", budget_secs: 120.0, run: c11_coverage },
        Criterion { id: 12, title: "reversed-order mean", budget_secs: 5.0, run: c12_reversed },
        Criterion { id: 13, title: "semi-sequential symmetry", budget_secs: 5.0, run: c13_symmetry },
        Criterion { id: 14, title: "max-mean is not G-normal", budget_secs: 60.0, run: c14_max_mean },
    ]
}

pub fn run_criterion(criterion: &Criterion, ctx: &VerifyContext) -> CriterionReport {
    let start = Instant::now();
    let outcome = (criterion.run)(ctx).unwrap_or_else(|e| Outcome {
        passed: false,
        detail: format!("error: {e}"),
    });
    let elapsed_secs = start.elapsed().as_secs_f64();
    let in_budget = elapsed_secs <= criterion.budget_secs;
    let mut detail = outcome.detail;
    if !in_budget {
        detail.push_str(" (over time budget)");
    }
    CriterionReport {
        id: criterion.id,
        title: criterion.title,
        passed: outcome.passed && (in_budget || !ctx.enforce_budgets),
        numeric_passed: outcome.passed,
        detail,
        elapsed_secs,
        budget_secs: criterion.budget_secs,
    }
}

/// Runs the selected criteria (all when `ids` is empty) in order.
pub fn run_suite(ctx: &VerifyContext, ids: &[u8]) -> Vec<CriterionReport> {
    criteria()
        .iter()
        .filter(|c| ids.is_empty() || ids.contains(&c.id))
        .map(|c| run_criterion(c, ctx))
        .collect()
}

fn b12() -> VarianceBand {
    VarianceBand::new(1.0, 2.0).expect("valid band")
}

fn b_half() -> VarianceBand {
    VarianceBand::new(0.5, 1.0).expect("valid band")
}

fn seq_sum_power(n: u32, ctx: &VerifyContext) -> Result<f64> {
    let phi = TestFunction::power_of_sum(vec![1.0, 1.0], n)?;
    Ok(joint_expectation(&phi, b12(), IndependenceMode::Sequential, &ctx.joint)?.value)
}

fn c01_third_moment_seq(ctx: &VerifyContext) -> Result<Outcome> {
    let got = seq_sum_power(3, ctx)?;
    let want = 3.0 * product_moment_oracle(b12());
    let err = (got - want).abs();
    Ok(Outcome {
        passed: err <= ctx.tolerances.third_moment_seq,
        detail: format!("value {got:.12}, closed form {want:.12}, error {err:.2e}"),
    })
}

fn c02_third_moment_semi(ctx: &VerifyContext) -> Result<Outcome> {
    let phi = TestFunction::power_of_sum(vec![1.0, 1.0], 3)?;
    let got = joint_expectation(&phi, b12(), IndependenceMode::SemiSequential, &ctx.joint)?.value;
    Ok(Outcome {
        passed: got.abs() <= ctx.tolerances.third_moment_semi,
        detail: format!("|value| = {:.2e}", got.abs()),
    })
}

fn c03_even_moments(ctx: &VerifyContext) -> Result<Outcome> {
    let mut passed = true;
    let mut parts = Vec::new();
    for n in [2u32, 4] {
        let got = seq_sum_power(n, ctx)?;
        let want = moment_oracle_even(b12(), n)?;
        let rel = ((got - want) / want).abs();
        passed &= rel <= ctx.tolerances.even_moment_rel;
        parts.push(format!("n={n}: {got:.10} vs {want} (rel {rel:.1e})"));
    }
    Ok(Outcome {
        passed,
        detail: parts.join("; "),
    })
}

fn c04_odd_moment(ctx: &VerifyContext) -> Result<Outcome> {
    let got = seq_sum_power(5, ctx)?;
    let want = moment_oracle_odd(b12(), 5)?;
    let err = (got - want).abs();
    Ok(Outcome {
        passed: err <= ctx.tolerances.odd_moment,
        detail: format!("value {got:.10}, closed form {want:.10}, error {err:.2e}"),
    })
}

fn c05_asymmetry(ctx: &VerifyContext) -> Result<Outcome> {
    let tol = ctx.tolerances.product_moment;
    let mut passed = true;
    let mut parts = Vec::new();
    for (exps, want) in [(vec![1, 2], product_moment_oracle(b12())), (vec![2, 1], 0.0)] {
        let phi = TestFunction::monomial(exps.clone(), 1.0)?;
        let route = joint_expectation(&phi, b12(), IndependenceMode::Sequential, &ctx.joint)?.value;
        let nested = nested_quadrature(&JointIntegrand::Multivariate { phi }, b12(), &ctx.joint)?.value;
        let err = (route - want).abs().max((nested - want).abs());
        passed &= err <= tol;
        parts.push(format!("x^{exps:?}: {route:.10} / nested {nested:.10} vs {want:.10}"));
    }
    Ok(Outcome {
        passed,
        detail: parts.join("; "),
    })
}

fn c06_collapse(ctx: &VerifyContext) -> Result<Outcome> {
    let rule = QuadratureRule::default();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for phi in [
        TestFunction::power(2),
        TestFunction::power(2).negated(),
        TestFunction::call(0.0),
        TestFunction::call(0.7),
    ] {
        let seq = normalized_sum_expectation(&phi, b12(), 2, IndependenceMode::Sequential, &ctx.joint)?.value;
        let semi = normalized_sum_expectation(&phi, b12(), 2, IndependenceMode::SemiSequential, &ctx.joint)?.value;
        let short = upper_expectation(&SemiGNormal::new(b12()), &phi, &rule, &SigmaSearch::default())?.value;
        let spread = seq.max(semi).max(short) - seq.min(semi).min(short);
        worst = worst.max(spread);
        parts.push(format!("{:.10}", short));
    }
    Ok(Outcome {
        passed: worst <= ctx.tolerances.collapse,
        detail: format!("values [{}], largest spread {worst:.2e}", parts.join(", ")),
    })
}

fn c07_skeleton(ctx: &VerifyContext) -> Result<Outcome> {
    let rule = QuadratureRule::default();
    let skeleton = SkeletonSet::new(SkeletonMode::L2, b12());
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for total in 1..=5u32 {
        for p in 0..=total {
            let phi = TestFunction::monomial(vec![p, total - p], 1.0)?;
            let sk = skeleton_expectation(&phi, &skeleton, &rule)?.value;
            let seq = joint_expectation(&phi, b12(), IndependenceMode::Sequential, &ctx.joint)?.value;
            worst = worst.max((sk - seq).abs());
            count += 1;
        }
    }
    Ok(Outcome {
        passed: worst <= ctx.tolerances.skeleton,
        detail: format!("{count} monomials, largest difference {worst:.2e}"),
    })
}

fn c08_pde(ctx: &VerifyContext) -> Result<Outcome> {
    let rows = gnormal_clt_check(&TestFunction::power(3), b_half(), &[10, 40, 160], &ctx.clt)?;
    let last = rows.last().expect("three rows").abs_error;
    let trend = errors_nonincreasing(&rows, ctx.tolerances.trend_slack);
    let errs: Vec<String> = rows.iter().map(|r| format!("n={}: {:.2e}", r.n, r.abs_error)).collect();
    Ok(Outcome {
        passed: last <= ctx.tolerances.pde_agreement && trend,
        detail: format!("u(1,0) = {:.6}; errors {}; trend ok = {trend}", rows[0].pde_value, errs.join(", ")),
    })
}

fn dominance_functions() -> Result<Vec<(&'static str, TestFunction)>> {
    let quartic_minus = TestFunction::polynomial(vec![0.0, 0.0, -2.0, 0.0, 1.0])?;
    Ok(vec![
        ("x^2", TestFunction::power(2)),
        ("-x^2", TestFunction::power(2).negated()),
        ("x^3", TestFunction::power(3)),
        ("-x^3", TestFunction::power(3).negated()),
        ("x^4", TestFunction::power(4)),
        ("x^4-2x^2", quartic_minus),
        ("call:0", TestFunction::call(0.0)),
        ("put:0.3", TestFunction::put(0.3)),
        ("|x|", TestFunction::abs_power(1.0)?),
        ("-|x|", TestFunction::abs_power(1.0)?.negated()),
    ])
}

fn c09_dominance(ctx: &VerifyContext) -> Result<Outcome> {
    let rule = QuadratureRule::default();
    let schedule = IterationSchedule {
        grid: ctx.clt.dp_grid,
        sigma_set: ctx.clt.dp_sigma_set,
        ..IterationSchedule::new(40)
    };
    let mut passed = true;
    let mut worst_margin = f64::INFINITY;
    let mut cube_gap = f64::NAN;
    for (name, phi) in dominance_functions()? {
        let g = gnormal_expectation_iterative(&phi, b_half(), &schedule)?.value;
        let semi = upper_expectation(&SemiGNormal::new(b_half()), &phi, &rule, &SigmaSearch::default())?.value;
        let margin = g - semi;
        worst_margin = worst_margin.min(margin);
        passed &= margin >= -ctx.tolerances.dominance;
        if name == "x^3" {
            cube_gap = margin;
            passed &= margin >= ctx.tolerances.dominance_strict_gap;
        }
    }
    Ok(Outcome {
        passed,
        detail: format!("smallest margin {worst_margin:.2e}; x^3 gap {cube_gap:.6}"),
    })
}

fn c10_capacity(ctx: &VerifyContext) -> Result<Outcome> {
    let d = SemiGNormal::new(b12());
    let tol = ctx.tolerances.capacity_closed_form;
    let mut passed = true;
    let mut worst: f64 = 0.0;
    for (y, want) in [(-1.0, PHI_AT_MINUS_HALF), (0.0, 0.5), (1.0, PHI_AT_ONE)] {
        let err = (upper_cdf(&d, y) - want).abs();
        worst = worst.max(err);
        passed &= err <= tol;
    }
    let query = ConfidenceQuery::new(vec![1.0], b12(), 0.05, Family::Sn)?;
    let mut brackets = Vec::new();
    for c in [2.0, 4.0] {
        let e = weighted_sum_capacity(&query, c, &ctx.capacity)?;
        let ok = e.sandwich.contains(e.upper_prob) && e.half_width.contains(e.upper_prob);
        passed &= ok;
        brackets.push(format!(
            "c={c}: {:.6} in [{:.6}, {:.6}] and [{:.6}, {:.6}]",
            e.upper_prob, e.sandwich.lower, e.sandwich.upper, e.half_width.lower, e.half_width.upper
        ));
    }
    Ok(Outcome {
        passed,
        detail: format!("cdf error {worst:.1e}; {}", brackets.join("; ")),
    })
}

fn c11_coverage(ctx: &VerifyContext) -> Result<Outcome> {
    let design: Vec<f64> = (1..=20).map(f64::from).collect();
    let query = ConfidenceQuery::from_design(&design, b12(), 0.05, Family::Ln)?;
    let c = robust_critical_value(&query, &ctx.capacity)?.c;
    let replay = extremal_policy(&query, c, &ctx.capacity)?;
    let policies = POLICY_NAMES
        .iter()
        .map(|name| policy_by_name(name, b12(), Some(&replay)))
        .collect::<Result<Vec<_>>>()?;
    let rng = RngStream::new(ctx.seed, 11);
    let rows = coverage_simulation(&query, c, &policies, ctx.coverage_reps, &rng)?;
    let k = ctx.tolerances.coverage_se_multiple;
    let target = 1.0 - query.alpha;
    let mut passed = true;
    let mut parts = Vec::new();
    for r in &rows {
        passed &= r.coverage >= target - k * r.std_error;
        parts.push(format!("{} {:.4}", r.policy, r.coverage));
    }
    let naive_c = b12().lo() * query.norm() * std_normal_quantile(1.0 - query.alpha / 2.0)?;
    let sign = vec![policy_by_name("sign-feedback", b12(), None)?];
    let naive = &coverage_simulation(&query, naive_c, &sign, ctx.coverage_reps, &rng)?[0];
    passed &= naive.coverage < target - k * naive.std_error;
    Ok(Outcome {
        passed,
        detail: format!(
            "c = {c:.6}; {}; naive c = {naive_c:.6} under sign-feedback {:.4}",
            parts.join(", "),
            naive.coverage
        ),
    })
}

fn c12_reversed(ctx: &VerifyContext) -> Result<Outcome> {
    let (upper, lower) = reversed_product_mean(b12());
    let want = 0.5 * (2.0 / PI).sqrt();
    let closed_ok = (upper - want).abs() <= ctx.tolerances.reversed_mean && (lower + want).abs() <= ctx.tolerances.reversed_mean;
    let mc = reversed_product_mc(b12(), ctx.reversed_samples, &RngStream::new(ctx.seed, 12))?;
    let z = (mc.mean - upper).abs() / mc.std_error;
    Ok(Outcome {
        passed: closed_ok && z <= ctx.tolerances.mc_se_multiple,
        detail: format!("({upper:.15}, {lower:.15}); Monte Carlo {:.6} at {z:.2} SE", mc.mean),
    })
}

fn symmetry_functions() -> Result<Vec<TestFunction>> {
    let nd = |terms: Vec<(f64, u32, u32)>| {
        TestFunction::new(FunctionKind::PolynomialNd {
            terms: terms
                .into_iter()
                .map(|(c, p, q)| Monomial {
                    coefficient: c,
                    exponents: vec![p, q],
                })
                .collect(),
        })
    };
    Ok(vec![
        TestFunction::parse("x1*x2^2")?,
        TestFunction::parse("x1^3*x2^2")?,
        TestFunction::parse("(x1+2*x2)^3")?,
        TestFunction::parse("(x1-x2)^4")?,
        TestFunction::parse("(2*x1+0.5*x2)^2")?,
        TestFunction::parse("x1^2*x2^2")?.negated(),
        TestFunction::parse("(x1+x2)^4")?.negated(),
        TestFunction::new(FunctionKind::EuclideanNorm { dim: 2 })?,
        nd(vec![(1.0, 2, 0), (-1.0, 0, 2), (1.0, 1, 1)])?,
        nd(vec![(1.0, 4, 0), (1.0, 1, 1), (-3.0, 0, 2)])?,
    ])
}

fn c13_symmetry(ctx: &VerifyContext) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let functions = symmetry_functions()?;
    for phi in &functions {
        let a = joint_expectation(phi, b12(), IndependenceMode::SemiSequential, &ctx.joint)?.value;
        let b = joint_expectation(&phi.swapped()?, b12(), IndependenceMode::SemiSequential, &ctx.joint)?.value;
        worst = worst.max((a - b).abs());
    }
    Ok(Outcome {
        passed: worst <= ctx.tolerances.swap,
        detail: format!("{} functions, largest swap gap {worst:.2e}", functions.len()),
    })
}

fn c14_max_mean(ctx: &VerifyContext) -> Result<Outcome> {
    let r = max_mean_demo(
        &TestFunction::power(3),
        b_half(),
        ctx.max_mean_blocks,
        ctx.max_mean_samples,
        &RngStream::new(ctx.seed, 14),
        &ctx.clt,
    )?;
    let near = r.distance_to_semi_in_se();
    let far = r.distance_to_gnormal_in_se();
    Ok(Outcome {
        passed: near <= ctx.tolerances.max_mean_se_multiple && far > ctx.tolerances.max_mean_separation_se,
        detail: format!(
            "estimate {:.5} (SE {:.5}); {near:.2} SE from semi value {}, {far:.1} SE from G value {:.5}",
            r.estimate, r.std_error, r.semi_value, r.gnormal_value
        ),
    })
}

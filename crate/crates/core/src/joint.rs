//! Joint sublinear expectations `Ê[φ(W₁, …, Wₙ)]` of semi-G-normal variables
//! under the three independence modes.
//!
//! Semi-sequential independence maximizes classical expectations over constant
//! σ-vectors in `[σ̲, σ̄]ⁿ`. Sequential independence nests one-step
//! maximizations from the last variable inward; fully-sequential independence
//! gives the same values for functions of the `Wᵢ` alone.
//!
//! Evaluation routes:
//! - weighted sums `φ(Σ aᵢxᵢ)` reduce to one dimension in semi-sequential mode;
//!   sequentially they use nested quadrature for `n ≤ 2` and the grid recursion
//!   beyond.
//! - single monomials have exact closed forms in both modes (any `n`).
//! - anything else uses tensor Gauss–Hermite (semi-sequential, `n ≤ 6`) or
//!   nested quadrature (sequential, `n ≤ 3`).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{backward_recursion, GridConfig, SigmaSet};
use crate::error::{Error, Result};
use crate::kernel::{
    abs_moment, composite_legendre, gauss_hermite, piecewise_normal_expectation, raw_moment, std_normal_pdf,
    tensor_normal_expectation, QuadratureRule,
};
use crate::maximal::VarianceBand;
use crate::search::{argmax_first, maximize_corners_then_sweep, maximize_on_interval, ScalarMax};
use crate::semignormal::{upper_expectation, SemiGNormal, SigmaSearch};
use crate::test_functions::{FunctionKind, Monomial, TestFunction};

const MAX_SEMI_DIM: usize = 6;
const MAX_NESTED_DIM: usize = 3;
const MAX_NESTED_SUM_DIM: usize = 2;
/// Points scanned for argmax switches of the outermost inner value function.
const SWITCH_SCAN: usize = 201;
const MAX_SWITCHES: usize = 32;
const SWITCH_SCAN_Z: f64 = 11.0;
/// Outer panels resolve the density at `σ̄ / OUTER_SIGMA_RATIO` and above.
const OUTER_SIGMA_RATIO: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndependenceMode {
    SemiSequential,
    Sequential,
    FullySequential,
}

impl IndependenceMode {
    pub const ALL: [IndependenceMode; 3] = [
        IndependenceMode::SemiSequential,
        IndependenceMode::Sequential,
        IndependenceMode::FullySequential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndependenceMode::SemiSequential => "semi-sequential",
            IndependenceMode::Sequential => "sequential",
            IndependenceMode::FullySequential => "fully-sequential",
        }
    }
}

impl fmt::Display for IndependenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndependenceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "semi-sequential" | "semi" => Ok(IndependenceMode::SemiSequential),
            "sequential" | "seq" => Ok(IndependenceMode::Sequential),
            "fully-sequential" | "full" => Ok(IndependenceMode::FullySequential),
            other => Err(Error::invalid(format!(
                "unknown independence mode '{other}' (expected semi-sequential, sequential or fully-sequential)"
            ))),
        }
    }
}

/// An n-ary integrand, with weighted sums kept in reduced form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum JointIntegrand {
    Multivariate { phi: TestFunction },
    /// `φ(Σ aᵢxᵢ)` with scalar `φ`.
    OfWeightedSum { phi: TestFunction, weights: Vec<f64> },
}

impl JointIntegrand {
    /// Wraps `phi`, recognizing `c(Σ aᵢxᵢ)ᵐ` as a weighted sum.
    pub fn from_function(phi: &TestFunction) -> Self {
        if phi.arity() > 1 {
            if let Some((factor, weights, m)) = phi.as_power_of_sum() {
                let power = TestFunction::power(m);
                let phi = if factor == 1.0 { power } else { power.scaled(factor) };
                return JointIntegrand::OfWeightedSum {
                    phi,
                    weights: weights.to_vec(),
                };
            }
        }
        JointIntegrand::Multivariate { phi: phi.clone() }
    }

    pub fn of_weighted_sum(phi: TestFunction, weights: Vec<f64>) -> Result<Self> {
        if phi.arity() != 1 {
            return Err(Error::invalid("a weighted-sum integrand needs a scalar test function"));
        }
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be a nonempty list of finite numbers"));
        }
        Ok(JointIntegrand::OfWeightedSum { phi, weights })
    }

    pub fn arity(&self) -> usize {
        match self {
            JointIntegrand::Multivariate { phi } => phi.arity(),
            JointIntegrand::OfWeightedSum { weights, .. } => weights.len(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            JointIntegrand::Multivariate { phi } => phi.eval_unchecked(x),
            JointIntegrand::OfWeightedSum { phi, weights } => {
                phi.eval_scalar(weights.iter().zip(x).map(|(a, v)| a * v).sum())
            }
        }
    }

    /// `phi` after swapping the first two arguments.
    pub fn swapped(&self) -> Result<Self> {
        if self.arity() != 2 {
            return Err(Error::invalid("argument swap needs a bivariate integrand"));
        }
        Ok(match self {
            JointIntegrand::Multivariate { phi } => JointIntegrand::Multivariate { phi: phi.swapped()? },
            JointIntegrand::OfWeightedSum { phi, weights } => JointIntegrand::OfWeightedSum {
                phi: phi.clone(),
                weights: vec![weights[1], weights[0]],
            },
        })
    }

    fn single_monomial(&self) -> Option<Monomial> {
        match self {
            JointIntegrand::Multivariate { phi } => phi.as_monomials().filter(|t| t.len() == 1).map(|mut t| t.remove(0)),
            JointIntegrand::OfWeightedSum { .. } => None,
        }
    }

    /// Candidate kink locations in variable `prefix.len()` given earlier values.
    fn kink_hints(&self, prefix: &[f64]) -> Vec<f64> {
        match self {
            JointIntegrand::Multivariate { .. } => vec![0.0],
            JointIntegrand::OfWeightedSum { phi, weights } => {
                let k = prefix.len();
                let a = weights[k];
                if a == 0.0 {
                    return Vec::new();
                }
                let y: f64 = weights.iter().zip(prefix).map(|(w, x)| w * x).sum();
                std::iter::once(0.0)
                    .chain(phi.kinks())
                    .map(|kappa| (kappa - y) / a)
                    .collect()
            }
        }
    }

    fn is_smooth_in_last(&self) -> bool {
        match self {
            JointIntegrand::Multivariate { phi } => {
                !matches!(innermost(phi.kind()), FunctionKind::EuclideanNorm { .. })
            }
            JointIntegrand::OfWeightedSum { phi, .. } => phi.is_smooth(),
        }
    }
}

fn innermost(kind: &FunctionKind) -> &FunctionKind {
    match kind {
        FunctionKind::Scaled { inner, .. } => innermost(inner),
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointConfig {
    pub hermite_order: usize,
    /// σ search for one-dimensional maximizations.
    pub sigma: SigmaSearch,
    /// Coordinate-sweep grid for rectangle searches.
    pub sweep_grid: usize,
    /// Total node budget for tensor Gauss–Hermite rules.
    pub tensor_budget: usize,
    pub dp_grid: GridConfig,
    pub dp_sigma_set: SigmaSet,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            hermite_order: 40,
            sigma: SigmaSearch {
                grid: 17,
                refine: true,
                argument_tol: 1e-9,
                shortcut: true,
            },
            sweep_grid: 17,
            tensor_budget: 200_000,
            dp_grid: GridConfig::default(),
            dp_sigma_set: SigmaSet::Grid(9),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointValue {
    pub value: f64,
    pub mode: IndependenceMode,
    /// Route taken, e.g. `weighted-sum-reduction` or `nested-quadrature`.
    pub method: &'static str,
    /// Maximizing constant σ-vector (semi-sequential) or first-step σ
    /// (sequential); absent for closed forms without a unique maximizer.
    pub argmax: Option<Vec<f64>>,
}

/// One evaluation strategy per independence mode.
pub trait JointEvaluator: Send + Sync {
    fn name(&self) -> &'static str;
    fn mode(&self) -> IndependenceMode;
    fn evaluate(&self, integrand: &JointIntegrand, band: VarianceBand, config: &JointConfig) -> Result<JointValue>;
}

struct SemiSequentialEvaluator;
struct SequentialEvaluator;
struct FullySequentialEvaluator;

static SEMI: SemiSequentialEvaluator = SemiSequentialEvaluator;
static SEQ: SequentialEvaluator = SequentialEvaluator;
static FULL: FullySequentialEvaluator = FullySequentialEvaluator;

pub fn evaluators() -> [&'static dyn JointEvaluator; 3] {
    [&SEMI, &SEQ, &FULL]
}

pub fn evaluator(mode: IndependenceMode) -> &'static dyn JointEvaluator {
    match mode {
        IndependenceMode::SemiSequential => &SEMI,
        IndependenceMode::Sequential => &SEQ,
        IndependenceMode::FullySequential => &FULL,
    }
}

pub fn evaluator_by_name(name: &str) -> Option<&'static dyn JointEvaluator> {
    evaluators().into_iter().find(|e| e.name() == name)
}

/// `Ê[φ(W₁, …, Wₙ)]` for `Wᵢ` semi-G-normal on a common band.
pub fn joint_expectation(
    phi: &TestFunction,
    band: VarianceBand,
    mode: IndependenceMode,
    config: &JointConfig,
) -> Result<JointValue> {
    evaluator(mode).evaluate(&JointIntegrand::from_function(phi), band, config)
}

pub fn joint_expectation_of(
    integrand: &JointIntegrand,
    band: VarianceBand,
    mode: IndependenceMode,
    config: &JointConfig,
) -> Result<JointValue> {
    evaluator(mode).evaluate(integrand, band, config)
}

fn hermite(config: &JointConfig) -> Result<QuadratureRule> {
    gauss_hermite(config.hermite_order)
}

fn scalar_value(phi: &TestFunction, band: VarianceBand, config: &JointConfig) -> Result<f64> {
    Ok(upper_expectation(&SemiGNormal::new(band), phi, &hermite(config)?, &config.sigma)?.value)
}

fn norm(weights: &[f64]) -> f64 {
    weights.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// The band of `Σ aᵢWᵢ` under constant σ-vectors: `[σ̲‖a‖, σ̄‖a‖]`.
fn sum_band(band: VarianceBand, weights: &[f64]) -> Result<VarianceBand> {
    let r = norm(weights);
    VarianceBand::new(band.lo() * r, band.hi() * r)
}

fn monomial_moment(t: &Monomial, sigma: &[f64]) -> f64 {
    t.coefficient
        * t.exponents
            .iter()
            .zip(sigma)
            .map(|(&p, &s)| if p == 0 { 1.0 } else { s.powi(p as i32) * raw_moment(p) })
            .product::<f64>()
}

impl JointEvaluator for SemiSequentialEvaluator {
    fn name(&self) -> &'static str {
        "semi-sequential"
    }

    fn mode(&self) -> IndependenceMode {
        IndependenceMode::SemiSequential
    }

    fn evaluate(&self, integrand: &JointIntegrand, band: VarianceBand, config: &JointConfig) -> Result<JointValue> {
        let n = integrand.arity();
        let mode = self.mode();
        if let JointIntegrand::OfWeightedSum { phi, weights } = integrand {
            let reduced = sum_band(band, weights)?;
            let best = upper_expectation(&SemiGNormal::new(reduced), phi, &hermite(config)?, &config.sigma)?;
            let r = norm(weights);
            let sigma = if r > 0.0 { best.argmax_sigma / r } else { band.lo() };
            return Ok(JointValue {
                value: best.value,
                mode,
                method: "weighted-sum-reduction",
                argmax: Some(vec![sigma; n]),
            });
        }
        let JointIntegrand::Multivariate { phi } = integrand else {
            unreachable!()
        };
        if n == 1 {
            let best = upper_expectation(&SemiGNormal::new(band), phi, &hermite(config)?, &config.sigma)?;
            return Ok(JointValue {
                value: best.value,
                mode,
                method: "semignormal",
                argmax: Some(vec![best.argmax_sigma]),
            });
        }
        let bounds = vec![(band.lo(), band.hi()); n];
        if let Some(terms) = phi.as_monomials() {
            let f = |s: &[f64]| terms.iter().map(|t| monomial_moment(t, s)).sum::<f64>();
            let best = maximize_corners_then_sweep(
                &f,
                &bounds,
                config.sweep_grid,
                config.sigma.refine,
                config.sigma.argument_tol,
            );
            return Ok(JointValue {
                value: best.value,
                mode,
                method: "moment-polynomial",
                argmax: Some(best.arg),
            });
        }
        if n > MAX_SEMI_DIM {
            return Err(Error::NotImplemented(format!(
                "semi-sequential evaluation of a general function is limited to n <= {MAX_SEMI_DIM}, got n = {n}"
            )));
        }
        let order = ((config.tensor_budget as f64).powf(1.0 / n as f64).floor() as usize).clamp(4, config.hermite_order.max(4));
        let rule = gauss_hermite(order)?;
        let f = |s: &[f64]| tensor_normal_expectation(|x| phi.eval_unchecked(x), s, &rule);
        let best = maximize_corners_then_sweep(&f, &bounds, config.sweep_grid, config.sigma.refine, config.sigma.argument_tol);
        if !best.value.is_finite() {
            return Err(Error::NumericDomain(format!("non-finite expectation at sigma = {:?}", best.arg)));
        }
        Ok(JointValue {
            value: best.value,
            mode,
            method: "tensor-hermite",
            argmax: Some(best.arg),
        })
    }
}

/// Exact sequential value of `c Πxᵢ^{pᵢ}`.
///
/// After integrating out the trailing variables the remaining function is
/// `αP⁺ − βP⁻` in the product `P` of the leading factors, so each step only
/// updates the pair `(α, β)`.
pub fn sequential_monomial(term: &Monomial, band: VarianceBand) -> f64 {
    let (lo, hi) = (band.lo(), band.hi());
    let (mut alpha, mut beta) = (term.coefficient, term.coefficient);
    for &p in term.exponents.iter().rev() {
        let (u, v) = if p == 0 {
            (1.0, 0.0)
        } else if p % 2 == 0 {
            (raw_moment(p), 0.0)
        } else {
            let half = 0.5 * abs_moment(p);
            (half, half)
        };
        let a = alpha * u - beta * v;
        let b = alpha * v - beta * u;
        let top = |c: f64| (lo.powi(p as i32) * c).max(hi.powi(p as i32) * c);
        alpha = top(a);
        beta = -top(b);
    }
    alpha
}

impl JointEvaluator for SequentialEvaluator {
    fn name(&self) -> &'static str {
        "sequential"
    }

    fn mode(&self) -> IndependenceMode {
        IndependenceMode::Sequential
    }

    fn evaluate(&self, integrand: &JointIntegrand, band: VarianceBand, config: &JointConfig) -> Result<JointValue> {
        sequential_value(integrand, band, config, self.mode())
    }
}

impl JointEvaluator for FullySequentialEvaluator {
    fn name(&self) -> &'static str {
        "fully-sequential"
    }

    fn mode(&self) -> IndependenceMode {
        IndependenceMode::FullySequential
    }

    fn evaluate(&self, integrand: &JointIntegrand, band: VarianceBand, config: &JointConfig) -> Result<JointValue> {
        sequential_value(integrand, band, config, self.mode())
    }
}

fn sequential_value(
    integrand: &JointIntegrand,
    band: VarianceBand,
    config: &JointConfig,
    mode: IndependenceMode,
) -> Result<JointValue> {
    let n = integrand.arity();
    if n == 1 {
        let value = match integrand {
            JointIntegrand::Multivariate { phi } => scalar_value(phi, band, config)?,
            JointIntegrand::OfWeightedSum { phi, weights } => scalar_value(phi, sum_band(band, weights)?, config)?,
        };
        return Ok(JointValue {
            value,
            mode,
            method: "semignormal",
            argmax: None,
        });
    }
    if let Some(term) = integrand.single_monomial() {
        return Ok(JointValue {
            value: sequential_monomial(&term, band),
            mode,
            method: "monomial-recursion",
            argmax: None,
        });
    }
    match integrand {
        JointIntegrand::OfWeightedSum { phi, weights } if n > MAX_NESTED_SUM_DIM => {
            let out = backward_recursion(phi, band, weights, config.dp_sigma_set, &config.dp_grid, false)?;
            Ok(JointValue {
                value: out.value,
                mode,
                method: "backward-recursion",
                argmax: None,
            })
        }
        _ if n <= MAX_NESTED_DIM => {
            let best = nested_quadrature(integrand, band, config)?;
            Ok(JointValue {
                value: best.value,
                mode,
                method: "nested-quadrature",
                argmax: Some(vec![best.arg]),
            })
        }
        _ => Err(Error::NotImplemented(format!(
            "sequential evaluation of a general {n}-ary function is limited to n <= {MAX_NESTED_DIM}; \
             weighted sums and single monomials have no limit"
        ))),
    }
}

/// Nested one-step maximizations with Gaussian quadrature at every level.
struct Nested<'a> {
    integrand: &'a JointIntegrand,
    n: usize,
    band: VarianceBand,
    rule: QuadratureRule,
    search: SigmaSearch,
    smooth_last: bool,
    /// Argmax switch points of the level-1 value function in `x₁`.
    outer_breaks: Vec<f64>,
    outer: Option<OuterTable>,
}

/// The level-1 value function tabulated on fixed `x₁` panels, so the outer σ
/// search reweights one table instead of re-solving the inner levels.
struct OuterTable {
    sigma_min: f64,
    rule: QuadratureRule,
    values: Vec<f64>,
}

impl OuterTable {
    fn expect(&self, sigma: f64) -> f64 {
        let x = self.rule.nodes();
        let w = self.rule.weights();
        let mut total = 0.0;
        for i in 0..x.len() {
            total += w[i] * self.values[i] * std_normal_pdf(x[i] / sigma);
        }
        total / sigma
    }
}

impl Nested<'_> {
    /// Maximizes over σ the expectation that integrates variable `k`.
    fn level(&self, prefix: &[f64; MAX_NESTED_DIM], k: usize) -> ScalarMax {
        let g = |sigma: f64| self.expect(prefix, k, sigma);
        maximize_on_interval(
            &g,
            self.band.lo(),
            self.band.hi(),
            self.search.grid,
            self.search.refine,
            self.search.argument_tol,
        )
    }

    fn expect(&self, prefix: &[f64; MAX_NESTED_DIM], k: usize, sigma: f64) -> f64 {
        let next = |x: f64| {
            let mut p = *prefix;
            p[k] = x;
            if k + 1 == self.n {
                self.integrand.eval(&p[..self.n])
            } else {
                self.level(&p, k + 1).value
            }
        };
        if sigma == 0.0 {
            return next(0.0);
        }
        if let (0, Some(table)) = (k, &self.outer) {
            if sigma >= table.sigma_min {
                return table.expect(sigma);
            }
        }
        if k + 1 == self.n && self.smooth_last {
            return self.rule.integrate(|z| next(sigma * z));
        }
        let mut kinks = self.integrand.kink_hints(&prefix[..k]);
        if k == 0 {
            kinks.extend_from_slice(&self.outer_breaks);
        }
        piecewise_normal_expectation(next, 0.0, sigma, &kinks)
    }
}

/// Locates jumps of the inner maximizer in `x₁` by scanning and bisection.
fn switch_points(nested: &Nested<'_>) -> Vec<f64> {
    let reach = SWITCH_SCAN_Z * nested.band.hi();
    if reach == 0.0 || nested.band.is_degenerate() {
        return Vec::new();
    }
    let jump = 0.25 * (nested.band.hi() - nested.band.lo());
    let argmax_at = |x: f64| {
        let mut p = [0.0; MAX_NESTED_DIM];
        p[0] = x;
        nested.level(&p, 1).arg
    };
    let xs: Vec<f64> = (0..SWITCH_SCAN)
        .map(|i| -reach + 2.0 * reach * i as f64 / (SWITCH_SCAN - 1) as f64)
        .collect();
    let args: Vec<f64> = xs.par_iter().map(|&x| argmax_at(x)).collect();
    let mut out = Vec::new();
    for i in 1..xs.len() {
        if (args[i] - args[i - 1]).abs() <= jump {
            continue;
        }
        let (mut a, mut b) = (xs[i - 1], xs[i]);
        let left = args[i - 1];
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if (argmax_at(mid) - left).abs() <= jump {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= 1e-13 * reach {
                break;
            }
        }
        out.push(0.5 * (a + b));
        if out.len() == MAX_SWITCHES {
            break;
        }
    }
    out
}

fn outer_table(nested: &Nested<'_>) -> Result<Option<OuterTable>> {
    let hi = nested.band.hi();
    if hi == 0.0 {
        return Ok(None);
    }
    let sigma_min = nested.band.lo().max(hi / OUTER_SIGMA_RATIO);
    let mut breaks = nested.integrand.kink_hints(&[]);
    breaks.extend_from_slice(&nested.outer_breaks);
    let reach = SWITCH_SCAN_Z * hi;
    let rule = composite_legendre(-reach, reach, 2.0 * sigma_min, &breaks)?;
    let values = rule
        .nodes()
        .par_iter()
        .map(|&x| {
            let mut p = [0.0; MAX_NESTED_DIM];
            p[0] = x;
            nested.level(&p, 1).value
        })
        .collect();
    Ok(Some(OuterTable {
        sigma_min,
        rule,
        values,
    }))
}

/// Sequential value by nested quadrature, with the maximizing first-step σ.
pub fn nested_quadrature(integrand: &JointIntegrand, band: VarianceBand, config: &JointConfig) -> Result<ScalarMax> {
    let n = integrand.arity();
    if n == 0 || n > MAX_NESTED_DIM {
        return Err(Error::NotImplemented(format!(
            "nested quadrature supports 1 <= n <= {MAX_NESTED_DIM}, got n = {n}"
        )));
    }
    let search = if n <= 2 {
        config.sigma
    } else {
        SigmaSearch {
            grid: 5,
            refine: false,
            ..config.sigma
        }
    };
    let mut nested = Nested {
        integrand,
        n,
        band,
        rule: hermite(config)?,
        search,
        smooth_last: integrand.is_smooth_in_last(),
        outer_breaks: Vec::new(),
        outer: None,
    };
    if n >= 2 {
        nested.outer_breaks = switch_points(&nested);
        nested.outer = outer_table(&nested)?;
    }
    let best = nested.level(&[0.0; MAX_NESTED_DIM], 0);
    if best.value.is_finite() {
        Ok(best)
    } else {
        Err(Error::NumericDomain("non-finite nested expectation".into()))
    }
}

/// `Ê[φ(n^{-1/2} Σ Wᵢ)]` for scalar `φ`.
pub fn normalized_sum_expectation(
    phi: &TestFunction,
    band: VarianceBand,
    n: usize,
    mode: IndependenceMode,
    config: &JointConfig,
) -> Result<JointValue> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if phi.arity() != 1 {
        return Err(Error::invalid("normalized sums need a scalar test function"));
    }
    let integrand = JointIntegrand::of_weighted_sum(phi.clone(), vec![1.0 / (n as f64).sqrt(); n])?;
    joint_expectation_of(&integrand, band, mode, config)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkeletonMode {
    /// Constant pairs `(σ₁, σ₂) ∈ {σ̲, σ̄}²`.
    S2,
    /// `σ₁ ∈ {σ̲, σ̄}` and `σ₂` switching on the sign of the first variable.
    L2,
}

impl FromStr for SkeletonMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S2" => Ok(SkeletonMode::S2),
            "L2" => Ok(SkeletonMode::L2),
            other => Err(Error::invalid(format!("unknown skeleton set '{other}' (expected S2 or L2)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSet {
    pub mode: SkeletonMode,
    pub band: VarianceBand,
}

/// `σ₂ = sigma2_pos` when the first variable is positive, else `sigma2_nonpos`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SkeletonPolicy {
    pub sigma1: f64,
    pub sigma2_nonpos: f64,
    pub sigma2_pos: f64,
}

impl SkeletonSet {
    pub fn new(mode: SkeletonMode, band: VarianceBand) -> Self {
        Self { mode, band }
    }

    /// Candidates in a fixed order: `σ₁` slowest, then `σ₂` on `{x ≤ 0}`, then on `{x > 0}`.
    pub fn policies(&self) -> Vec<SkeletonPolicy> {
        let e = self.band.endpoints();
        let mut out = Vec::new();
        for &s1 in &e {
            match self.mode {
                SkeletonMode::S2 => {
                    for &s2 in &e {
                        out.push(SkeletonPolicy {
                            sigma1: s1,
                            sigma2_nonpos: s2,
                            sigma2_pos: s2,
                        });
                    }
                }
                SkeletonMode::L2 => {
                    for &neg in &e {
                        for &pos in &e {
                            out.push(SkeletonPolicy {
                                sigma1: s1,
                                sigma2_nonpos: neg,
                                sigma2_pos: pos,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkeletonResult {
    pub value: f64,
    pub best_index: usize,
    pub best_policy: SkeletonPolicy,
    pub candidate_values: Vec<f64>,
}

fn in_skeleton_class(kind: &FunctionKind) -> bool {
    match kind {
        FunctionKind::MonomialProduct { exponents, .. } => exponents.len() == 2,
        FunctionKind::PowerOfWeightedSum { weights, .. } => weights.len() == 2,
        FunctionKind::Scaled { inner, .. } => in_skeleton_class(inner),
        _ => false,
    }
}

/// Maximum of `E[φ(σ₁ε₁, σ₂(σ₁ε₁)ε₂)]` over a skeleton family.
pub fn skeleton_expectation(phi: &TestFunction, skeleton: &SkeletonSet, rule: &QuadratureRule) -> Result<SkeletonResult> {
    if !in_skeleton_class(phi.kind()) {
        return Err(Error::invalid(
            "skeleton sets apply to bivariate (a x1 + b x2)^n or c x1^p x2^q",
        ));
    }
    let policies = skeleton.policies();
    let values: Vec<f64> = policies
        .par_iter()
        .map(|p| {
            let inner = |x1: f64, s2: f64| rule.integrate(|z| phi.eval_unchecked(&[x1, s2 * z]));
            let f = |x1: f64| inner(x1, if x1 > 0.0 { p.sigma2_pos } else { p.sigma2_nonpos });
            piecewise_normal_expectation(f, 0.0, p.sigma1, &[0.0])
        })
        .collect();
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(format!("non-finite skeleton candidate value {v}")));
    }
    let best_index = argmax_first(&values);
    Ok(SkeletonResult {
        value: values[best_index],
        best_index,
        best_policy: policies[best_index],
        candidate_values: values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    /// Semi-sequential values of `φ(x₁, x₂)` and `φ(x₂, x₁)`.
    pub semi_sequential: (f64, f64),
    pub semi_gap: f64,
    /// Sequential values of the two orders, when evaluable.
    pub sequential: Option<(f64, f64)>,
}

/// Compares both argument orders of a bivariate `φ` in each mode.
pub fn symmetry_check(phi: &TestFunction, band: VarianceBand, config: &JointConfig) -> Result<SymmetryReport> {
    let forward = JointIntegrand::from_function(phi);
    if forward.arity() != 2 {
        return Err(Error::invalid("symmetry check needs a bivariate function"));
    }
    let backward = forward.swapped()?;
    let semi = |i: &JointIntegrand| joint_expectation_of(i, band, IndependenceMode::SemiSequential, config);
    let a = semi(&forward)?.value;
    let b = semi(&backward)?.value;
    let seq = |i: &JointIntegrand| joint_expectation_of(i, band, IndependenceMode::Sequential, config);
    let sequential = match (seq(&forward), seq(&backward)) {
        (Ok(x), Ok(y)) => Some((x.value, y.value)),
        (Err(e), _) | (_, Err(e)) if !e.is_usage() => return Err(e),
        _ => None,
    };
    Ok(SymmetryReport {
        semi_sequential: (a, b),
        semi_gap: (a - b).abs(),
        sequential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn b12() -> VarianceBand {
        VarianceBand::new(1.0, 2.0).unwrap()
    }

    fn cfg() -> JointConfig {
        JointConfig::default()
    }

    #[test]
    fn third_moment_in_both_modes() {
        let phi = TestFunction::parse("(x1+x2)^3").unwrap();
        let semi = joint_expectation(&phi, b12(), IndependenceMode::SemiSequential, &cfg()).unwrap();
        assert_eq!(semi.value, 0.0);
        let seq = joint_expectation(&phi, b12(), IndependenceMode::Sequential, &cfg()).unwrap();
        assert_eq!(seq.method, "nested-quadrature");
        assert!((seq.value - 18.0 / (2.0 * PI).sqrt()).abs() < 1e-9, "{}", seq.value);
    }

    #[test]
    fn monomial_recursion_examples() {
        let t = |e: Vec<u32>| Monomial {
            coefficient: 1.0,
            exponents: e,
        };
        assert!((sequential_monomial(&t(vec![1, 2]), b12()) - 6.0 / (2.0 * PI).sqrt()).abs() < 1e-14);
        assert_eq!(sequential_monomial(&t(vec![2, 1]), b12()), 0.0);
        assert_eq!(sequential_monomial(&t(vec![2, 2]), b12()), 16.0);
        let neg = Monomial {
            coefficient: -1.0,
            exponents: vec![2, 2],
        };
        assert_eq!(sequential_monomial(&neg, b12()), -1.0);
    }

    #[test]
    fn monomial_recursion_matches_nested_quadrature() {
        for e in [vec![1, 2], vec![1, 1], vec![3, 2], vec![1, 1, 2]] {
            let phi = TestFunction::monomial(e.clone(), 1.0).unwrap();
            let i = JointIntegrand::Multivariate { phi };
            let exact = sequential_monomial(&i.single_monomial().unwrap(), b12());
            let nested = nested_quadrature(&i, b12(), &cfg()).unwrap().value;
            let tol = if e.len() == 3 { 1e-6 } else { 1e-9 };
            assert!((exact - nested).abs() < tol, "{e:?}: {exact} vs {nested}");
        }
    }

    #[test]
    fn semi_sequential_monomials() {
        let v = |s: &str| {
            joint_expectation(&TestFunction::parse(s).unwrap(), b12(), IndependenceMode::SemiSequential, &cfg())
                .unwrap()
                .value
        };
        assert_eq!(v("x1*x2^2"), 0.0);
        assert_eq!(v("x1^2*x2^2"), 16.0);
        assert!((v("-x1^2*x2^2") + 1.0).abs() < 1e-15);
    }

    #[test]
    fn tensor_route_for_norms() {
        let phi = TestFunction::new(FunctionKind::EuclideanNorm { dim: 2 }).unwrap();
        let v = joint_expectation(&phi, b12(), IndependenceMode::SemiSequential, &cfg()).unwrap();
        assert_eq!(v.method, "tensor-hermite");
        // E|σZ| in two dimensions is σ√(π/2) at the σ̄ corner.
        assert!((v.value - 2.0 * (PI / 2.0).sqrt()).abs() < 5e-3);
    }

    #[test]
    fn large_sums_use_the_grid_recursion() {
        let phi = TestFunction::power(2);
        let v = normalized_sum_expectation(&phi, b12(), 5, IndependenceMode::Sequential, &cfg()).unwrap();
        assert_eq!(v.method, "backward-recursion");
        assert!((v.value - 4.0).abs() < 1e-8);
    }

    #[test]
    fn unsupported_combination_names_the_limit() {
        let terms = (0..4)
            .map(|k| {
                let mut e = vec![0; 4];
                e[k] = 2;
                Monomial {
                    coefficient: 1.0,
                    exponents: e,
                }
            })
            .collect();
        let phi = TestFunction::new(FunctionKind::PolynomialNd { terms }).unwrap();
        let err = joint_expectation(&phi, b12(), IndependenceMode::Sequential, &cfg()).unwrap_err();
        assert!(matches!(&err, Error::NotImplemented(m) if m.contains("n <= 3")), "{err}");
    }

    #[test]
    fn skeleton_examples() {
        let rule = QuadratureRule::default();
        let cube = TestFunction::parse("(x1+x2)^3").unwrap();
        let l2 = skeleton_expectation(&cube, &SkeletonSet::new(SkeletonMode::L2, b12()), &rule).unwrap();
        assert!((l2.value - 18.0 / (2.0 * PI).sqrt()).abs() < 1e-10);
        assert_eq!(
            l2.best_policy,
            SkeletonPolicy {
                sigma1: 2.0,
                sigma2_nonpos: 1.0,
                sigma2_pos: 2.0
            }
        );
        let s2 = skeleton_expectation(&cube, &SkeletonSet::new(SkeletonMode::S2, b12()), &rule).unwrap();
        assert!(s2.value.abs() < 1e-12);
        assert_eq!(s2.candidate_values.len(), 4);
        let sq = TestFunction::parse("(x1+x2)^2").unwrap();
        for mode in [SkeletonMode::S2, SkeletonMode::L2] {
            let r = skeleton_expectation(&sq, &SkeletonSet::new(mode, b12()), &rule).unwrap();
            assert!((r.value - 8.0).abs() < 1e-12);
        }
        assert!(skeleton_expectation(&TestFunction::call(0.0), &SkeletonSet::new(SkeletonMode::L2, b12()), &rule).is_err());
    }

    #[test]
    fn symmetry_report() {
        let phi = TestFunction::parse("x1*x2^2").unwrap();
        let r = symmetry_check(&phi, b12(), &cfg()).unwrap();
        assert_eq!(r.semi_sequential, (0.0, 0.0));
        let (a, b) = r.sequential.unwrap();
        assert!((a - 6.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn registry_lookup() {
        for mode in IndependenceMode::ALL {
            let e = evaluator_by_name(mode.name()).unwrap();
            assert_eq!(e.mode(), mode);
            assert_eq!(mode.name().parse::<IndependenceMode>().unwrap(), mode);
        }
        assert!(evaluator_by_name("nope").is_none());
    }
}

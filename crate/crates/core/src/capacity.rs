//! Upper and lower distribution functions of semi-G-normal variables, upper
//! exceedance probabilities of weighted sums, and the robust confidence
//! interval for a regression slope.
//!
//! Indicators are replaced by piecewise-linear ramps. With `f` equal to 1 on
//! `{|x| ≥ c}` and `g` equal to 0 on `{|x| ≤ c}` (both of width `δ`),
//! `Ê[g(S)] ≤ P̄(|S| > c) ≤ Ê[f(S)]`, so each estimate comes with a bracket.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{gem_weighted_sum, GridConfig, SigmaPolicy, SigmaSet};
use crate::error::{Error, Result};
use crate::kernel::{gauss_hermite, std_normal_cdf, RngStream};
use crate::maximal::VarianceBand;
use crate::semignormal::{upper_expectation, SemiGNormal, SigmaSearch};
use crate::test_functions::TestFunction;

const COVERAGE_CHUNK: usize = 4096;

/// `sup_σ P(σε ≤ y)`; a zero σ contributes the point mass `1{y ≥ 0}`.
pub fn upper_cdf(dist: &SemiGNormal, y: f64) -> f64 {
    let (lo, hi) = (dist.band.lo(), dist.band.hi());
    if y >= 0.0 {
        scaled_cdf(y, lo)
    } else {
        scaled_cdf(y, hi)
    }
}

/// `inf_σ P(σε ≤ y)`.
pub fn lower_cdf(dist: &SemiGNormal, y: f64) -> f64 {
    let (lo, hi) = (dist.band.lo(), dist.band.hi());
    if y >= 0.0 {
        scaled_cdf(y, hi)
    } else {
        scaled_cdf(y, lo)
    }
}

fn scaled_cdf(y: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        if y >= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        std_normal_cdf(y / sigma)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub thresholds: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// Zero for closed-form curves.
    pub smoothing_width: f64,
}

impl CapacityCurve {
    /// Closed-form curve of a semi-G-normal variable; thresholds are sorted.
    pub fn semignormal(dist: &SemiGNormal, thresholds: &[f64]) -> Result<Self> {
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("thresholds must be finite"));
        }
        let mut thresholds = thresholds.to_vec();
        thresholds.sort_by(f64::total_cmp);
        Ok(Self {
            upper: thresholds.iter().map(|&y| upper_cdf(dist, y)).collect(),
            lower: thresholds.iter().map(|&y| lower_cdf(dist, y)).collect(),
            thresholds,
            smoothing_width: 0.0,
        })
    }

    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "threshold,upper,lower")?;
        for i in 0..self.thresholds.len() {
            writeln!(out, "{},{},{}", self.thresholds[i], self.upper[i], self.lower[i])?;
        }
        Ok(())
    }
}

/// Model family over which the exceedance probability is maximized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// Constant σ-vectors.
    #[serde(rename = "S_n")]
    Sn,
    /// Feedback policies, evaluated by the backward recursion.
    #[serde(rename = "L_n")]
    Ln,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Sn => "S_n",
            Family::Ln => "L_n",
        })
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "S_n" | "Sn" | "S" => Ok(Family::Sn),
            "L_n" | "Ln" | "L" => Ok(Family::Ln),
            other => Err(Error::invalid(format!("unknown family '{other}' (expected S_n or L_n)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceQuery {
    pub weights: Vec<f64>,
    pub band: VarianceBand,
    pub alpha: f64,
    pub family: Family,
}

impl ConfidenceQuery {
    pub fn new(weights: Vec<f64>, band: VarianceBand, alpha: f64, family: Family) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) || weights.iter().all(|&w| w == 0.0) {
            return Err(Error::invalid("weights must be finite and not all zero"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self {
            weights,
            band,
            alpha,
            family,
        })
    }

    /// Slope weights `aᵢ = (xᵢ − x̄) / Σ(xⱼ − x̄)²` of a design.
    pub fn from_design(design_x: &[f64], band: VarianceBand, alpha: f64, family: Family) -> Result<Self> {
        if design_x.len() < 2 {
            return Err(Error::invalid("a design needs at least two points"));
        }
        let mean = design_x.iter().sum::<f64>() / design_x.len() as f64;
        let sxx: f64 = design_x.iter().map(|x| (x - mean).powi(2)).sum();
        if !(sxx > 0.0) || !sxx.is_finite() {
            return Err(Error::invalid("design points must not all be equal"));
        }
        Self::new(design_x.iter().map(|x| (x - mean) / sxx).collect(), band, alpha, family)
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    /// Ramp width as a fraction of the threshold.
    pub width_fraction: f64,
    pub grid: GridConfig,
    pub sigma_set: SigmaSet,
    pub hermite_order: usize,
    pub bisection_prob_tol: f64,
    pub bisection_width_tol: f64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            width_fraction: 0.01,
            grid: GridConfig::default(),
            sigma_set: SigmaSet::Grid(9),
            hermite_order: 40,
            bisection_prob_tol: 1e-4,
            bisection_width_tol: 1e-6,
        }
    }
}

/// `Ê[g] ≤ P̄ ≤ Ê[f]` at one ramp width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sandwich {
    pub width: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Sandwich {
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacityEstimate {
    pub family: Family,
    pub c: f64,
    /// Closed form for `S_n`; `Ê[f]` at width `δ` for `L_n`.
    pub upper_prob: f64,
    pub sandwich: Sandwich,
    pub half_width: Sandwich,
    /// The exact `S_n` value `2(1 − Φ(c / (σ̄‖a‖)))`, for every family.
    pub constant_sigma_prob: f64,
}

/// The ramp pair bracketing `1{|x| > c}`.
pub fn sandwich_functions(c: f64, width: f64) -> Result<(TestFunction, TestFunction)> {
    let upper = TestFunction::indicator_abs_above(c, width)?;
    let lower = TestFunction::indicator_abs_above(c + width, width)?;
    Ok((lower, upper))
}

fn constant_sigma_prob(query: &ConfidenceQuery, c: f64) -> f64 {
    let s = query.band.hi() * query.norm();
    if s == 0.0 {
        return 0.0;
    }
    2.0 * std_normal_cdf(-c / s)
}

fn smoothed_value(query: &ConfidenceQuery, phi: &TestFunction, config: &CapacityConfig) -> Result<f64> {
    match query.family {
        Family::Sn => {
            let r = query.norm();
            let band = VarianceBand::new(query.band.lo() * r, query.band.hi() * r)?;
            let rule = gauss_hermite(config.hermite_order)?;
            Ok(upper_expectation(&SemiGNormal::new(band), phi, &rule, &SigmaSearch::default())?.value)
        }
        Family::Ln => Ok(gem_weighted_sum(phi, query.band, &query.weights, config.sigma_set, &config.grid)?.value),
    }
}

fn sandwich_at(query: &ConfidenceQuery, c: f64, width: f64, config: &CapacityConfig) -> Result<Sandwich> {
    let (g, f) = sandwich_functions(c, width)?;
    Ok(Sandwich {
        width,
        lower: smoothed_value(query, &g, config)?,
        upper: smoothed_value(query, &f, config)?,
    })
}

/// `P̄(|Σ aᵢWᵢ| > c)` over the query's family.
pub fn weighted_sum_capacity(query: &ConfidenceQuery, c: f64, config: &CapacityConfig) -> Result<CapacityEstimate> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("threshold c must be positive, got {c}")));
    }
    if !(config.width_fraction > 0.0) {
        return Err(Error::invalid("width_fraction must be positive"));
    }
    let width = config.width_fraction * c;
    let sandwich = sandwich_at(query, c, width, config)?;
    let half_width = sandwich_at(query, c, 0.5 * width, config)?;
    let exact = constant_sigma_prob(query, c);
    let upper_prob = match query.family {
        Family::Sn => exact,
        Family::Ln => sandwich.upper,
    };
    Ok(CapacityEstimate {
        family: query.family,
        c,
        upper_prob,
        sandwich,
        half_width,
        constant_sigma_prob: exact,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalValue {
    pub c: f64,
    pub upper_prob: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

/// Solves `P̄(|Σ aᵢWᵢ| > c) = α` by bisection on `[0, 10 σ̄ ‖a‖]`.
pub fn robust_critical_value(query: &ConfidenceQuery, config: &CapacityConfig) -> Result<CriticalValue> {
    if !(query.alpha > 0.001 && query.alpha < 0.5) {
        return Err(Error::invalid(format!(
            "robust critical values need alpha in (0.001, 0.5), got {}",
            query.alpha
        )));
    }
    let scale = query.band.hi() * query.norm();
    if scale == 0.0 {
        return Err(Error::invalid("the band upper end must be positive"));
    }
    let prob = |c: f64| weighted_sum_capacity(query, c, config).map(|e| e.upper_prob);
    let (mut lo, mut hi) = (0.0, 10.0 * scale);
    let p_hi = prob(hi)?;
    if p_hi > query.alpha {
        return Err(Error::Bracket(format!(
            "upper probability {p_hi} at c = {hi} is still above alpha = {}",
            query.alpha
        )));
    }
    let mut best = (hi, p_hi);
    let mut iterations = 0;
    while hi - lo > config.bisection_width_tol {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let p = prob(mid)?;
        if (p - query.alpha).abs() < (best.1 - query.alpha).abs() {
            best = (mid, p);
        }
        if (p - query.alpha).abs() <= config.bisection_prob_tol {
            best = (mid, p);
            break;
        }
        if p > query.alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - query.alpha).abs() > config.bisection_prob_tol && hi - lo > config.bisection_width_tol {
        return Err(Error::Bracket(format!(
            "bisection stalled at c = {} with probability {}",
            best.0, best.1
        )));
    }
    Ok(CriticalValue {
        c: best.0,
        upper_prob: best.1,
        iterations,
        bracket: (lo, hi),
    })
}

/// State visible to a volatility policy before step `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathState {
    pub step: usize,
    /// `Σ_{i<k} aᵢσᵢεᵢ`.
    pub partial_sum: f64,
    /// `σ_{k−1}ε_{k−1}`, absent at the first step.
    pub previous_residual: Option<f64>,
}

/// A rule choosing σ for each step of a simulated path.
pub trait VolatilityPolicy: Send + Sync {
    fn name(&self) -> &str;
    /// `aux` is a stream reserved for policy randomness, separate from the noise.
    fn sigma(&self, state: &PathState, aux: &mut RngStream) -> f64;
}

pub struct ConstantPolicy {
    name: &'static str,
    sigma: f64,
}

impl VolatilityPolicy for ConstantPolicy {
    fn name(&self) -> &str {
        self.name
    }

    fn sigma(&self, _state: &PathState, _aux: &mut RngStream) -> f64 {
        self.sigma
    }
}

pub struct IidUniformPolicy {
    band: VarianceBand,
}

impl VolatilityPolicy for IidUniformPolicy {
    fn name(&self) -> &str {
        "iid-uniform"
    }

    fn sigma(&self, _state: &PathState, aux: &mut RngStream) -> f64 {
        aux.uniform_in(self.band.lo(), self.band.hi())
    }
}

/// `σ̄` after a positive residual and at the start, `σ̲` otherwise.
pub struct SignFeedbackPolicy {
    band: VarianceBand,
}

impl VolatilityPolicy for SignFeedbackPolicy {
    fn name(&self) -> &str {
        "sign-feedback"
    }

    fn sigma(&self, state: &PathState, _aux: &mut RngStream) -> f64 {
        match state.previous_residual {
            Some(r) if r <= 0.0 => self.band.lo(),
            _ => self.band.hi(),
        }
    }
}

/// Replays a backward-recursion policy on the partial sum.
pub struct ReplayPolicy {
    policy: SigmaPolicy,
}

impl VolatilityPolicy for ReplayPolicy {
    fn name(&self) -> &str {
        "dp-replay"
    }

    fn sigma(&self, state: &PathState, _aux: &mut RngStream) -> f64 {
        self.policy.sigma_at(state.step, state.partial_sum)
    }
}

pub const POLICY_NAMES: [&str; 5] = ["const-lo", "const-hi", "iid-uniform", "sign-feedback", "dp-replay"];

/// Builds a registered policy; `dp-replay` needs the recursion's policy.
pub fn policy_by_name(
    name: &str,
    band: VarianceBand,
    replay: Option<&SigmaPolicy>,
) -> Result<Box<dyn VolatilityPolicy>> {
    Ok(match name {
        "const-lo" => Box::new(ConstantPolicy {
            name: "const-lo",
            sigma: band.lo(),
        }),
        "const-hi" => Box::new(ConstantPolicy {
            name: "const-hi",
            sigma: band.hi(),
        }),
        "iid-uniform" => Box::new(IidUniformPolicy { band }),
        "sign-feedback" => Box::new(SignFeedbackPolicy { band }),
        "dp-replay" => {
            let policy = replay
                .ok_or_else(|| Error::invalid("dp-replay needs a policy from the backward recursion"))?
                .clone();
            if policy.band() != band {
                return Err(Error::invalid("replay policy band differs from the query band"));
            }
            Box::new(ReplayPolicy { policy })
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown policy '{other}' (expected one of {})",
                POLICY_NAMES.join(", ")
            )))
        }
    })
}

/// The feedback policy that attains the `L_n` exceedance value at `c`.
pub fn extremal_policy(query: &ConfidenceQuery, c: f64, config: &CapacityConfig) -> Result<SigmaPolicy> {
    let (_, f) = sandwich_functions(c, config.width_fraction * c)?;
    Ok(gem_weighted_sum(&f, query.band, &query.weights, config.sigma_set, &config.grid)?.policy)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageRow {
    pub policy: String,
    pub coverage: f64,
    pub std_error: f64,
    pub reps: usize,
}

/// Empirical `P(|Σ aᵢσᵢεᵢ| ≤ c)` per policy, with common noise across policies.
pub fn coverage_simulation(
    query: &ConfidenceQuery,
    c: f64,
    policies: &[Box<dyn VolatilityPolicy>],
    reps: usize,
    rng: &RngStream,
) -> Result<Vec<CoverageRow>> {
    if reps < 2 {
        return Err(Error::invalid("coverage simulation needs at least two replications"));
    }
    let noise_root = rng.substream(rng.stream_id().wrapping_mul(2));
    let aux_root = rng.substream(rng.stream_id().wrapping_mul(2).wrapping_add(1));
    let chunks = reps.div_ceil(COVERAGE_CHUNK);
    Ok(policies
        .iter()
        .map(|policy| {
            let covered: usize = (0..chunks)
                .into_par_iter()
                .map(|chunk| {
                    let mut noise = noise_root.fork(chunk as u64);
                    let mut aux = aux_root.fork(chunk as u64);
                    let count = COVERAGE_CHUNK.min(reps - chunk * COVERAGE_CHUNK);
                    let mut hits = 0;
                    for _ in 0..count {
                        let mut state = PathState {
                            step: 0,
                            partial_sum: 0.0,
                            previous_residual: None,
                        };
                        for (k, &a) in query.weights.iter().enumerate() {
                            state.step = k;
                            let sigma = policy.sigma(&state, &mut aux);
                            let residual = sigma * noise.normal();
                            state.partial_sum += a * residual;
                            state.previous_residual = Some(residual);
                        }
                        if state.partial_sum.abs() <= c {
                            hits += 1;
                        }
                    }
                    hits
                })
                .sum();
            let p = covered as f64 / reps as f64;
            CoverageRow {
                policy: policy.name().to_string(),
                coverage: p,
                std_error: (p * (1.0 - p) / reps as f64).sqrt(),
                reps,
            }
        })
        .collect())
}

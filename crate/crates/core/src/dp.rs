//! Backward recursion on a state grid.
//!
//! One step maps `φ_i` to `φ_{i+1}(x) = max_σ E[φ_i(x + cσε)]`. With
//! `c = 1/√n` for every step this is the iterative approximation of the
//! G-normal expectation; with per-step coefficients `a_{n-i}` it is the G-EM
//! procedure for `Ê[φ(Σ aᵢWᵢ)]`. The maximizing σ at every state is kept and
//! reindexed forward, giving a replayable feedback policy.
//!
//! The first step integrates the test function itself (piecewise for kinked
//! payoffs). Later steps integrate the grid iterate: by a discrete Gaussian
//! convolution on the grid when the noise spans at least a few cells, which is
//! spectrally accurate for smooth iterates, and by Gauss–Hermite over the
//! interpolant otherwise.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, Interp};
use crate::kernel::{gauss_hermite, mean_and_se, normal_expectation, std_normal_pdf, QuadratureRule, RngStream};
use crate::maximal::VarianceBand;
use crate::search::{linspace, strictly_better};
use crate::test_functions::TestFunction;

pub const POLICY_VERSION: u32 = 1;

/// Convolution is used when `scale / step` is at least this ratio.
const CONVOLUTION_MIN_CELLS: f64 = 1.5;
const CONVOLUTION_MAX_HALF_WIDTH: usize = 5000;
const KERNEL_TRUNCATION: f64 = 10.0;
const REPLAY_CHUNK: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaSet {
    TwoPoint,
    ThreePoint,
    Grid(usize),
}

impl Default for SigmaSet {
    fn default() -> Self {
        SigmaSet::TwoPoint
    }
}

impl SigmaSet {
    /// Ascending candidate σ values for a band.
    pub fn values(&self, band: VarianceBand) -> Vec<f64> {
        if band.is_degenerate() {
            return vec![band.lo()];
        }
        match *self {
            SigmaSet::TwoPoint => vec![band.lo(), band.hi()],
            SigmaSet::ThreePoint => vec![band.lo(), 0.5 * (band.lo() + band.hi()), band.hi()],
            SigmaSet::Grid(m) => linspace(band.lo(), band.hi(), m.max(2)),
        }
    }
}

/// Parses `two-point`, `three-point` or `grid:M`.
impl FromStr for SigmaSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "two-point" | "2" => Ok(SigmaSet::TwoPoint),
            "three-point" | "3" => Ok(SigmaSet::ThreePoint),
            other => {
                let m = other
                    .strip_prefix("grid:")
                    .and_then(|m| m.parse::<usize>().ok())
                    .filter(|&m| m >= 2)
                    .ok_or_else(|| Error::invalid(format!("unknown sigma set '{other}'")))?;
                Ok(SigmaSet::Grid(m))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMethod {
    #[default]
    Auto,
    Hermite,
    Convolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
    pub halfwidth_multiplier: f64,
    pub interp: Interp,
    pub method: StepMethod,
    pub hermite_order: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: 2001,
            halfwidth_multiplier: 1.5,
            interp: Interp::Cubic,
            method: StepMethod::Auto,
            hermite_order: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSchedule {
    pub n_steps: usize,
    pub sigma_set: SigmaSet,
    pub weights: Option<Vec<f64>>,
    pub grid: GridConfig,
    pub keep_surface: bool,
}

impl IterationSchedule {
    pub fn new(n_steps: usize) -> Self {
        Self {
            n_steps,
            sigma_set: SigmaSet::TwoPoint,
            weights: None,
            grid: GridConfig::default(),
            keep_surface: false,
        }
    }
}

/// Optimal σ as a function of the state before each variable, in forward order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaPolicy {
    policy_version: u32,
    x_lo: f64,
    step: f64,
    points: usize,
    band: VarianceBand,
    sigma_set: Vec<f64>,
    weights: Vec<f64>,
    tables: Vec<Vec<f64>>,
}

impl SigmaPolicy {
    pub fn steps(&self) -> usize {
        self.tables.len()
    }

    pub fn band(&self) -> VarianceBand {
        self.band
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma_set(&self) -> &[f64] {
        &self.sigma_set
    }

    pub fn table(&self, k: usize) -> &[f64] {
        &self.tables[k]
    }

    pub fn grid_point(&self, j: usize) -> f64 {
        self.x_lo + self.step * j as f64
    }

    /// σ for variable `k` (0-based) given the weighted partial sum of the
    /// earlier variables, read at the nearest grid state.
    pub fn sigma_at(&self, k: usize, state: f64) -> f64 {
        let t = ((state - self.x_lo) / self.step).round();
        let j = if t <= 0.0 { 0 } else { (t as usize).min(self.points - 1) };
        self.tables[k][j]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policies always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: SigmaPolicy =
            serde_json::from_str(text).map_err(|e| Error::invalid(format!("bad policy JSON: {e}")))?;
        if p.policy_version != POLICY_VERSION {
            return Err(Error::invalid(format!(
                "unsupported policy_version {}, expected {POLICY_VERSION}",
                p.policy_version
            )));
        }
        if p.tables.len() != p.weights.len() || p.tables.iter().any(|t| t.len() != p.points) {
            return Err(Error::invalid("policy tables do not match weights and grid"));
        }
        Ok(p)
    }
}

/// One backward step on a grid iterate. `sigmas` must be ascending; ties go
/// to the smaller σ. Returns the next iterate and the argmax table.
pub fn dp_step(
    current: &GridFunction,
    scale_per_sigma: &(dyn Fn(f64) -> f64 + Sync),
    sigmas: &[f64],
    rule: &QuadratureRule,
    method: StepMethod,
) -> Result<(GridFunction, Vec<f64>)> {
    if sigmas.is_empty() {
        return Err(Error::invalid("sigma set is empty"));
    }
    if let Some(j) = current.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow(format!(
            "current iterate is non-finite at x = {}",
            current.point(j)
        )));
    }
    let h = current.step();
    let n = current.len();
    let plans: Vec<StepPlan> = sigmas
        .iter()
        .map(|&s| StepPlan::new(scale_per_sigma(s), h, method))
        .collect();
    let pad = plans.iter().map(StepPlan::half_width).max().unwrap_or(0);
    let padded: Vec<f64> = (-(pad as isize)..(n + pad) as isize)
        .map(|j| current.at_index(j))
        .collect();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = current.point(j);
            let mut best = (f64::NAN, sigmas[0]);
            for (plan, &sigma) in plans.iter().zip(sigmas) {
                let v = match plan {
                    StepPlan::Identity => current.values()[j],
                    StepPlan::Convolution { weights } => {
                        let k = (weights.len() - 1) / 2;
                        let base = j + pad - k;
                        weights
                            .iter()
                            .zip(&padded[base..base + weights.len()])
                            .map(|(w, f)| w * f)
                            .sum()
                    }
                    StepPlan::Hermite { scale } => rule.integrate(|z| current.eval(x + scale * z)),
                };
                if best.0.is_nan() || strictly_better(v, best.0) {
                    best = (v, sigma);
                }
            }
            best
        })
        .collect();
    finish_step(current.x_lo(), h, current.interp(), rows)
}

fn finish_step(x_lo: f64, h: f64, interp: Interp, rows: Vec<(f64, f64)>) -> Result<(GridFunction, Vec<f64>)> {
    if let Some(j) = rows.iter().position(|r| !r.0.is_finite()) {
        return Err(Error::NumericOverflow(format!(
            "non-finite value at grid point x = {}",
            x_lo + h * j as f64
        )));
    }
    let (values, table): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    Ok((GridFunction::new(x_lo, h, values, interp)?, table))
}

enum StepPlan {
    Identity,
    Convolution { weights: Vec<f64> },
    Hermite { scale: f64 },
}

impl StepPlan {
    fn new(scale: f64, h: f64, method: StepMethod) -> Self {
        if scale == 0.0 {
            return StepPlan::Identity;
        }
        let cells = scale / h;
        let half = (KERNEL_TRUNCATION * cells).ceil() as usize;
        let use_conv = match method {
            StepMethod::Hermite => false,
            StepMethod::Convolution => true,
            StepMethod::Auto => cells >= CONVOLUTION_MIN_CELLS && half <= CONVOLUTION_MAX_HALF_WIDTH,
        };
        if !use_conv {
            return StepPlan::Hermite { scale };
        }
        let mut weights: Vec<f64> = (-(half as isize)..=half as isize)
            .map(|m| std_normal_pdf(m as f64 / cells))
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        StepPlan::Convolution { weights }
    }

    fn half_width(&self) -> usize {
        match self {
            StepPlan::Convolution { weights } => (weights.len() - 1) / 2,
            _ => 0,
        }
    }
}

/// First backward step, integrating `φ` itself at every grid point.
fn terminal_step(
    phi: &TestFunction,
    half_points: usize,
    h: f64,
    interp: Interp,
    scale: f64,
    sigmas: &[f64],
    rule: &QuadratureRule,
) -> Result<(GridFunction, Vec<f64>)> {
    let n = 2 * half_points + 1;
    let x_lo = -(half_points as f64) * h;
    let rows: Vec<Result<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = (j as f64 - half_points as f64) * h;
            let mut best = (f64::NAN, sigmas[0]);
            for &sigma in sigmas {
                let v = normal_expectation(phi, x, scale * sigma, rule)?;
                if best.0.is_nan() || strictly_better(v, best.0) {
                    best = (v, sigma);
                }
            }
            Ok(best)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>().map_err(|e| match e {
        Error::NumericDomain(msg) => Error::NumericOverflow(msg),
        other => other,
    })?;
    finish_step(x_lo, h, interp, rows)
}

/// Output of a backward recursion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DpOutcome {
    /// `φ_{n,n}(0)`.
    pub value: f64,
    pub policy: SigmaPolicy,
    /// Iterates after each step, `surface[i]` holding `φ_{i+1}`; empty unless kept.
    pub surface: Vec<GridFunction>,
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::invalid("at least one weight is required"));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::invalid("weights must be finite"));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::invalid("weights must not all be zero"));
    }
    Ok(())
}

/// Backward recursion for `Ê[φ(Σ aᵢWᵢ)]` with `weights` in forward order.
pub fn backward_recursion(
    phi: &TestFunction,
    band: VarianceBand,
    weights: &[f64],
    sigma_set: SigmaSet,
    grid: &GridConfig,
    keep_surface: bool,
) -> Result<DpOutcome> {
    validate_weights(weights)?;
    if phi.arity() != 1 {
        return Err(Error::invalid("the backward recursion needs a scalar test function"));
    }
    if grid.points < 5 {
        return Err(Error::invalid("state grid needs at least 5 points"));
    }
    if !(grid.halfwidth_multiplier > 0.0) {
        return Err(Error::invalid("grid_halfwidth_multiplier must be positive"));
    }
    let required_sigmas = 4.0 + 0.5 * phi.growth_order() as f64;
    if 6.0 * grid.halfwidth_multiplier < required_sigmas {
        let suggested = (required_sigmas / 6.0 * 10.0).ceil() / 10.0;
        return Err(Error::GridExtent {
            reason: format!(
                "half-width of {:.2} standard deviations cannot hold a growth order {} test function",
                6.0 * grid.halfwidth_multiplier,
                phi.growth_order()
            ),
            suggested_multiplier: suggested,
        });
    }
    let rule = gauss_hermite(grid.hermite_order)?;
    let norm = weights.iter().map(|a| a * a).sum::<f64>().sqrt();
    let spread = band.hi() * norm;
    let halfwidth = if spread > 0.0 {
        grid.halfwidth_multiplier * 6.0 * spread
    } else {
        1.0
    };
    let half_points = (grid.points - 1) / 2;
    let h = halfwidth / half_points as f64;
    let sigmas = SigmaSet::values(&sigma_set, band);
    let n = weights.len();
    let mut tables: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut surface = Vec::new();

    let last = n - 1;
    let (mut current, table) =
        terminal_step(phi, half_points, h, grid.interp, weights[last].abs(), &sigmas, &rule)?;
    tables[last] = table;
    for k in (0..last).rev() {
        if keep_surface {
            surface.push(current.clone());
        }
        let a = weights[k].abs();
        let (next, table) = dp_step(&current, &|s| a * s, &sigmas, &rule, grid.method)?;
        tables[k] = table;
        current = next;
    }
    let value = current.values()[half_points];
    if keep_surface {
        surface.push(current);
    }
    let policy = SigmaPolicy {
        policy_version: POLICY_VERSION,
        x_lo: -(half_points as f64) * h,
        step: h,
        points: 2 * half_points + 1,
        band,
        sigma_set: sigmas,
        weights: weights.to_vec(),
        tables,
    };
    Ok(DpOutcome { value, policy, surface })
}

/// `φ_{n,n}(0)` of the iterative approximation with steps `σ/√n`.
pub fn gnormal_expectation_iterative(
    phi: &TestFunction,
    band: VarianceBand,
    schedule: &IterationSchedule,
) -> Result<DpOutcome> {
    if schedule.weights.is_some() {
        return Err(Error::invalid(
            "the iterative approximation uses equal steps; use gem_weighted_sum for weights",
        ));
    }
    if schedule.n_steps == 0 {
        return Err(Error::invalid("n_steps must be positive"));
    }
    let n = schedule.n_steps;
    let weights = vec![1.0 / (n as f64).sqrt(); n];
    backward_recursion(phi, band, &weights, schedule.sigma_set, &schedule.grid, schedule.keep_surface)
}

/// G-EM: `Ê[φ(Σ aᵢWᵢ)]` and the optimal feedback policy.
pub fn gem_weighted_sum(
    phi: &TestFunction,
    band: VarianceBand,
    weights: &[f64],
    sigma_set: SigmaSet,
    grid: &GridConfig,
) -> Result<DpOutcome> {
    backward_recursion(phi, band, weights, sigma_set, grid, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte Carlo value of `E[φ(Σ aᵢσᵢεᵢ)]` when `σᵢ` follows the policy.
pub fn policy_replay(
    policy: &SigmaPolicy,
    weights: &[f64],
    band: VarianceBand,
    phi: &TestFunction,
    samples: usize,
    rng: &RngStream,
) -> Result<McEstimate> {
    if weights.len() != policy.weights.len()
        || weights.iter().zip(&policy.weights).any(|(a, b)| (a - b).abs() > 1e-15 * a.abs().max(1.0))
    {
        return Err(Error::invalid("weights do not match the policy"));
    }
    if band != policy.band {
        return Err(Error::invalid(format!(
            "band {band} does not match the policy band {}",
            policy.band
        )));
    }
    if phi.arity() != 1 {
        return Err(Error::invalid("policy replay needs a scalar test function"));
    }
    if samples < 2 {
        return Err(Error::invalid("policy replay needs at least two samples"));
    }
    let chunks = samples.div_ceil(REPLAY_CHUNK);
    let values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut stream = rng.fork(c as u64);
            let count = REPLAY_CHUNK.min(samples - c * REPLAY_CHUNK);
            (0..count)
                .map(|_| {
                    let mut state = 0.0;
                    for (k, &a) in weights.iter().enumerate() {
                        let sigma = policy.sigma_at(k, state);
                        state += a * sigma * stream.normal();
                    }
                    phi.eval_scalar(state)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (mean, std_error) = mean_and_se(&values);
    Ok(McEstimate {
        mean,
        std_error,
        samples,
    })
}

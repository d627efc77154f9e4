//! Desk-scale experiments around the two central limit bridges: sums of
//! semi-G-i.i.d. noise toward the semi-G-normal law, and the iterative
//! approximation toward the G-normal law. Also the third-moment emergence
//! demo and the blocked max-mean estimator.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{gnormal_expectation_iterative, GridConfig, IterationSchedule, SigmaSet};
use crate::error::{Error, Result};
use crate::kernel::{gauss_hermite, gauss_legendre, mean_and_se, RngStream};
use crate::joint::{normalized_sum_expectation, IndependenceMode, JointConfig};
use crate::maximal::VarianceBand;
use crate::pde::{solve_gheat, PdeConfig};
use crate::search::{linspace, maximize_corners_then_sweep, maximize_on_interval};
use crate::semignormal::{upper_expectation, SemiGNormal, SigmaSearch};
use crate::test_functions::TestFunction;

const MAX_CORNER_DIM: usize = 8;
const MAX_RADEMACHER_DIM: usize = 12;
const MAX_UNIFORM_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseLaw {
    StandardNormal,
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    UniformStandardized,
}

impl NoiseLaw {
    pub fn mean(self) -> f64 {
        0.0
    }

    pub fn variance(self) -> f64 {
        match self {
            NoiseLaw::StandardNormal | NoiseLaw::Rademacher => 1.0,
            NoiseLaw::UniformStandardized => {
                let w = 2.0 * 3f64.sqrt();
                w * w / 12.0
            }
        }
    }
}

impl fmt::Display for NoiseLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseLaw::StandardNormal => "standard-normal",
            NoiseLaw::Rademacher => "rademacher",
            NoiseLaw::UniformStandardized => "uniform-standardized",
        })
    }
}

impl FromStr for NoiseLaw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "standard-normal" | "normal" => Ok(NoiseLaw::StandardNormal),
            "rademacher" => Ok(NoiseLaw::Rademacher),
            "uniform-standardized" | "uniform" => Ok(NoiseLaw::UniformStandardized),
            other => Err(Error::invalid(format!("unknown noise law '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltConfig {
    pub hermite_order: usize,
    pub legendre_order: usize,
    pub sigma: SigmaSearch,
    pub sweep_grid: usize,
    pub dp_grid: GridConfig,
    pub dp_sigma_set: SigmaSet,
    pub pde_cells_per_side: usize,
    pub cfl_safety: f64,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self {
            hermite_order: 40,
            legendre_order: 40,
            sigma: SigmaSearch::default(),
            sweep_grid: 17,
            dp_grid: GridConfig::default(),
            dp_sigma_set: SigmaSet::TwoPoint,
            pde_cells_per_side: 800,
            cfl_safety: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CltValue {
    pub value: f64,
    /// Maximizing σ-vector.
    pub argmax: Vec<f64>,
}

/// `sup_{σ ∈ [σ̲,σ̄]ⁿ} E[φ(n^{−1/2} Σ σᵢηᵢ)]` for i.i.d. noise `ηᵢ`.
///
/// With `corner_search` the full box is searched (corners, then coordinate
/// sweeps); otherwise only constant vectors `σ·1`.
pub fn semi_g_clt_lhs(
    phi: &TestFunction,
    band: VarianceBand,
    n: usize,
    noise: NoiseLaw,
    corner_search: bool,
    config: &CltConfig,
) -> Result<CltValue> {
    if phi.arity() != 1 {
        return Err(Error::invalid("the CLT experiments need a scalar test function"));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let root_n = (n as f64).sqrt();
    let expectation: Box<dyn Fn(&[f64]) -> f64 + Sync + '_> = match noise {
        NoiseLaw::StandardNormal => {
            let rule = gauss_hermite(config.hermite_order)?;
            let best = upper_expectation(&SemiGNormal::new(band), phi, &rule, &config.sigma)?;
            return Ok(CltValue {
                value: best.value,
                argmax: vec![best.argmax_sigma; n],
            });
        }
        NoiseLaw::Rademacher => {
            if n > MAX_RADEMACHER_DIM {
                return Err(Error::NotImplemented(format!(
                    "exact Rademacher enumeration is limited to n <= {MAX_RADEMACHER_DIM}, got n = {n}"
                )));
            }
            let patterns = 1usize << n;
            Box::new(move |s: &[f64]| {
                let mut total = 0.0;
                for mask in 0..patterns {
                    let sum: f64 = s
                        .iter()
                        .enumerate()
                        .map(|(i, &si)| if mask >> i & 1 == 1 { si } else { -si })
                        .sum();
                    total += phi.eval_scalar(sum / root_n);
                }
                total / patterns as f64
            })
        }
        NoiseLaw::UniformStandardized => {
            if n > MAX_UNIFORM_DIM {
                return Err(Error::NotImplemented(format!(
                    "uniform noise uses tensor quadrature and is limited to n <= {MAX_UNIFORM_DIM}, got n = {n}"
                )));
            }
            let half = 3f64.sqrt();
            let rule = gauss_legendre(config.legendre_order, -half, half)?;
            let density = 1.0 / (2.0 * half);
            Box::new(move |s: &[f64]| {
                let m = rule.order();
                let mut idx = vec![0usize; n];
                let mut total = 0.0;
                loop {
                    let mut w = 1.0;
                    let mut sum = 0.0;
                    for k in 0..n {
                        w *= rule.weights()[idx[k]] * density;
                        sum += s[k] * rule.nodes()[idx[k]];
                    }
                    total += w * phi.eval_scalar(sum / root_n);
                    let mut k = 0;
                    loop {
                        idx[k] += 1;
                        if idx[k] < m {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                        if k == n {
                            return total;
                        }
                    }
                }
            })
        }
    };
    let best = if corner_search {
        if n > MAX_CORNER_DIM {
            return Err(Error::NotImplemented(format!(
                "corner search is limited to n <= {MAX_CORNER_DIM}, got n = {n}"
            )));
        }
        let bounds = vec![(band.lo(), band.hi()); n];
        let b = maximize_corners_then_sweep(
            &*expectation,
            &bounds,
            config.sweep_grid,
            config.sigma.refine,
            config.sigma.argument_tol,
        );
        (b.value, b.arg)
    } else {
        let line = |s: f64| expectation(&vec![s; n]);
        let b = maximize_on_interval(
            &line,
            band.lo(),
            band.hi(),
            config.sigma.grid,
            config.sigma.refine,
            config.sigma.argument_tol,
        );
        (b.value, vec![b.arg; n])
    };
    if !best.0.is_finite() {
        return Err(Error::NumericDomain("non-finite CLT expectation".into()));
    }
    Ok(CltValue {
        value: best.0,
        argmax: best.1,
    })
}

/// `u(1, 0)` of the G-heat equation started from `φ`.
pub fn pde_reference(phi: &TestFunction, band: VarianceBand, config: &CltConfig) -> Result<f64> {
    let pde = PdeConfig::with_defaults(band, 1.0, config.pde_cells_per_side, config.cfl_safety)?;
    let slice = solve_gheat(phi, &pde)?;
    Ok(slice.values()[config.pde_cells_per_side])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CltErrorRow {
    pub n: usize,
    pub dp_value: f64,
    pub pde_value: f64,
    pub abs_error: f64,
}

/// `|φ_{n,n}(0) − u(1, 0)|` for each `n`.
pub fn gnormal_clt_check(
    phi: &TestFunction,
    band: VarianceBand,
    n_list: &[usize],
    config: &CltConfig,
) -> Result<Vec<CltErrorRow>> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::invalid("n_list must be a nonempty list of positive integers"));
    }
    let pde_value = pde_reference(phi, band, config)?;
    n_list
        .iter()
        .map(|&n| {
            let schedule = IterationSchedule {
                sigma_set: config.dp_sigma_set,
                grid: config.dp_grid,
                ..IterationSchedule::new(n)
            };
            let dp_value = gnormal_expectation_iterative(phi, band, &schedule)?.value;
            Ok(CltErrorRow {
                n,
                dp_value,
                pde_value,
                abs_error: (dp_value - pde_value).abs(),
            })
        })
        .collect()
}

/// True when each error is at most `(1 + slack)` times its predecessor.
pub fn errors_nonincreasing(rows: &[CltErrorRow], slack: f64) -> bool {
    rows.windows(2).all(|w| w[1].abs_error <= w[0].abs_error * (1.0 + slack))
}

/// `Ê[(n^{−1/2} ΣWᵢ)³]` under semi-sequential and sequential independence.
pub fn third_moment_emergence(band: VarianceBand, n: usize, config: &JointConfig) -> Result<(f64, f64)> {
    let cube = TestFunction::power(3);
    let semi = normalized_sum_expectation(&cube, band, n, IndependenceMode::SemiSequential, config)?.value;
    let seq = normalized_sum_expectation(&cube, band, n, IndependenceMode::Sequential, config)?.value;
    Ok((semi, seq))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxMeanReport {
    pub block_sigmas: Vec<f64>,
    pub block_means: Vec<f64>,
    pub block_std_errors: Vec<f64>,
    /// Largest block mean.
    pub estimate: f64,
    /// Standard error of the block attaining the maximum.
    pub std_error: f64,
    pub argmax_block: usize,
    pub semi_value: f64,
    pub gnormal_value: f64,
}

impl MaxMeanReport {
    pub fn distance_to_semi_in_se(&self) -> f64 {
        (self.estimate - self.semi_value).abs() / self.std_error
    }

    pub fn distance_to_gnormal_in_se(&self) -> f64 {
        (self.estimate - self.gnormal_value).abs() / self.std_error
    }
}

/// Blocked max-mean estimation: `m` blocks with fixed `σⱼ` on an equispaced
/// grid of the band, `samples` draws of `φ(σⱼε)` each, and the maximum of the
/// block means.
pub fn max_mean_demo(
    phi: &TestFunction,
    band: VarianceBand,
    blocks: usize,
    samples: usize,
    rng: &RngStream,
    config: &CltConfig,
) -> Result<MaxMeanReport> {
    if phi.arity() != 1 {
        return Err(Error::invalid("max-mean estimation needs a scalar test function"));
    }
    if blocks == 0 || samples < 2 {
        return Err(Error::invalid("need at least one block and two samples per block"));
    }
    let block_sigmas = linspace(band.lo(), band.hi(), blocks);
    let stats: Vec<(f64, f64)> = block_sigmas
        .par_iter()
        .enumerate()
        .map(|(j, &sigma)| {
            let mut stream = rng.fork(j as u64);
            let draws: Vec<f64> = (0..samples).map(|_| phi.eval_scalar(sigma * stream.normal())).collect();
            mean_and_se(&draws)
        })
        .collect();
    let (block_means, block_std_errors): (Vec<f64>, Vec<f64>) = stats.into_iter().unzip();
    let argmax_block = block_means
        .iter()
        .enumerate()
        .fold(0, |best, (j, &m)| if m > block_means[best] { j } else { best });
    let rule = gauss_hermite(config.hermite_order)?;
    let semi_value = upper_expectation(&SemiGNormal::new(band), phi, &rule, &config.sigma)?.value;
    let gnormal_value = pde_reference(phi, band, config)?;
    Ok(MaxMeanReport {
        estimate: block_means[argmax_block],
        std_error: block_std_errors[argmax_block],
        argmax_block,
        block_sigmas,
        block_means,
        block_std_errors,
        semi_value,
        gnormal_value,
    })
}

/// One CSV row: experiment, parameters, value, reference, abs_error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub parameters: String,
    pub value: f64,
    pub reference: f64,
    pub abs_error: f64,
}

impl ExperimentRow {
    pub fn new(experiment: &str, parameters: String, value: f64, reference: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            parameters,
            value,
            reference,
            abs_error: (value - reference).abs(),
        }
    }
}

pub fn write_rows_csv(rows: &[ExperimentRow], mut out: impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "experiment,parameters,value,reference,abs_error")?;
    for r in rows {
        writeln!(
            out,
            "{},\"{}\",{},{},{}",
            r.experiment,
            r.parameters.replace('"', "'"),
            r.value,
            r.reference,
            r.abs_error
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn b12() -> VarianceBand {
        VarianceBand::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn noise_laws_are_standardized() {
        for law in [NoiseLaw::StandardNormal, NoiseLaw::Rademacher, NoiseLaw::UniformStandardized] {
            assert_eq!(law.mean(), 0.0);
            assert!((law.variance() - 1.0).abs() < 1e-15);
            assert_eq!(law.to_string().parse::<NoiseLaw>().unwrap(), law);
        }
    }

    #[test]
    fn normal_noise_is_exact_for_every_n() {
        let cfg = CltConfig::default();
        for n in [1, 3, 50] {
            let v = semi_g_clt_lhs(&TestFunction::call(0.0), b12(), n, NoiseLaw::StandardNormal, true, &cfg).unwrap();
            assert!((v.value - 2.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn rademacher_convex_corner() {
        let cfg = CltConfig::default();
        let v = semi_g_clt_lhs(&TestFunction::power(2), b12(), 2, NoiseLaw::Rademacher, true, &cfg).unwrap();
        assert!((v.value - 4.0).abs() < 1e-12);
        assert_eq!(v.argmax, vec![2.0, 2.0]);
    }

    /// Dense σ-grid maximum with the Rademacher expectation enumerated directly.
    fn rademacher_dense_max(phi: &TestFunction, band: VarianceBand, n: usize, m: usize) -> f64 {
        let grid: Vec<f64> = (0..m)
            .map(|i| band.lo() + (band.hi() - band.lo()) * i as f64 / (m - 1) as f64)
            .collect();
        let mut best = f64::NEG_INFINITY;
        for code in 0..m.pow(n as u32) {
            let sigma: Vec<f64> = (0..n).map(|k| grid[code / m.pow(k as u32) % m]).collect();
            let mut total = 0.0;
            for signs in 0..1usize << n {
                let s: f64 = (0..n)
                    .map(|k| if signs >> k & 1 == 1 { sigma[k] } else { -sigma[k] })
                    .sum();
                total += phi.eval_scalar(s / (n as f64).sqrt());
            }
            best = best.max(total / (1usize << n) as f64);
        }
        best
    }

    #[test]
    fn corner_search_matches_a_dense_grid_for_nonconvex_phi() {
        let cfg = CltConfig::default();
        let band = VarianceBand::new(0.5, 1.5).unwrap();
        for phi in [
            TestFunction::polynomial(vec![0.0, 0.0, -2.0, 0.0, 1.0]).unwrap(),
            TestFunction::indicator_abs_above(1.0, 0.1).unwrap(),
            TestFunction::put(0.4),
        ] {
            let corner = semi_g_clt_lhs(&phi, band, 3, NoiseLaw::Rademacher, true, &cfg).unwrap().value;
            let dense = rademacher_dense_max(&phi, band, 3, 41);
            assert!(corner >= dense - 1e-12, "{corner} < {dense}");
            assert!(corner - dense < 1e-3, "{corner} vs {dense}");
        }
    }

    #[test]
    fn uniform_noise_square() {
        let cfg = CltConfig::default();
        let v = semi_g_clt_lhs(&TestFunction::power(2), b12(), 3, NoiseLaw::UniformStandardized, true, &cfg).unwrap();
        assert!((v.value - 4.0).abs() < 1e-12);
        assert!(semi_g_clt_lhs(&TestFunction::power(2), b12(), 4, NoiseLaw::UniformStandardized, true, &cfg).is_err());
    }

    #[test]
    fn emergence_pair_for_two_variables() {
        let (semi, seq) = third_moment_emergence(b12(), 2, &JointConfig::default()).unwrap();
        assert_eq!(semi, 0.0);
        let want = 2f64.powf(-1.5) * 18.0 / (2.0 * PI).sqrt();
        assert!((seq - want).abs() < 1e-9, "{seq} vs {want}");
        let (a, b) = third_moment_emergence(VarianceBand::degenerate(1.0).unwrap(), 2, &JointConfig::default()).unwrap();
        assert_eq!(a, 0.0);
        assert!(b.abs() < 1e-12);
    }

    #[test]
    fn csv_rows() {
        let rows = vec![ExperimentRow::new("x", "n=2".into(), 1.5, 1.0)];
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "experiment,parameters,value,reference,abs_error\nx,\"n=2\",1.5,1,0.5\n"
        );
    }
}

//! Semi-G-normal distributions `W = Vε` with `V ~ M[σ̲, σ̄]` and `ε ~ N(0, 1)`.
//!
//! `Ê[φ(W)] = max_{σ ∈ [σ̲,σ̄]} E[φ(σε)]`, with the convex (concave) case
//! collapsing to `σ̄` (`σ̲`). Also covariance bounds of diagonal band sets under
//! linear maps and closed-form moments of sums of two sequentially independent
//! copies.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::McEstimate;
use crate::error::{Error, Result};
use crate::kernel::{
    abs_moment, binomial, double_factorial, mean_and_se, normal_expectation, raw_moment, QuadratureRule, RngStream,
};
use crate::maximal::VarianceBand;
use crate::search::maximize_on_interval;
use crate::test_functions::{Convexity, TestFunction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiGNormal {
    pub band: VarianceBand,
}

impl SemiGNormal {
    pub fn new(band: VarianceBand) -> Self {
        Self { band }
    }
}

/// How the σ interval is searched.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaSearch {
    pub grid: usize,
    pub refine: bool,
    pub argument_tol: f64,
    /// Use the convex/concave endpoint shortcut when the tag allows it.
    pub shortcut: bool,
}

impl Default for SigmaSearch {
    fn default() -> Self {
        Self {
            grid: 65,
            refine: true,
            argument_tol: 1e-10,
            shortcut: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SigmaExtremum {
    pub value: f64,
    pub argmax_sigma: f64,
}

/// Maximizes `σ ↦ g(σ)` over the band with the given search settings.
pub(crate) fn maximize_over_band(
    g: &(impl Fn(f64) -> f64 + Sync),
    band: VarianceBand,
    search: &SigmaSearch,
) -> Result<SigmaExtremum> {
    let best = maximize_on_interval(g, band.lo(), band.hi(), search.grid, search.refine, search.argument_tol);
    if best.value.is_finite() {
        Ok(SigmaExtremum {
            value: best.value,
            argmax_sigma: best.arg,
        })
    } else {
        Err(Error::NumericDomain(format!(
            "non-finite expectation while searching sigma in {band}"
        )))
    }
}

/// `Ê[φ(W)]` and a maximizing σ.
pub fn upper_expectation(
    w: &SemiGNormal,
    phi: &TestFunction,
    rule: &QuadratureRule,
    search: &SigmaSearch,
) -> Result<SigmaExtremum> {
    if phi.arity() != 1 {
        return Err(Error::invalid("semi-G-normal expectations need a scalar test function"));
    }
    let band = w.band;
    if search.shortcut {
        let endpoint = match phi.convexity() {
            Convexity::Convex => Some(band.hi()),
            Convexity::Concave => Some(band.lo()),
            _ => None,
        };
        if let Some(sigma) = endpoint {
            return Ok(SigmaExtremum {
                value: normal_expectation(phi, 0.0, sigma, rule)?,
                argmax_sigma: sigma,
            });
        }
    }
    normal_expectation(phi, 0.0, band.lo(), rule)?;
    let g = |s: f64| normal_expectation(phi, 0.0, s, rule).unwrap_or(f64::NAN);
    maximize_over_band(&g, band, search)
}

/// `-Ê[-φ(W)]` and a minimizing σ.
pub fn lower_expectation(
    w: &SemiGNormal,
    phi: &TestFunction,
    rule: &QuadratureRule,
    search: &SigmaSearch,
) -> Result<SigmaExtremum> {
    let up = upper_expectation(w, &phi.negated(), rule, search)?;
    Ok(SigmaExtremum {
        value: -up.value,
        argmax_sigma: up.argmax_sigma,
    })
}

/// Upper and lower mean of `εV` when the maximal factor comes second:
/// `Ê[εV] = ½(σ̄ − σ̲) E|ε|`.
pub fn reversed_product_mean(band: VarianceBand) -> (f64, f64) {
    let upper = 0.5 * (band.hi() - band.lo()) * abs_moment(1);
    (upper, -upper)
}

/// Monte Carlo estimate of `Ê[εV] = E[max(σ̲ε, σ̄ε)]` from `samples` draws of `ε`.
pub fn reversed_product_mc(band: VarianceBand, samples: usize, rng: &RngStream) -> Result<McEstimate> {
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    const CHUNK: usize = 65_536;
    let chunks = samples.div_ceil(CHUNK);
    let draws: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut stream = rng.fork(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            (0..count)
                .map(|_| {
                    let e = stream.normal();
                    (band.lo() * e).max(band.hi() * e)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (mean, std_error) = mean_and_se(&draws);
    Ok(McEstimate {
        mean,
        std_error,
        samples,
    })
}

/// Diagonal covariance uncertainty `{diag(σ₁², …, σ_d²)}`, optionally mapped
/// through `A` to `{A Σ Aᵀ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalBandSet {
    bands: Vec<VarianceBand>,
    transform: Option<Vec<Vec<f64>>>,
}

impl DiagonalBandSet {
    pub fn new(bands: Vec<VarianceBand>, transform: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::invalid("band set needs at least one band"));
        }
        if let Some(a) = &transform {
            if a.is_empty() || a.len() > bands.len() {
                return Err(Error::invalid(format!(
                    "transform must have between 1 and {} rows, got {}",
                    bands.len(),
                    a.len()
                )));
            }
            if a.iter().any(|row| row.len() != bands.len()) {
                return Err(Error::invalid(format!(
                    "every transform row needs {} entries",
                    bands.len()
                )));
            }
        }
        Ok(Self { bands, transform })
    }

    pub fn bands(&self) -> &[VarianceBand] {
        &self.bands
    }

    pub fn transform(&self) -> Option<&[Vec<f64>]> {
        self.transform.as_deref()
    }

    /// Dimension after the optional transform.
    pub fn dim(&self) -> usize {
        self.transform.as_ref().map_or(self.bands.len(), Vec::len)
    }

    fn coefficient(&self, i: usize, j: usize, k: usize) -> f64 {
        match &self.transform {
            Some(a) => a[i][k] * a[j][k],
            None => {
                if i == k && j == k {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `[min, max]` of `Σ'ᵢⱼ = Σₖ AᵢₖAⱼₖσₖ²` over the set (indices are 0-based).
///
/// The entry is separable in the `σₖ²`, so each term is minimized and
/// maximized on its own band endpoint.
pub fn covariance_bounds(set: &DiagonalBandSet, i: usize, j: usize) -> Result<(f64, f64)> {
    let d = set.dim();
    if i >= d || j >= d {
        return Err(Error::invalid(format!(
            "covariance index ({i}, {j}) out of range for dimension {d}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (k, band) in set.bands.iter().enumerate() {
        let c = set.coefficient(i, j, k);
        let a = c * band.lo() * band.lo();
        let b = c * band.hi() * band.hi();
        lo += a.min(b);
        hi += a.max(b);
    }
    Ok((lo, hi))
}

/// `Ê[(W₁ + W₂)ⁿ] = (n−1)!! σ̄ⁿ 2^{n/2}` for even `n` and sequentially independent copies.
pub fn moment_oracle_even(band: VarianceBand, n: u32) -> Result<f64> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::invalid(format!("even moment needs an even n >= 2, got {n}")));
    }
    Ok(double_factorial(n - 1) as f64 * band.hi().powi(n as i32) * 2f64.powi(n as i32 / 2))
}

/// `Ê[(W₁ + W₂)ⁿ]` for odd `n ≥ 3` and `W₁` followed by `W₂` in sequential order.
///
/// `√(2/π) Σₖ Cₖ σ̄^{2k+1} 2^{k−1} k!` with
/// `Cₖ = C(n, 2k+1) E[ε^{n−2k−1}] (σ̄^{n−2k−1} − σ̲^{n−2k−1})`.
pub fn moment_oracle_odd(band: VarianceBand, n: u32) -> Result<f64> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::invalid(format!("odd moment needs an odd n >= 3, got {n}")));
    }
    let (lo, hi) = (band.lo(), band.hi());
    let mut total = 0.0;
    let mut k_fact = 1.0;
    for k in 0..=(n - 3) / 2 {
        if k > 0 {
            k_fact *= k as f64;
        }
        let e = (n - 2 * k - 1) as i32;
        let c_k = binomial(n, 2 * k + 1) * raw_moment(e as u32) * (hi.powi(e) - lo.powi(e));
        total += c_k * hi.powi(2 * k as i32 + 1) * 2f64.powi(k as i32 - 1) * k_fact;
    }
    Ok((2.0 / PI).sqrt() * total)
}

/// `Ê[W₁W₂²] = (σ̄² − σ̲²) σ̄ / √(2π)` when `W₁` comes first.
pub fn product_moment_oracle(band: VarianceBand) -> f64 {
    let (lo, hi) = (band.lo(), band.hi());
    (hi * hi - lo * lo) * hi / (2.0 * PI).sqrt()
}

/// `Ê[W₁²W₂]`, which has no mean uncertainty.
pub fn mirrored_product_moment_oracle(_band: VarianceBand) -> f64 {
    0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::std_normal_pdf;

    fn w12() -> SemiGNormal {
        SemiGNormal::new(VarianceBand::new(1.0, 2.0).unwrap())
    }

    #[test]
    fn convex_and_concave_shortcuts() {
        let rule = QuadratureRule::default();
        let s = SigmaSearch::default();
        let up = upper_expectation(&w12(), &TestFunction::power(2), &rule, &s).unwrap();
        assert!((up.value - 4.0).abs() < 1e-13);
        let down = upper_expectation(&w12(), &TestFunction::power(2).negated(), &rule, &s).unwrap();
        assert!((down.value + 1.0).abs() < 1e-13);
        let call = upper_expectation(&w12(), &TestFunction::call(0.0), &rule, &s).unwrap();
        assert!((call.value - 2.0 * std_normal_pdf(0.0)).abs() < 1e-12);
    }

    #[test]
    fn shortcut_agrees_with_search() {
        let rule = QuadratureRule::default();
        let full = SigmaSearch {
            shortcut: false,
            ..SigmaSearch::default()
        };
        for phi in [TestFunction::power(2), TestFunction::call(0.7), TestFunction::put(-0.2).negated()] {
            let a = upper_expectation(&w12(), &phi, &rule, &SigmaSearch::default()).unwrap();
            let b = upper_expectation(&w12(), &phi, &rule, &full).unwrap();
            assert!((a.value - b.value).abs() < 1e-10, "{phi:?}");
        }
    }

    #[test]
    fn reversed_product() {
        let (u, l) = reversed_product_mean(VarianceBand::new(1.0, 2.0).unwrap());
        assert!((u - 0.5 * (2.0 / PI).sqrt()).abs() < 1e-15);
        assert_eq!(l, -u);
        assert_eq!(reversed_product_mean(VarianceBand::degenerate(1.3).unwrap()), (0.0, -0.0));
    }

    #[test]
    fn reversed_product_by_simulation() {
        let b = VarianceBand::new(1.0, 2.0).unwrap();
        let mc = reversed_product_mc(b, 200_000, &RngStream::new(3, 0)).unwrap();
        assert!((mc.mean - reversed_product_mean(b).0).abs() < 4.0 * mc.std_error);
    }

    #[test]
    fn covariance_examples() {
        let b = VarianceBand::new(1.0, 2.0).unwrap();
        let plain = DiagonalBandSet::new(vec![b, b], None).unwrap();
        assert_eq!(covariance_bounds(&plain, 0, 0).unwrap(), (1.0, 4.0));
        assert_eq!(covariance_bounds(&plain, 0, 1).unwrap(), (0.0, 0.0));
        let rotated = DiagonalBandSet::new(vec![b, b], Some(vec![vec![1.0, 1.0], vec![1.0, -1.0]])).unwrap();
        assert_eq!(covariance_bounds(&rotated, 0, 1).unwrap(), (-3.0, 3.0));
        assert!(covariance_bounds(&rotated, 2, 0).is_err());
        assert!(DiagonalBandSet::new(vec![b], Some(vec![vec![1.0], vec![1.0]])).is_err());
    }

    #[test]
    fn moment_oracles() {
        let b = VarianceBand::new(1.0, 2.0).unwrap();
        assert_eq!(moment_oracle_even(b, 2).unwrap(), 8.0);
        assert_eq!(moment_oracle_even(b, 4).unwrap(), 192.0);
        let s = VarianceBand::degenerate(1.5).unwrap();
        assert!((moment_oracle_even(s, 2).unwrap() - 2.0 * 2.25).abs() < 1e-14);
        assert!((moment_oracle_odd(b, 3).unwrap() - 18.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
        assert_eq!(moment_oracle_odd(s, 3).unwrap(), 0.0);
        assert!(moment_oracle_odd(b, 4).is_err());
        assert!(moment_oracle_even(b, 3).is_err());
        assert!((product_moment_oracle(b) - 6.0 / (2.0 * PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn odd_fifth_moment_by_hand() {
        // Inner maximization gives 1{w≥0}(10(σ̄²−σ̲²)w³ + 15(σ̄⁴−σ̲⁴)w); outer σ̄.
        let b = VarianceBand::new(1.0, 2.0).unwrap();
        let half = |p: u32| 0.5 * abs_moment(p);
        let want = 10.0 * 3.0 * 8.0 * half(3) + 15.0 * 15.0 * 2.0 * half(1);
        assert!((moment_oracle_odd(b, 5).unwrap() - want).abs() < 1e-10);
    }
}

//! Maximal distributions on intervals and coordinate rectangles.
//!
//! For `V ~ M[a, b]` the sublinear expectation is the deterministic maximum
//! `Ê[φ(V)] = max_{v ∈ [a,b]} φ(v)`; the rectangle case is the joint maximum.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{maximize_on_box, BoxMax};
use crate::test_functions::TestFunction;

/// Standard-deviation uncertainty `[σ̲, σ̄]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBand", into = "RawBand")]
pub struct VarianceBand {
    sigma_lo: f64,
    sigma_hi: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBand {
    sigma_lo: f64,
    sigma_hi: f64,
}

impl TryFrom<RawBand> for VarianceBand {
    type Error = Error;
    fn try_from(raw: RawBand) -> Result<Self> {
        VarianceBand::new(raw.sigma_lo, raw.sigma_hi)
    }
}

impl From<VarianceBand> for RawBand {
    fn from(b: VarianceBand) -> Self {
        RawBand {
            sigma_lo: b.sigma_lo,
            sigma_hi: b.sigma_hi,
        }
    }
}

impl VarianceBand {
    pub fn new(sigma_lo: f64, sigma_hi: f64) -> Result<Self> {
        if !(sigma_lo.is_finite() && sigma_hi.is_finite()) || sigma_lo < 0.0 || sigma_lo > sigma_hi {
            return Err(Error::invalid(format!(
                "band needs 0 <= sigma_lo <= sigma_hi, got [{sigma_lo}, {sigma_hi}]"
            )));
        }
        Ok(Self { sigma_lo, sigma_hi })
    }

    pub fn degenerate(sigma: f64) -> Result<Self> {
        Self::new(sigma, sigma)
    }

    pub fn lo(&self) -> f64 {
        self.sigma_lo
    }

    pub fn hi(&self) -> f64 {
        self.sigma_hi
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_lo == self.sigma_hi
    }

    pub fn contains(&self, sigma: f64) -> bool {
        sigma >= self.sigma_lo && sigma <= self.sigma_hi
    }

    pub fn endpoints(&self) -> [f64; 2] {
        [self.sigma_lo, self.sigma_hi]
    }
}

impl fmt::Display for VarianceBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.sigma_lo, self.sigma_hi)
    }
}

/// Parses `"lo,hi"`.
impl FromStr for VarianceBand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(',')
            .ok_or_else(|| Error::invalid(format!("band must look like 'lo,hi', got '{s}'")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad band endpoint '{t}'")))
        };
        Self::new(parse(lo)?, parse(hi)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// A maximal distribution supported on a coordinate rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalDist {
    support: Vec<Interval>,
}

impl MaximalDist {
    pub fn rectangle(support: Vec<(f64, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid("maximal distribution needs at least one coordinate"));
        }
        for &(lo, hi) in &support {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!("empty or non-finite interval [{lo}, {hi}]")));
            }
        }
        Ok(Self {
            support: support.into_iter().map(|(lo, hi)| Interval { lo, hi }).collect(),
        })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::rectangle(vec![(lo, hi)])
    }

    pub fn from_band(band: VarianceBand) -> Self {
        Self {
            support: vec![Interval {
                lo: band.lo(),
                hi: band.hi(),
            }],
        }
    }

    pub fn support(&self) -> &[Interval] {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.support.iter().map(|i| (i.lo, i.hi)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalOptions {
    pub grid_per_dim: usize,
    pub refine: bool,
    pub argument_tol: f64,
}

impl Default for MaximalOptions {
    fn default() -> Self {
        Self {
            grid_per_dim: 129,
            refine: true,
            argument_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub argmax: Vec<f64>,
}

fn check(dist: &MaximalDist, phi: &TestFunction, opts: &MaximalOptions) -> Result<()> {
    if phi.arity() != dist.dim() {
        return Err(Error::invalid(format!(
            "test function arity {} does not match distribution dimension {}",
            phi.arity(),
            dist.dim()
        )));
    }
    if opts.grid_per_dim < 2 {
        return Err(Error::invalid("grid_per_dim must be at least 2"));
    }
    Ok(())
}

fn scan(dist: &MaximalDist, f: &(impl Fn(&[f64]) -> f64 + Sync), opts: &MaximalOptions) -> Result<BoxMax> {
    let best = maximize_on_box(f, &dist.bounds(), opts.grid_per_dim, opts.refine, opts.argument_tol);
    if best.value.is_finite() {
        Ok(best)
    } else {
        Err(Error::NumericDomain(format!("non-finite maximum at {:?}", best.arg)))
    }
}

/// `Ê[φ(V)] = max φ` over the support rectangle, with a maximizer.
pub fn maximal_expectation(dist: &MaximalDist, phi: &TestFunction, opts: &MaximalOptions) -> Result<Extremum> {
    check(dist, phi, opts)?;
    let best = scan(dist, &|x: &[f64]| phi.eval_unchecked(x), opts)?;
    Ok(Extremum {
        value: best.value,
        argmax: best.arg,
    })
}

/// `-Ê[-φ(V)] = min φ` over the support rectangle; `argmax` holds the minimizer.
pub fn lower_expectation(dist: &MaximalDist, phi: &TestFunction, opts: &MaximalOptions) -> Result<Extremum> {
    let upper = maximal_expectation(dist, &phi.negated(), opts)?;
    Ok(Extremum {
        value: -upper.value,
        argmax: upper.argmax,
    })
}

/// The image `ψ(V)` of a maximal distribution, again maximal on `[min ψ, max ψ]`.
pub fn pushforward(dist: &MaximalDist, psi: &TestFunction, opts: &MaximalOptions) -> Result<MaximalDist> {
    let hi = maximal_expectation(dist, psi, opts)?.value;
    let lo = lower_expectation(dist, psi, opts)?.value;
    MaximalDist::interval(lo, hi.max(lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_functions::{FunctionKind, Monomial};

    fn band12() -> MaximalDist {
        MaximalDist::interval(1.0, 2.0).unwrap()
    }

    #[test]
    fn monotone_examples() {
        let o = MaximalOptions::default();
        let e = maximal_expectation(&band12(), &TestFunction::power(1), &o).unwrap();
        assert_eq!((e.value, e.argmax[0]), (2.0, 2.0));
        let e = maximal_expectation(&band12(), &TestFunction::power(3), &o).unwrap();
        assert_eq!(e.value, 8.0);
        assert_eq!(lower_expectation(&band12(), &TestFunction::power(2), &o).unwrap().value, 1.0);
    }

    #[test]
    fn lower_expectation_interior() {
        let o = MaximalOptions::default();
        let phi = TestFunction::polynomial(vec![0.25, -1.0, 1.0]).unwrap();
        let d = MaximalDist::interval(0.0, 1.0).unwrap();
        let e = lower_expectation(&d, &phi, &o).unwrap();
        assert!(e.value.abs() < 1e-15);
        assert!((e.argmax[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn interior_rectangle_maximum() {
        let terms = vec![
            Monomial { coefficient: -1.0, exponents: vec![2, 0] },
            Monomial { coefficient: 3.0, exponents: vec![1, 0] },
            Monomial { coefficient: -2.25, exponents: vec![0, 0] },
            Monomial { coefficient: -1.0, exponents: vec![0, 2] },
            Monomial { coefficient: 2.6, exponents: vec![0, 1] },
            Monomial { coefficient: -1.69, exponents: vec![0, 0] },
        ];
        let phi = TestFunction::new(FunctionKind::PolynomialNd { terms }).unwrap();
        let d = MaximalDist::rectangle(vec![(1.0, 2.0), (1.0, 2.0)]).unwrap();
        let e = maximal_expectation(&d, &phi, &MaximalOptions::default()).unwrap();
        assert!(e.value.abs() < 1e-8);
        assert!((e.argmax[0] - 1.5).abs() < 1e-4 && (e.argmax[1] - 1.3).abs() < 1e-4);
    }

    #[test]
    fn pushforward_examples() {
        let o = MaximalOptions::default();
        let sq = TestFunction::power(2);
        let img = pushforward(&band12(), &sq, &o).unwrap();
        assert_eq!(img.support()[0], Interval { lo: 1.0, hi: 4.0 });
        let img = pushforward(&MaximalDist::interval(-1.0, 1.0).unwrap(), &sq, &o).unwrap();
        assert_eq!(img.support()[0], Interval { lo: 0.0, hi: 1.0 });
        let norm = TestFunction::new(FunctionKind::EuclideanNorm { dim: 2 }).unwrap();
        let d = MaximalDist::rectangle(vec![(1.0, 2.0), (1.0, 2.0)]).unwrap();
        let img = pushforward(&d, &norm, &o).unwrap();
        assert!((img.support()[0].lo - 2f64.sqrt()).abs() < 1e-15);
        assert!((img.support()[0].hi - 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_band_is_exact() {
        let d = MaximalDist::interval(1.7, 1.7).unwrap();
        let phi = TestFunction::call(0.3);
        let e = maximal_expectation(&d, &phi, &MaximalOptions::default()).unwrap();
        assert_eq!(e.value, phi.eval_scalar(1.7));
    }

    #[test]
    fn arity_mismatch() {
        let d = MaximalDist::rectangle(vec![(1.0, 2.0), (1.0, 2.0)]).unwrap();
        assert!(maximal_expectation(&d, &TestFunction::power(2), &MaximalOptions::default()).is_err());
    }

    #[test]
    fn band_parsing_and_validation() {
        let b: VarianceBand = "0.5, 1".parse().unwrap();
        assert_eq!((b.lo(), b.hi()), (0.5, 1.0));
        assert!(VarianceBand::new(2.0, 1.0).is_err());
        assert!(VarianceBand::new(-1.0, 1.0).is_err());
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(serde_json::from_str::<VarianceBand>(&json).unwrap(), b);
        assert!(serde_json::from_str::<VarianceBand>(r#"{"sigma_lo":2,"sigma_hi":1}"#).is_err());
    }
}

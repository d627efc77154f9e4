//! Closed vocabulary of test functions with convexity and growth metadata.
//!
//! Wire format (JSON):
//! `{"variant": "CallPayoff", "params": {"strike": 1.0}, "convexity": "Convex", "growth_order": 1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convexity {
    Convex,
    Concave,
    Neither,
    Unknown,
}

impl Convexity {
    pub fn flipped(self) -> Self {
        match self {
            Convexity::Convex => Convexity::Concave,
            Convexity::Concave => Convexity::Convex,
            other => other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coefficient: f64,
    pub exponents: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "params")]
pub enum FunctionKind {
    /// `Σ cₖ xᵏ`.
    Polynomial { coefficients: Vec<f64> },
    /// `c Π xᵢ^{pᵢ}`.
    MonomialProduct { exponents: Vec<u32>, scale: f64 },
    /// `(Σ aᵢ xᵢ)ⁿ`.
    PowerOfWeightedSum { weights: Vec<f64>, exponent: u32 },
    CallPayoff { strike: f64 },
    PutPayoff { strike: f64 },
    /// `|x|ᵖ`.
    AbsPower { p: f64 },
    /// Piecewise-linear ramp: 0 below `threshold - width`, 1 above `threshold`.
    SmoothedIndicatorAbove { threshold: f64, width: f64 },
    /// The ramp of [`FunctionKind::SmoothedIndicatorAbove`] applied to `|x|`.
    SmoothedIndicatorAbsAbove { threshold: f64, width: f64 },
    /// Sum of multivariate monomials.
    PolynomialNd { terms: Vec<Monomial> },
    /// `sqrt(Σ xᵢ²)`.
    EuclideanNorm { dim: usize },
    /// `factor * inner(x)`.
    Scaled { factor: f64, inner: Box<FunctionKind> },
}

impl FunctionKind {
    pub fn arity(&self) -> usize {
        match self {
            FunctionKind::Polynomial { .. }
            | FunctionKind::CallPayoff { .. }
            | FunctionKind::PutPayoff { .. }
            | FunctionKind::AbsPower { .. }
            | FunctionKind::SmoothedIndicatorAbove { .. }
            | FunctionKind::SmoothedIndicatorAbsAbove { .. } => 1,
            FunctionKind::MonomialProduct { exponents, .. } => exponents.len(),
            FunctionKind::PowerOfWeightedSum { weights, .. } => weights.len(),
            FunctionKind::PolynomialNd { terms } => {
                terms.iter().map(|t| t.exponents.len()).max().unwrap_or(1)
            }
            FunctionKind::EuclideanNorm { dim } => *dim,
            FunctionKind::Scaled { inner, .. } => inner.arity(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            FunctionKind::Polynomial { coefficients } if coefficients.is_empty() => {
                Err(Error::invalid("polynomial needs at least one coefficient"))
            }
            FunctionKind::MonomialProduct { exponents, .. } if exponents.is_empty() => {
                Err(Error::invalid("monomial product needs at least one exponent"))
            }
            FunctionKind::PowerOfWeightedSum { weights, exponent } => {
                if weights.is_empty() || *exponent == 0 {
                    Err(Error::invalid("weighted-sum power needs weights and a positive exponent"))
                } else {
                    Ok(())
                }
            }
            FunctionKind::AbsPower { p } if !(*p > 0.0) => {
                Err(Error::invalid(format!("AbsPower exponent must be positive, got {p}")))
            }
            FunctionKind::SmoothedIndicatorAbove { width, .. }
            | FunctionKind::SmoothedIndicatorAbsAbove { width, .. }
                if !(*width > 0.0) =>
            {
                Err(Error::invalid(format!("indicator width must be positive, got {width}")))
            }
            FunctionKind::PolynomialNd { terms } => {
                let d = self.arity();
                if terms.iter().any(|t| t.exponents.len() != d) {
                    Err(Error::invalid("all PolynomialNd terms must share one arity"))
                } else {
                    Ok(())
                }
            }
            FunctionKind::EuclideanNorm { dim } if *dim == 0 => {
                Err(Error::invalid("EuclideanNorm dimension must be positive"))
            }
            FunctionKind::Scaled { inner, .. } => inner.validate(),
            _ => Ok(()),
        }
    }

    fn eval_scalar(&self, x: f64) -> f64 {
        match self {
            FunctionKind::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
            }
            FunctionKind::CallPayoff { strike } => (x - strike).max(0.0),
            FunctionKind::PutPayoff { strike } => (strike - x).max(0.0),
            FunctionKind::AbsPower { p } => x.abs().powf(*p),
            FunctionKind::SmoothedIndicatorAbove { threshold, width } => {
                ramp(x, *threshold, *width)
            }
            FunctionKind::SmoothedIndicatorAbsAbove { threshold, width } => {
                ramp(x.abs(), *threshold, *width)
            }
            FunctionKind::Scaled { factor, inner } => factor * inner.eval_scalar(x),
            other => other.eval_vec(&[x]),
        }
    }

    fn eval_vec(&self, x: &[f64]) -> f64 {
        match self {
            FunctionKind::MonomialProduct { exponents, scale } => {
                scale
                    * exponents
                        .iter()
                        .zip(x)
                        .map(|(&p, &xi)| xi.powi(p as i32))
                        .product::<f64>()
            }
            FunctionKind::PowerOfWeightedSum { weights, exponent } => {
                let s: f64 = weights.iter().zip(x).map(|(a, xi)| a * xi).sum();
                s.powi(*exponent as i32)
            }
            FunctionKind::PolynomialNd { terms } => terms
                .iter()
                .map(|t| {
                    t.coefficient
                        * t.exponents
                            .iter()
                            .zip(x)
                            .map(|(&p, &xi)| xi.powi(p as i32))
                            .product::<f64>()
                })
                .sum(),
            FunctionKind::EuclideanNorm { .. } => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            FunctionKind::Scaled { factor, inner } => factor * inner.eval_vec(x),
            scalar => scalar.eval_scalar(x[0]),
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            FunctionKind::CallPayoff { strike } | FunctionKind::PutPayoff { strike } => {
                vec![*strike]
            }
            FunctionKind::AbsPower { p } => {
                let even_int = p.fract() == 0.0 && (*p as u64) % 2 == 0;
                if even_int {
                    vec![]
                } else {
                    vec![0.0]
                }
            }
            FunctionKind::SmoothedIndicatorAbove { threshold, width } => {
                vec![threshold - width, *threshold]
            }
            FunctionKind::SmoothedIndicatorAbsAbove { threshold, width } => {
                let lo = threshold - width;
                let mut k = vec![-threshold, *threshold];
                if lo > 0.0 {
                    k.extend([-lo, lo]);
                } else {
                    k.push(0.0);
                }
                k
            }
            FunctionKind::Scaled { inner, .. } => inner.kinks(),
            _ => vec![],
        }
    }

    fn natural_growth(&self) -> u32 {
        match self {
            FunctionKind::Polynomial { coefficients } => {
                coefficients.iter().rposition(|&c| c != 0.0).unwrap_or(0) as u32
            }
            FunctionKind::MonomialProduct { exponents, .. } => exponents.iter().sum(),
            FunctionKind::PowerOfWeightedSum { exponent, .. } => *exponent,
            FunctionKind::CallPayoff { .. } | FunctionKind::PutPayoff { .. } => 1,
            FunctionKind::AbsPower { p } => p.ceil() as u32,
            FunctionKind::SmoothedIndicatorAbove { .. }
            | FunctionKind::SmoothedIndicatorAbsAbove { .. } => 0,
            FunctionKind::PolynomialNd { terms } => terms
                .iter()
                .map(|t| t.exponents.iter().sum::<u32>())
                .max()
                .unwrap_or(0),
            FunctionKind::EuclideanNorm { .. } => 1,
            FunctionKind::Scaled { inner, .. } => inner.natural_growth(),
        }
    }

    fn natural_convexity(&self) -> Convexity {
        match self {
            FunctionKind::Polynomial { coefficients } => match coefficients.len() {
                0..=2 => Convexity::Convex,
                3 if coefficients[2] >= 0.0 => Convexity::Convex,
                3 => Convexity::Concave,
                _ => Convexity::Unknown,
            },
            FunctionKind::PowerOfWeightedSum { exponent, .. } => {
                if *exponent == 1 || exponent % 2 == 0 {
                    Convexity::Convex
                } else {
                    Convexity::Neither
                }
            }
            FunctionKind::CallPayoff { .. }
            | FunctionKind::PutPayoff { .. }
            | FunctionKind::EuclideanNorm { .. } => Convexity::Convex,
            FunctionKind::AbsPower { p } if *p >= 1.0 => Convexity::Convex,
            FunctionKind::AbsPower { .. }
            | FunctionKind::SmoothedIndicatorAbove { .. }
            | FunctionKind::SmoothedIndicatorAbsAbove { .. } => Convexity::Neither,
            FunctionKind::Scaled { factor, inner } => {
                let c = inner.natural_convexity();
                if *factor >= 0.0 {
                    c
                } else {
                    c.flipped()
                }
            }
            _ => Convexity::Unknown,
        }
    }
}

fn ramp(x: f64, threshold: f64, width: f64) -> f64 {
    if x >= threshold {
        1.0
    } else {
        ((x - (threshold - width)) / width).clamp(0.0, 1.0)
    }
}

/// A test function together with its declared convexity and growth order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    #[serde(flatten)]
    kind: FunctionKind,
    convexity: Convexity,
    growth_order: u32,
}

impl TestFunction {
    /// Builds a test function with the metadata that is known for its shape.
    /// Polynomials of degree ≥ 3 come out `Unknown`; use [`Self::with_convexity`].
    pub fn new(kind: FunctionKind) -> Result<Self> {
        kind.validate()?;
        let convexity = kind.natural_convexity();
        let growth_order = kind.natural_growth();
        Ok(Self {
            kind,
            convexity,
            growth_order,
        })
    }

    /// Builds with explicit metadata. The growth order must dominate the
    /// polynomial degree of polynomial variants.
    pub fn with_metadata(kind: FunctionKind, convexity: Convexity, growth_order: u32) -> Result<Self> {
        kind.validate()?;
        if growth_order < kind.natural_growth() {
            return Err(Error::invalid(format!(
                "growth_order {growth_order} is below the degree {}",
                kind.natural_growth()
            )));
        }
        Ok(Self {
            kind,
            convexity,
            growth_order,
        })
    }

    pub fn with_convexity(mut self, convexity: Convexity) -> Self {
        self.convexity = convexity;
        self
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        Self::new(FunctionKind::Polynomial { coefficients })
    }

    /// `xᵏ`, tagged convex for even `k` and `k = 1`.
    pub fn power(k: u32) -> Self {
        let mut coefficients = vec![0.0; k as usize + 1];
        coefficients[k as usize] = 1.0;
        let convexity = if k <= 1 || k % 2 == 0 {
            Convexity::Convex
        } else {
            Convexity::Neither
        };
        Self {
            kind: FunctionKind::Polynomial { coefficients },
            convexity,
            growth_order: k,
        }
    }

    pub fn call(strike: f64) -> Self {
        Self::new(FunctionKind::CallPayoff { strike }).expect("valid")
    }

    pub fn put(strike: f64) -> Self {
        Self::new(FunctionKind::PutPayoff { strike }).expect("valid")
    }

    pub fn abs_power(p: f64) -> Result<Self> {
        Self::new(FunctionKind::AbsPower { p })
    }

    pub fn monomial(exponents: Vec<u32>, scale: f64) -> Result<Self> {
        let even = exponents.iter().all(|p| p % 2 == 0);
        let mut f = Self::new(FunctionKind::MonomialProduct { exponents, scale })?;
        if f.arity() == 1 && even {
            f.convexity = if scale >= 0.0 {
                Convexity::Convex
            } else {
                Convexity::Concave
            };
        }
        Ok(f)
    }

    pub fn power_of_sum(weights: Vec<f64>, exponent: u32) -> Result<Self> {
        Self::new(FunctionKind::PowerOfWeightedSum { weights, exponent })
    }

    pub fn indicator_above(threshold: f64, width: f64) -> Result<Self> {
        Self::new(FunctionKind::SmoothedIndicatorAbove { threshold, width })
    }

    pub fn indicator_abs_above(threshold: f64, width: f64) -> Result<Self> {
        Self::new(FunctionKind::SmoothedIndicatorAbsAbove { threshold, width })
    }

    /// `factor * self`, with convexity flipped for negative factors.
    pub fn scaled(&self, factor: f64) -> Self {
        let convexity = if factor >= 0.0 {
            self.convexity
        } else {
            self.convexity.flipped()
        };
        Self {
            kind: FunctionKind::Scaled {
                factor,
                inner: Box::new(self.kind.clone()),
            },
            convexity,
            growth_order: self.growth_order,
        }
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn kind(&self) -> &FunctionKind {
        &self.kind
    }

    pub fn convexity(&self) -> Convexity {
        self.convexity
    }

    pub fn growth_order(&self) -> u32 {
        self.growth_order
    }

    pub fn arity(&self) -> usize {
        self.kind.arity()
    }

    /// Kink locations of a scalar function (empty for smooth ones).
    pub fn kinks(&self) -> Vec<f64> {
        self.kind.kinks()
    }

    pub fn is_smooth(&self) -> bool {
        self.kinks().is_empty()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.arity() {
            return Err(Error::invalid(format!(
                "test function has arity {}, got a point of dimension {}",
                self.arity(),
                x.len()
            )));
        }
        let value = self.eval_unchecked(x);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NumericDomain(format!("non-finite value at {x:?}")))
        }
    }

    /// Scalar evaluation without arity checks (arity must be 1).
    #[inline]
    pub fn eval_scalar(&self, x: f64) -> f64 {
        self.kind.eval_scalar(x)
    }

    #[inline]
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        if x.len() == 1 {
            self.kind.eval_scalar(x[0])
        } else {
            self.kind.eval_vec(x)
        }
    }

    /// Swaps the first two arguments of a bivariate function.
    pub fn swapped(&self) -> Result<Self> {
        fn swap_kind(kind: &FunctionKind) -> Result<FunctionKind> {
            Ok(match kind {
                FunctionKind::MonomialProduct { exponents, scale } if exponents.len() == 2 => {
                    FunctionKind::MonomialProduct {
                        exponents: vec![exponents[1], exponents[0]],
                        scale: *scale,
                    }
                }
                FunctionKind::PowerOfWeightedSum { weights, exponent } if weights.len() == 2 => {
                    FunctionKind::PowerOfWeightedSum {
                        weights: vec![weights[1], weights[0]],
                        exponent: *exponent,
                    }
                }
                FunctionKind::PolynomialNd { terms } if kind.arity() == 2 => FunctionKind::PolynomialNd {
                    terms: terms
                        .iter()
                        .map(|t| Monomial {
                            coefficient: t.coefficient,
                            exponents: vec![t.exponents[1], t.exponents[0]],
                        })
                        .collect(),
                },
                FunctionKind::EuclideanNorm { dim: 2 } => kind.clone(),
                FunctionKind::Scaled { factor, inner } => FunctionKind::Scaled {
                    factor: *factor,
                    inner: Box::new(swap_kind(inner)?),
                },
                _ => return Err(Error::invalid("argument swap needs a bivariate function")),
            })
        }
        Ok(Self {
            kind: swap_kind(&self.kind)?,
            convexity: self.convexity,
            growth_order: self.growth_order,
        })
    }

    /// Weights and exponent when the function is `(Σ aᵢxᵢ)ⁿ`, possibly scaled.
    pub fn as_power_of_sum(&self) -> Option<(f64, &[f64], u32)> {
        match &self.kind {
            FunctionKind::PowerOfWeightedSum { weights, exponent } => Some((1.0, weights, *exponent)),
            FunctionKind::Scaled { factor, inner } => match inner.as_ref() {
                FunctionKind::PowerOfWeightedSum { weights, exponent } => {
                    Some((*factor, weights, *exponent))
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// Monomial terms when the function is a (sum of) monomial product(s).
    pub fn as_monomials(&self) -> Option<Vec<Monomial>> {
        fn terms(kind: &FunctionKind, factor: f64) -> Option<Vec<Monomial>> {
            match kind {
                FunctionKind::MonomialProduct { exponents, scale } => Some(vec![Monomial {
                    coefficient: factor * scale,
                    exponents: exponents.clone(),
                }]),
                FunctionKind::PolynomialNd { terms } => Some(
                    terms
                        .iter()
                        .map(|t| Monomial {
                            coefficient: factor * t.coefficient,
                            exponents: t.exponents.clone(),
                        })
                        .collect(),
                ),
                FunctionKind::Scaled { factor: f, inner } => terms(inner, factor * f),
                _ => None,
            }
        }
        terms(&self.kind, 1.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("test functions always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TestFunction = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("bad test function JSON: {e}")))?;
        f.kind.validate()?;
        Ok(f)
    }

    /// Parses the JSON wire format or one of the string shortcuts:
    /// `x`, `x3`, `-x2`, `call:K`, `put:K`, `abs:p`, `ind:t[,w]`, `absind:c[,w]`,
    /// `(x1+x2)^n`, `(x1-2*x2)^n`, `x1*x2^2`. A leading `-` negates any shortcut.
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim();
        if s.starts_with('{') {
            return Self::from_json(s);
        }
        if let Some(rest) = s.strip_prefix('-') {
            return Ok(Self::parse(rest)?.negated());
        }
        let bad = || Error::invalid(format!("unrecognized test function '{spec}'"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        if let Some((head, arg)) = s.split_once(':') {
            let mut parts = arg.split(',');
            let first = num(parts.next().ok_or_else(bad)?)?;
            let second = parts.next().map(num).transpose()?;
            return match head {
                "call" => Ok(Self::call(first)),
                "put" => Ok(Self::put(first)),
                "abs" => Self::abs_power(first),
                "ind" => Self::indicator_above(first, second.unwrap_or(default_width(first))),
                "absind" => Self::indicator_abs_above(first, second.unwrap_or(default_width(first))),
                _ => Err(bad()),
            };
        }
        if s == "x" {
            return Ok(Self::power(1));
        }
        if let Some(k) = s.strip_prefix('x') {
            if let Ok(k) = k.parse::<u32>() {
                return Ok(Self::power(k));
            }
        }
        if let Some(inner) = s.strip_prefix('(') {
            let (sum, exp) = inner.split_once(")^").ok_or_else(bad)?;
            let exponent: u32 = exp.trim().parse().map_err(|_| bad())?;
            let weights = parse_linear_form(sum).ok_or_else(bad)?;
            return Self::power_of_sum(weights, exponent);
        }
        if s.contains('x') {
            let mut exponents: Vec<u32> = Vec::new();
            for factor in s.split('*') {
                let factor = factor.trim();
                let body = factor.strip_prefix('x').ok_or_else(bad)?;
                let (idx, p) = match body.split_once('^') {
                    Some((i, p)) => (i, p.parse::<u32>().map_err(|_| bad())?),
                    None => (body, 1),
                };
                let idx: usize = idx.parse().map_err(|_| bad())?;
                if idx == 0 {
                    return Err(bad());
                }
                if exponents.len() < idx {
                    exponents.resize(idx, 0);
                }
                exponents[idx - 1] += p;
            }
            return Self::monomial(exponents, 1.0);
        }
        Err(bad())
    }
}

fn default_width(threshold: f64) -> f64 {
    let w = 0.01 * threshold.abs();
    if w > 0.0 {
        w
    } else {
        0.01
    }
}

/// Parses `x1+x2`, `2*x1-0.5*x3` into a dense weight vector.
fn parse_linear_form(text: &str) -> Option<Vec<f64>> {
    let mut weights: Vec<f64> = Vec::new();
    let normalized = text.replace('-', "+-");
    for term in normalized.split('+').map(str::trim).filter(|t| !t.is_empty()) {
        let (coef, var) = match term.split_once('*') {
            Some((c, v)) => (c.trim().parse::<f64>().ok()?, v.trim()),
            None => match term.strip_prefix('-') {
                Some(v) => (-1.0, v),
                None => (1.0, term),
            },
        };
        let idx: usize = var.strip_prefix('x')?.parse().ok()?;
        if idx == 0 {
            return None;
        }
        if weights.len() < idx {
            weights.resize(idx, 0.0);
        }
        weights[idx - 1] += coef;
    }
    if weights.is_empty() {
        None
    } else {
        Some(weights)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ConvexityReport {
    Consistent,
    Violated { x: Vec<f64>, y: Vec<f64> },
}

/// Randomized midpoint test of the declared convexity over `[-5, 5]^d`.
pub fn convexity_check(
    phi: &TestFunction,
    sample_count: usize,
    rng: &mut RngStream,
) -> Result<ConvexityReport> {
    let sign = match phi.convexity() {
        Convexity::Convex => 1.0,
        Convexity::Concave => -1.0,
        other => {
            return Err(Error::invalid(format!(
                "convexity check needs a Convex or Concave tag, got {other:?}"
            )))
        }
    };
    const BOX: f64 = 5.0;
    let d = phi.arity();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut mid = vec![0.0; d];
    for _ in 0..sample_count {
        for k in 0..d {
            x[k] = rng.uniform_in(-BOX, BOX);
            y[k] = rng.uniform_in(-BOX, BOX);
            mid[k] = 0.5 * (x[k] + y[k]);
        }
        let fx = phi.eval_unchecked(&x);
        let fy = phi.eval_unchecked(&y);
        let fm = phi.eval_unchecked(&mid);
        let chord = 0.5 * (fx + fy);
        let slack = 1e-10 * (1.0 + fx.abs() + fy.abs());
        if sign * (fm - chord) > slack {
            return Ok(ConvexityReport::Violated {
                x: x.clone(),
                y: y.clone(),
            });
        }
    }
    Ok(ConvexityReport::Consistent)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        let cube = TestFunction::polynomial(vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(cube.evaluate(&[2.0]).unwrap(), 8.0);
        assert_eq!(TestFunction::call(1.0).evaluate(&[0.5]).unwrap(), 0.0);
        let m = TestFunction::monomial(vec![1, 2], 1.0).unwrap();
        assert_eq!(m.evaluate(&[2.0, 3.0]).unwrap(), 18.0);
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let m = TestFunction::monomial(vec![1, 2], 1.0).unwrap();
        assert!(matches!(m.evaluate(&[1.0]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn invalid_parameters() {
        assert!(TestFunction::indicator_above(1.0, 0.0).is_err());
        assert!(TestFunction::abs_power(-1.0).is_err());
        assert!(TestFunction::polynomial(vec![]).is_err());
    }

    #[test]
    fn convexity_examples() {
        let mut rng = RngStream::new(1, 0);
        let call = TestFunction::call(0.0);
        assert_eq!(convexity_check(&call, 1000, &mut rng).unwrap(), ConvexityReport::Consistent);
        let cube = TestFunction::power(3).with_convexity(Convexity::Convex);
        assert!(matches!(
            convexity_check(&cube, 1000, &mut rng).unwrap(),
            ConvexityReport::Violated { .. }
        ));
        let sq = TestFunction::abs_power(2.0).unwrap();
        assert_eq!(convexity_check(&sq, 1000, &mut rng).unwrap(), ConvexityReport::Consistent);
        assert!(convexity_check(&TestFunction::power(3), 10, &mut rng).is_err());
    }

    #[test]
    fn json_wire_format() {
        let f = TestFunction::call(1.5);
        let v: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(v["variant"], "CallPayoff");
        assert_eq!(v["params"]["strike"], 1.5);
        assert_eq!(v["convexity"], "Convex");
        assert_eq!(v["growth_order"], 1);
        let back = TestFunction::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn shortcuts() {
        assert_eq!(TestFunction::parse("x3").unwrap(), TestFunction::power(3));
        let neg = TestFunction::parse("-x2").unwrap();
        assert_eq!(neg.convexity(), Convexity::Concave);
        assert_eq!(neg.eval_scalar(3.0), -9.0);
        let p = TestFunction::parse("(x1+x2)^3").unwrap();
        assert_eq!(p.arity(), 2);
        assert_eq!(p.evaluate(&[1.0, 2.0]).unwrap(), 27.0);
        let q = TestFunction::parse("(x1-2*x2)^2").unwrap();
        assert_eq!(q.evaluate(&[1.0, 1.0]).unwrap(), 1.0);
        let m = TestFunction::parse("x1*x2^2").unwrap();
        assert_eq!(m.evaluate(&[2.0, 3.0]).unwrap(), 18.0);
        let ind = TestFunction::parse("absind:2,0.1").unwrap();
        assert_eq!(ind.eval_scalar(-2.5), 1.0);
        assert_eq!(ind.eval_scalar(0.0), 0.0);
        assert!(TestFunction::parse("sin(x)").is_err());
    }

    #[test]
    fn swap_arguments() {
        let m = TestFunction::parse("x1*x2^2").unwrap().swapped().unwrap();
        assert_eq!(m.evaluate(&[2.0, 3.0]).unwrap(), 12.0);
        assert!(TestFunction::power(2).swapped().is_err());
    }

    #[test]
    fn ramp_sandwich() {
        let f = TestFunction::indicator_above(1.0, 0.2).unwrap();
        assert_eq!(f.eval_scalar(0.8), 0.0);
        assert_eq!(f.eval_scalar(1.0), 1.0);
        assert!((f.eval_scalar(0.9) - 0.5).abs() < 1e-12);
    }
}

//! Classical-probability primitives.
//!
//! Every expectation in the crate is eventually reduced to `E[f(shift + scale * Z)]`
//! with `Z ~ N(0, 1)`. Smooth integrands use probabilists' Gauss–Hermite rules
//! (nodes in `Z` units, weights summing to one). Integrands with known kinks are
//! integrated piecewise with composite Gauss–Legendre between the kinks, which
//! keeps payoff-type functions accurate to near machine precision.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::test_functions::TestFunction;

/// Largest supported Gauss–Hermite order.
pub const MAX_HERMITE_ORDER: usize = 200;
/// Default Gauss–Hermite order.
pub const DEFAULT_HERMITE_ORDER: usize = 40;

/// Integration range in `Z` units for the piecewise rule. The Gaussian tail
/// beyond it is below 1e-26, far under any tolerance used here.
const TRUNCATION_Z: f64 = 11.0;
const SEGMENT_WIDTH_Z: f64 = 2.0;
const SEGMENT_POINTS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `Σ wᵢ f(nᵢ)`. Mirror-image node pairs are summed together, so odd
    /// integrands over a symmetric rule cancel exactly.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.nodes.len();
        let mut total = 0.0;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let (zi, zj) = (self.nodes[i], self.nodes[j]);
            if zi == -zj && self.weights[i] == self.weights[j] {
                total += self.weights[i] * (f(zi) + f(zj));
            } else {
                total += self.weights[i] * f(zi) + self.weights[j] * f(zj);
            }
        }
        if n % 2 == 1 {
            total += self.weights[n / 2] * f(self.nodes[n / 2]);
        }
        total
    }

    /// The default rule for `phi`: order 40, doubled when the growth order is at least 6.
    pub fn for_function(phi: &TestFunction) -> Self {
        if phi.growth_order() >= 6 {
            cached_hermite(2 * DEFAULT_HERMITE_ORDER).clone()
        } else {
            cached_hermite(DEFAULT_HERMITE_ORDER).clone()
        }
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        cached_hermite(DEFAULT_HERMITE_ORDER).clone()
    }
}

fn cached_hermite(order: usize) -> &'static QuadratureRule {
    static RULE_40: OnceLock<QuadratureRule> = OnceLock::new();
    static RULE_80: OnceLock<QuadratureRule> = OnceLock::new();
    let cell = if order == 2 * DEFAULT_HERMITE_ORDER {
        &RULE_80
    } else {
        &RULE_40
    };
    cell.get_or_init(|| gauss_hermite(order).expect("static order is valid"))
}

/// Probabilists' Gauss–Hermite rule of the given order.
///
/// Nodes are the roots of the order-`n` Hermite polynomial, found by Newton
/// iteration on the orthonormal recurrence (which stays finite up to order 200).
/// The rule is exact for polynomials of degree `2n - 1` under `N(0, 1)`.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_HERMITE_ORDER {
        return Err(Error::invalid(format!(
            "Gauss-Hermite order must be in 1..={MAX_HERMITE_ORDER}, got {order}"
        )));
    }
    let n = order;
    let nf = n as f64;
    // π^{-1/4}
    let pim4 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0_f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NumericDomain(format!(
                "Gauss-Hermite root {i} of order {n} did not converge"
            )));
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    // physicists' → probabilists'
    let total: f64 = w.iter().sum();
    let mut pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(&w)
        .map(|(&xi, &wi)| (SQRT_2 * xi, wi / total))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(QuadratureRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Gauss–Legendre rule on `[a, b]` (weights sum to `b - a`).
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if order == 0 || order > 1000 {
        return Err(Error::invalid(format!(
            "Gauss-Legendre order must be in 1..=1000, got {order}"
        )));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::invalid(format!("invalid interval [{a}, {b}]")));
    }
    let n = order;
    let nf = n as f64;
    let xm = 0.5 * (b + a);
    let xl = 0.5 * (b - a);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = xm - xl * z;
        nodes[n - 1 - i] = xm + xl * z;
        weights[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    Ok(QuadratureRule { nodes, weights })
}

fn unit_legendre() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(SEGMENT_POINTS, -1.0, 1.0).expect("valid"))
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Inverse of [`std_normal_cdf`] on `(0, 1)`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("quantile level must be in (0,1), got {p}")));
    }
    let mut x = Normal::standard().inverse_cdf(p);
    // polish with Newton steps on the accurate CDF
    for _ in 0..3 {
        let density = std_normal_pdf(x);
        if density <= 0.0 {
            break;
        }
        x -= (std_normal_cdf(x) - p) / density;
    }
    Ok(x)
}

/// `E|Z|^p` for integer `p ≥ 1`.
pub fn abs_moment(p: u32) -> f64 {
    if p % 2 == 0 {
        return double_factorial(p.saturating_sub(1)) as f64;
    }
    // E|Z|^{2k+1} = 2^k sqrt(2/π) k!
    let k = (p - 1) / 2;
    let mut value = (2.0 / PI).sqrt();
    for i in 1..=k {
        value *= 2.0 * i as f64;
    }
    value
}

/// `E[Z^p]`: `(p-1)!!` for even `p`, zero for odd `p`.
pub fn raw_moment(p: u32) -> f64 {
    if p == 0 {
        1.0
    } else if p % 2 == 1 {
        0.0
    } else {
        double_factorial(p - 1) as f64
    }
}

/// `n!!` with `0!! = (-1)!! = 1`.
pub fn double_factorial(n: u32) -> u128 {
    let mut acc: u128 = 1;
    let mut k = n;
    while k > 1 {
        acc *= k as u128;
        k -= 2;
    }
    acc
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Gauss–Hermite approximation of `E[f(shift + scale Z)]`.
pub fn gh_expectation(f: impl Fn(f64) -> f64, shift: f64, scale: f64, rule: &QuadratureRule) -> f64 {
    if scale == 0.0 {
        return f(shift);
    }
    rule.integrate(|z| f(shift + scale * z))
}

/// Composite Gauss–Legendre rule on `[lo, hi]` with panels no wider than
/// `max_width` and extra panel breaks at `breaks` (Lebesgue weight).
pub fn composite_legendre(lo: f64, hi: f64, max_width: f64, breaks: &[f64]) -> Result<QuadratureRule> {
    if !(lo < hi && max_width > 0.0 && lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid(format!(
            "composite rule needs lo < hi and a positive panel width, got [{lo}, {hi}] / {max_width}"
        )));
    }
    let mut cuts = vec![lo, hi];
    cuts.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-13 * (hi - lo));
    let unit = unit_legendre();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in cuts.windows(2) {
        let pieces = ((pair[1] - pair[0]) / max_width).ceil().max(1.0) as usize;
        let step = (pair[1] - pair[0]) / pieces as f64;
        for p in 0..pieces {
            let a = pair[0] + p as f64 * step;
            let (mid, half) = (a + 0.5 * step, 0.5 * step);
            for (&t, &w) in unit.nodes().iter().zip(unit.weights()) {
                nodes.push(mid + half * t);
                weights.push(half * w);
            }
        }
    }
    Ok(QuadratureRule { nodes, weights })
}

/// `E[f(shift + scale Z)]` integrated piecewise between the given kink locations
/// (in the `x` domain) with composite Gauss–Legendre.
pub fn piecewise_normal_expectation(
    f: impl Fn(f64) -> f64,
    shift: f64,
    scale: f64,
    kinks: &[f64],
) -> f64 {
    if scale == 0.0 {
        return f(shift);
    }
    let mut breaks: Vec<f64> = Vec::with_capacity(kinks.len() + 16);
    let mut z = -TRUNCATION_Z;
    while z < TRUNCATION_Z {
        breaks.push(z);
        z += SEGMENT_WIDTH_Z;
    }
    breaks.push(TRUNCATION_Z);
    for &k in kinks {
        let zk = (k - shift) / scale;
        if zk.is_finite() && zk > -TRUNCATION_Z && zk < TRUNCATION_Z {
            breaks.push(zk);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    let unit = unit_legendre();
    let mut total = 0.0;
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        if half <= 0.0 {
            continue;
        }
        let mut seg = 0.0;
        for (&t, &w) in unit.nodes().iter().zip(unit.weights()) {
            let z = mid + half * t;
            seg += w * std_normal_pdf(z) * f(shift + scale * z);
        }
        total += half * seg;
    }
    total
}

/// Classical expectation `E[φ(shift + scale ε)]`, `ε ~ N(0, 1)`.
///
/// Smooth functions use `rule`; functions with kinks are integrated piecewise
/// between their kinks. `scale = 0` returns `φ(shift)` exactly.
pub fn normal_expectation(
    phi: &TestFunction,
    shift: f64,
    scale: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!("scale must be finite and nonnegative, got {scale}")));
    }
    if phi.arity() != 1 {
        return Err(Error::invalid(format!(
            "normal_expectation needs a scalar test function, got arity {}",
            phi.arity()
        )));
    }
    let value = if scale == 0.0 {
        phi.eval_scalar(shift)
    } else {
        let kinks = phi.kinks();
        if kinks.is_empty() {
            gh_expectation(|x| phi.eval_scalar(x), shift, scale, rule)
        } else {
            piecewise_normal_expectation(|x| phi.eval_scalar(x), shift, scale, &kinks)
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NumericDomain(format!(
            "non-finite expectation at shift={shift}, scale={scale}"
        )))
    }
}

/// Tensor-product Gauss–Hermite expectation `E[f(s₁ε₁, …, s_dε_d)]`.
pub fn tensor_normal_expectation(
    f: impl Fn(&[f64]) -> f64,
    scales: &[f64],
    rule: &QuadratureRule,
) -> f64 {
    let d = scales.len();
    if d == 0 {
        return f(&[]);
    }
    let m = rule.order();
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for k in 0..d {
            point[k] = scales[k] * rule.nodes()[idx[k]];
            weight *= rule.weights()[idx[k]];
        }
        total += weight * f(&point);
        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < m {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                return total;
            }
        }
    }
}

/// A reproducible random stream: equal `(seed, stream)` pairs give equal sequences.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// A fresh stream sharing this seed.
    pub fn substream(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }

    /// A child stream for parallel chunk `index`, deterministic in
    /// `(seed, stream, index)`.
    pub fn fork(&self, index: u64) -> Self {
        let mixed = self
            .stream
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ index;
        Self::new(self.seed, mixed)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_rule_integrates_the_normal_density() {
        let rule = composite_legendre(-11.0, 11.0, 1.5, &[0.3, 0.3, 20.0]).unwrap();
        let mass = rule.integrate(std_normal_pdf);
        let second = rule.integrate(|x| x * x * std_normal_pdf(x));
        assert!((mass - 1.0).abs() < 1e-14, "{mass}");
        assert!((second - 1.0).abs() < 1e-13, "{second}");
        assert!(composite_legendre(1.0, 1.0, 1.0, &[]).is_err());
    }

    #[test]
    fn hermite_low_moments() {
        let rule = gauss_hermite(5).unwrap();
        assert!((rule.integrate(|z| z * z) - 1.0).abs() < 1e-14);
        assert!(rule.integrate(|z| z.powi(3)).abs() < 1e-14);
        let rule = gauss_hermite(10).unwrap();
        assert!((rule.integrate(|z| z.powi(4)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_rule_shape() {
        for order in [1, 2, 7, 40, 80, 200] {
            let rule = gauss_hermite(order).unwrap();
            assert_eq!(rule.order(), order);
            let total: f64 = rule.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-14);
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            for i in 0..order {
                assert!((rule.nodes()[i] + rule.nodes()[order - 1 - i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hermite_degree_exactness() {
        let rule = gauss_hermite(40).unwrap();
        for p in 0..=20u32 {
            let got = rule.integrate(|z| z.powi(p as i32));
            let want = raw_moment(p);
            if p % 2 == 1 {
                assert_eq!(got, 0.0, "p={p}");
            } else {
                assert!((got - want).abs() <= 1e-12 * want.max(1.0), "p={p}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn hermite_order_out_of_range() {
        assert!(matches!(gauss_hermite(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(gauss_hermite(201), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn legendre_polynomials() {
        let rule = gauss_legendre(10, 0.0, 2.0).unwrap();
        assert!((rule.integrate(|x| x.powi(5)) - 64.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!(std_normal_cdf(-40.0) < 1e-300);
        assert!((std_normal_cdf(-1.5) + std_normal_cdf(1.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let z = std_normal_quantile(0.975).unwrap();
        assert!((z - 1.959_963_984_540_054).abs() < 1e-9);
        assert!(std_normal_quantile(1.0).is_err());
    }

    #[test]
    fn absolute_moments() {
        let c = (2.0 / PI).sqrt();
        assert!((abs_moment(1) - c).abs() < 1e-15);
        assert_eq!(abs_moment(2), 1.0);
        assert!((abs_moment(3) - 2.0 * c).abs() < 1e-15);
        assert_eq!(abs_moment(4), 3.0);
        assert!((abs_moment(5) - 8.0 * c).abs() < 1e-14);
    }

    #[test]
    fn piecewise_matches_closed_form_call() {
        // E[(x + sZ - K)^+] = (x-K)Φ(d) + s φ(d), d = (x-K)/s
        for &(x, s, k) in &[(0.0, 1.0, 0.0), (0.3, 2.0, 0.7), (-1.0, 0.5, 0.2)] {
            let d: f64 = (x - k) / s;
            let exact = (x - k) * std_normal_cdf(d) + s * std_normal_pdf(d);
            let got = piecewise_normal_expectation(|y| (y - k).max(0.0), x, s, &[k]);
            assert!((got - exact).abs() < 1e-13, "{got} vs {exact}");
        }
    }

    #[test]
    fn tensor_rule_factorizes() {
        let rule = gauss_hermite(10).unwrap();
        let got = tensor_normal_expectation(|p| p[0] * p[0] * p[1].powi(4), &[2.0, 1.5], &rule);
        assert!((got - 4.0 * 3.0 * 1.5f64.powi(4)).abs() < 1e-10);
    }

    #[test]
    fn rng_streams_are_reproducible() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        let mut c = RngStream::new(42, 8);
        let xa: Vec<f64> = (0..100).map(|_| a.normal()).collect();
        let xb: Vec<f64> = (0..100).map(|_| b.normal()).collect();
        let xc: Vec<f64> = (0..100).map(|_| c.normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn double_factorials() {
        assert_eq!(double_factorial(0), 1);
        assert_eq!(double_factorial(1), 1);
        assert_eq!(double_factorial(5), 15);
        assert_eq!(double_factorial(6), 48);
        assert_eq!(binomial(5, 2), 10.0);
    }
}

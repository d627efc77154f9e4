//! Functions sampled on a uniform one-dimensional grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interp {
    Linear,
    /// Four-point Lagrange interpolation (exact for cubics).
    #[default]
    Cubic,
    /// Piecewise cubic Hermite with Fritsch–Carlson slopes.
    MonotoneCubic,
}

/// Values on `x_j = x_lo + j·step`, interpolated inside the grid and extended
/// by the boundary tangent outside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridFunction {
    x_lo: f64,
    step: f64,
    values: Vec<f64>,
    interp: Interp,
    slopes: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    x_lo: f64,
    x_hi: f64,
    step: f64,
    values: Vec<f64>,
    interp: Interp,
    extrapolation: String,
}

impl TryFrom<RawGrid> for GridFunction {
    type Error = Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        if raw.extrapolation != "linear-tangent" {
            return Err(Error::invalid(format!("unknown extrapolation '{}'", raw.extrapolation)));
        }
        let expected = ((raw.x_hi - raw.x_lo) / raw.step).round() as usize + 1;
        if expected != raw.values.len() {
            return Err(Error::invalid(format!(
                "grid of [{}, {}] with step {} needs {expected} values, got {}",
                raw.x_lo,
                raw.x_hi,
                raw.step,
                raw.values.len()
            )));
        }
        GridFunction::new(raw.x_lo, raw.step, raw.values, raw.interp)
    }
}

impl From<GridFunction> for RawGrid {
    fn from(g: GridFunction) -> Self {
        RawGrid {
            x_lo: g.x_lo,
            x_hi: g.x_hi(),
            step: g.step,
            values: g.values,
            interp: g.interp,
            extrapolation: "linear-tangent".into(),
        }
    }
}

impl GridFunction {
    pub fn new(x_lo: f64, step: f64, values: Vec<f64>, interp: Interp) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && x_lo.is_finite()) {
            return Err(Error::invalid(format!("grid needs a finite positive step, got {step}")));
        }
        let min_len = if interp == Interp::Cubic { 4 } else { 2 };
        if values.len() < min_len {
            return Err(Error::invalid(format!(
                "{interp:?} interpolation needs at least {min_len} grid values"
            )));
        }
        let mut g = Self {
            x_lo,
            step,
            values,
            interp,
            slopes: Vec::new(),
            left_slope: 0.0,
            right_slope: 0.0,
        };
        g.prepare();
        Ok(g)
    }

    /// Samples `f` on `points` equispaced points of `[x_lo, x_hi]`.
    pub fn from_fn(x_lo: f64, x_hi: f64, points: usize, interp: Interp, f: impl Fn(f64) -> f64) -> Result<Self> {
        if points < 2 || !(x_hi > x_lo) {
            return Err(Error::invalid("grid needs x_hi > x_lo and at least two points"));
        }
        let step = (x_hi - x_lo) / (points - 1) as f64;
        let values = (0..points).map(|j| f(x_lo + step * j as f64)).collect();
        Self::new(x_lo, step, values, interp)
    }

    /// A grid symmetric about zero with `2·half_points + 1` points, where the
    /// middle point is exactly zero.
    pub fn symmetric(half_points: usize, step: f64, interp: Interp, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..2 * half_points + 1)
            .map(|j| f((j as f64 - half_points as f64) * step))
            .collect();
        Self::new(-(half_points as f64) * step, step, values, interp)
    }

    fn prepare(&mut self) {
        let v = &self.values;
        let n = v.len();
        let h = self.step;
        match self.interp {
            Interp::Linear => {
                self.left_slope = (v[1] - v[0]) / h;
                self.right_slope = (v[n - 1] - v[n - 2]) / h;
            }
            Interp::Cubic => {
                self.left_slope = (-11.0 * v[0] + 18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * h);
                self.right_slope =
                    (11.0 * v[n - 1] - 18.0 * v[n - 2] + 9.0 * v[n - 3] - 2.0 * v[n - 4]) / (6.0 * h);
            }
            Interp::MonotoneCubic => {
                self.slopes = pchip_slopes(v, h);
                self.left_slope = self.slopes[0];
                self.right_slope = self.slopes[n - 1];
            }
        }
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_lo + self.step * (self.values.len() - 1) as f64
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn interp(&self) -> Interp {
        self.interp
    }

    pub fn point(&self, j: usize) -> f64 {
        self.x_lo + self.step * j as f64
    }

    /// Value at a possibly out-of-range grid index, by tangent extrapolation.
    pub fn at_index(&self, j: isize) -> f64 {
        let n = self.values.len() as isize;
        if j < 0 {
            self.values[0] + self.left_slope * self.step * j as f64
        } else if j >= n {
            self.values[n as usize - 1] + self.right_slope * self.step * (j - n + 1) as f64
        } else {
            self.values[j as usize]
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = (x - self.x_lo) / self.step;
        if t <= 0.0 {
            return self.values[0] + self.left_slope * (x - self.x_lo);
        }
        let last = (n - 1) as f64;
        if t >= last {
            return self.values[n - 1] + self.right_slope * (x - self.x_hi());
        }
        let i = (t.floor() as usize).min(n - 2);
        let u = t - i as f64;
        let v = &self.values;
        match self.interp {
            Interp::Linear => v[i] + u * (v[i + 1] - v[i]),
            Interp::Cubic => {
                let start = i.saturating_sub(1).min(n - 4);
                let s = t - start as f64;
                let (f0, f1, f2, f3) = (v[start], v[start + 1], v[start + 2], v[start + 3]);
                let l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
                let l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
                let l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
                let l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
                l0 * f0 + l1 * f1 + l2 * f2 + l3 * f3
            }
            Interp::MonotoneCubic => {
                let h = self.step;
                let (y0, y1) = (v[i], v[i + 1]);
                let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
                let u2 = u * u;
                let u3 = u2 * u;
                (2.0 * u3 - 3.0 * u2 + 1.0) * y0
                    + (u3 - 2.0 * u2 + u) * m0
                    + (-2.0 * u3 + 3.0 * u2) * y1
                    + (u3 - u2) * m1
            }
        }
    }

    /// Index of the grid point closest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let t = ((x - self.x_lo) / self.step).round();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.values.len() - 1)
        }
    }
}

fn pchip_slopes(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let delta: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut d = vec![0.0; n];
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        d[k] = if a * b <= 0.0 { 0.0 } else { 2.0 / (1.0 / a + 1.0 / b) };
    }
    let end = |d0: f64, d1: f64| {
        let s = (3.0 * d0 - d1) / 2.0;
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > (3.0 * d0).abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(delta[0], delta[1]);
    d[n - 1] = end(delta[n - 2], delta[n - 3]);
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_exact_for_cubics() {
        let g = GridFunction::from_fn(-2.0, 2.0, 41, Interp::Cubic, |x| x * x * x - x).unwrap();
        for &x in &[-1.97, -0.333, 0.0, 0.05, 1.234, 1.99] {
            assert!((g.eval(x) - (x * x * x - x)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn linear_outside_the_grid() {
        let g = GridFunction::from_fn(0.0, 1.0, 11, Interp::Linear, |x| 2.0 * x + 1.0).unwrap();
        assert!((g.eval(3.0) - 7.0).abs() < 1e-12);
        assert!((g.eval(-1.0) + 1.0).abs() < 1e-12);
        assert!((g.at_index(-5) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_cubic_preserves_monotonicity() {
        let g = GridFunction::from_fn(0.0, 1.0, 11, Interp::MonotoneCubic, |x| if x < 0.5 { 0.0 } else { 1.0 })
            .unwrap();
        let mut prev = g.eval(0.0);
        for k in 1..=200 {
            let v = g.eval(k as f64 / 200.0);
            assert!(v >= prev - 1e-15);
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn symmetric_grid_has_exact_zero() {
        let g = GridFunction::symmetric(10, 0.3, Interp::Cubic, |x| x).unwrap();
        assert_eq!(g.point(10), 0.0);
        assert_eq!(g.nearest_index(0.01), 10);
        assert_eq!(g.nearest_index(-100.0), 0);
    }

    #[test]
    fn json_shape() {
        let g = GridFunction::from_fn(0.0, 1.0, 5, Interp::Cubic, |x| x).unwrap();
        let v: serde_json::Value = serde_json::to_value(&g).unwrap();
        assert_eq!(v["extrapolation"], "linear-tangent");
        assert_eq!(v["interp"], "cubic");
        let back: GridFunction = serde_json::from_value(v).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"x_lo":0,"x_hi":1,"step":0.5,"values":[0,1],"interp":"linear","extrapolation":"linear-tangent"}"#;
        assert!(serde_json::from_str::<GridFunction>(bad).is_err());
    }
}

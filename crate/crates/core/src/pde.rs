//! Explicit finite differences for the G-heat equation
//! `∂u/∂t = G(∂²u/∂x²)`, `G(a) = ½(σ̄²a⁺ − σ̲²a⁻)`, `u(0, ·) = φ`.
//!
//! `u(t, x) = Ê[φ(x + √t X)]` for `X` G-normal, which makes the solver an
//! independent check on the backward recursion.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, Interp};
use crate::maximal::VarianceBand;
use crate::test_functions::{Convexity, TestFunction};

const BLOWUP: f64 = 1e12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// One-sided second differences at the ends; the returned slice extends
    /// by its boundary tangent.
    #[default]
    TangentExtrapolation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub band: VarianceBand,
    pub x_halfwidth: f64,
    pub dx: f64,
    pub t_final: f64,
    pub dt: f64,
    pub boundary: Boundary,
}

impl PdeConfig {
    /// Half-width `8 σ̄ √t`, `cells` cells per side and `dt` at `safety` times
    /// the stability limit, shrunk so the step count is integral.
    pub fn with_defaults(band: VarianceBand, t_final: f64, cells: usize, safety: f64) -> Result<Self> {
        Self::with_halfwidth(band, t_final, 8.0, cells, safety)
    }

    /// As [`PdeConfig::with_defaults`] with half-width `sigmas · σ̄ √t`.
    pub fn with_halfwidth(band: VarianceBand, t_final: f64, sigmas: f64, cells: usize, safety: f64) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::invalid(format!("t_final must be positive, got {t_final}")));
        }
        if cells < 2 || !(safety > 0.0 && safety <= 1.0) {
            return Err(Error::invalid("need at least 2 cells and a CFL safety in (0, 1]"));
        }
        if !(sigmas > 0.0 && sigmas.is_finite()) {
            return Err(Error::invalid(format!("half-width multiplier must be positive, got {sigmas}")));
        }
        let spread = if band.hi() > 0.0 { band.hi() } else { 1.0 };
        let x_halfwidth = sigmas * spread * t_final.sqrt();
        let dx = x_halfwidth / cells as f64;
        let dt = Self::integral_dt(t_final, safety * Self::stable_dt(band, dx));
        Ok(Self {
            band,
            x_halfwidth,
            dx,
            t_final,
            dt,
            boundary: Boundary::TangentExtrapolation,
        })
    }

    /// Number of explicit steps.
    pub fn steps(&self) -> Result<usize> {
        self.time_steps()
    }

    pub fn standard(band: VarianceBand, t_final: f64) -> Result<Self> {
        Self::with_defaults(band, t_final, 800, 0.9)
    }

    /// The same domain with `dx` halved and `dt` rescaled to keep the CFL ratio.
    pub fn refined(&self) -> Self {
        let dx = self.dx / 2.0;
        let ratio = self.dt / Self::stable_dt(self.band, self.dx);
        let dt = Self::integral_dt(self.t_final, ratio * Self::stable_dt(self.band, dx));
        Self { dx, dt, ..*self }
    }

    /// `dx² / σ̄²`, the explicit-scheme stability limit.
    pub fn stable_dt(band: VarianceBand, dx: f64) -> f64 {
        if band.hi() > 0.0 {
            dx * dx / (band.hi() * band.hi())
        } else {
            f64::INFINITY
        }
    }

    fn integral_dt(t_final: f64, max_dt: f64) -> f64 {
        if !max_dt.is_finite() {
            return t_final;
        }
        t_final / (t_final / max_dt).ceil()
    }

    fn cells_per_side(&self) -> Result<usize> {
        let c = self.x_halfwidth / self.dx;
        if (c - c.round()).abs() > 1e-6 * c.max(1.0) || c.round() < 2.0 {
            return Err(Error::invalid(format!(
                "x_halfwidth {} must be an integral multiple (>= 2) of dx {}",
                self.x_halfwidth, self.dx
            )));
        }
        Ok(c.round() as usize)
    }

    fn time_steps(&self) -> Result<usize> {
        let s = self.t_final / self.dt;
        if (s - s.round()).abs() > 1e-6 * s.max(1.0) || s.round() < 1.0 {
            return Err(Error::invalid(format!(
                "t_final {} must be an integral multiple of dt {}",
                self.t_final, self.dt
            )));
        }
        Ok(s.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0 && self.dt > 0.0 && self.t_final > 0.0 && self.x_halfwidth > 0.0) {
            return Err(Error::invalid("dx, dt, t_final and x_halfwidth must be positive"));
        }
        let max_dt = Self::stable_dt(self.band, self.dx);
        if self.dt > max_dt * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "dt = {} violates the CFL condition; the largest stable dt is {max_dt}",
                self.dt
            )));
        }
        self.cells_per_side()?;
        self.time_steps()?;
        Ok(())
    }
}

/// Terminal slice `u(t_final, ·)` on `[-x_halfwidth, x_halfwidth]`.
pub fn solve_gheat(phi: &TestFunction, config: &PdeConfig) -> Result<GridFunction> {
    if phi.arity() != 1 {
        return Err(Error::invalid("the G-heat solver needs a scalar test function"));
    }
    config.validate()?;
    let cells = config.cells_per_side()?;
    let steps = config.time_steps()?;
    let n = 2 * cells + 1;
    let dx = config.dx;
    let x = |j: usize| (j as f64 - cells as f64) * dx;
    let mut u: Vec<f64> = (0..n).map(|j| phi.eval_scalar(x(j))).collect();
    if let Some(j) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericDomain(format!("initial value non-finite at x = {}", x(j))));
    }
    let up = 0.5 * config.band.hi() * config.band.hi() * config.dt;
    let down = 0.5 * config.band.lo() * config.band.lo() * config.dt;
    let inv_dx2 = 1.0 / (dx * dx);
    let mut lap = vec![0.0; n];
    for step in 0..steps {
        for j in 1..n - 1 {
            lap[j] = (u[j - 1] - 2.0 * u[j] + u[j + 1]) * inv_dx2;
        }
        lap[0] = lap[1];
        lap[n - 1] = lap[n - 2];
        let mut worst = 0.0_f64;
        for j in 0..n {
            let a = lap[j];
            u[j] += if a >= 0.0 { up * a } else { down * a };
            worst = worst.max(u[j].abs());
        }
        if !(worst <= BLOWUP) {
            return Err(Error::NumericOverflow(format!(
                "solution exceeded {BLOWUP:e} at step {} of {steps}",
                step + 1
            )));
        }
    }
    GridFunction::new(-(cells as f64) * dx, dx, u, Interp::Cubic)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CollapseReport {
    pub collapsed_sigma: f64,
    pub max_abs_deviation: f64,
    /// Deviations are measured on `|x| <= x_range`.
    pub x_range: f64,
}

/// Compares the G-heat solution with the classical heat solution at `σ̄`
/// (convex tag) or `σ̲` (concave tag) on the inner half of the domain.
pub fn convexity_collapse_check(phi: &TestFunction, config: &PdeConfig) -> Result<CollapseReport> {
    let sigma = match phi.convexity() {
        Convexity::Convex => config.band.hi(),
        Convexity::Concave => config.band.lo(),
        other => {
            return Err(Error::invalid(format!(
                "collapse check needs a Convex or Concave tag, got {other:?}"
            )))
        }
    };
    let g = solve_gheat(phi, config)?;
    let classical = PdeConfig {
        band: VarianceBand::degenerate(sigma)?,
        ..*config
    };
    let c = solve_gheat(phi, &classical)?;
    let x_range = 0.5 * config.x_halfwidth;
    let mut worst = 0.0_f64;
    for j in 0..g.len() {
        if g.point(j).abs() <= x_range {
            worst = worst.max((g.values()[j] - c.values()[j]).abs());
        }
    }
    Ok(CollapseReport {
        collapsed_sigma: sigma,
        max_abs_deviation: worst,
        x_range,
    })
}

/// Writes `x,u` rows of a slice.
pub fn write_csv(slice: &GridFunction, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "x,u")?;
    for (j, v) in slice.values().iter().enumerate() {
        writeln!(out, "{},{}", slice.point(j), v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(lo: f64, hi: f64) -> VarianceBand {
        VarianceBand::new(lo, hi).unwrap()
    }

    fn coarse(b: VarianceBand) -> PdeConfig {
        PdeConfig::with_defaults(b, 1.0, 200, 0.9).unwrap()
    }

    #[test]
    fn convex_and_concave_squares() {
        let b = band(0.5, 1.0);
        let up = solve_gheat(&TestFunction::power(2), &coarse(b)).unwrap();
        assert!((up.eval(0.0) - 1.0).abs() < 5e-3);
        let down = solve_gheat(&TestFunction::power(2).negated(), &coarse(b)).unwrap();
        assert!((down.eval(0.0) + 0.25).abs() < 5e-3);
    }

    #[test]
    fn cubic_is_positive() {
        let u = solve_gheat(&TestFunction::power(3), &coarse(band(0.5, 1.0))).unwrap();
        assert!(u.eval(0.0) > 0.4);
    }

    #[test]
    fn cfl_violation_names_the_limit() {
        let mut cfg = coarse(band(0.5, 1.0));
        cfg.dt = 2.0 * cfg.dx * cfg.dx;
        let err = solve_gheat(&TestFunction::power(2), &cfg).unwrap_err();
        match err {
            Error::InvalidArgument(msg) => assert!(msg.contains("largest stable dt")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let phi = TestFunction::polynomial(vec![0.0, 0.0, 1e13]).unwrap();
        assert!(matches!(
            solve_gheat(&phi, &coarse(band(0.5, 1.0))),
            Err(Error::NumericOverflow(_))
        ));
    }

    #[test]
    fn collapse_checks() {
        let cfg = coarse(band(1.0, 2.0));
        let r = convexity_collapse_check(&TestFunction::call(0.0), &cfg).unwrap();
        assert_eq!(r.collapsed_sigma, 2.0);
        assert!(r.max_abs_deviation <= 5e-3);
        let neg_abs = TestFunction::abs_power(1.0).unwrap().negated();
        let r = convexity_collapse_check(&neg_abs, &cfg).unwrap();
        assert_eq!(r.collapsed_sigma, 1.0);
        assert!(r.max_abs_deviation <= 5e-3);
        let r = convexity_collapse_check(&TestFunction::call(0.0), &coarse(band(1.5, 1.5))).unwrap();
        assert_eq!(r.max_abs_deviation, 0.0);
        assert!(convexity_collapse_check(&TestFunction::power(3), &cfg).is_err());
    }

    #[test]
    fn csv_dump() {
        let u = solve_gheat(&TestFunction::power(1), &PdeConfig::with_defaults(band(1.0, 1.0), 0.1, 4, 0.9).unwrap())
            .unwrap();
        let mut buf = Vec::new();
        write_csv(&u, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,u\n"));
        assert_eq!(text.lines().count(), 1 + 9);
    }
}

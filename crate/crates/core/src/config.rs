//! Numerical defaults and verification tolerances, kept in one place so the
//! library, the CLI and the acceptance suite agree.

use serde::{Deserialize, Serialize};

use crate::capacity::CapacityConfig;
use crate::clt::CltConfig;
use crate::dp::GridConfig;
use crate::joint::JointConfig;
use crate::maximal::MaximalOptions;
use crate::semignormal::SigmaSearch;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Gauss–Hermite order for smooth one-dimensional expectations.
    pub hermite_order: usize,
    /// Grid points per dimension for maximal-distribution scans.
    pub maximal_grid: usize,
    /// Grid points for the σ search of semi-G-normal expectations.
    pub sigma_grid: usize,
    /// Argument tolerance of golden-section refinement.
    pub argument_tol: f64,
    /// State-grid points of the backward recursion.
    pub dp_grid_points: usize,
    pub dp_halfwidth_multiplier: f64,
    /// Spatial cells on each side of zero for the G-heat solver.
    pub pde_cells_per_side: usize,
    /// Half-width of the G-heat domain in units of `σ̄ √t`.
    pub pde_halfwidth_sigmas: f64,
    /// Fraction of the CFL limit used as time step.
    pub cfl_safety: f64,
    /// Smoothing width of capacity indicators as a fraction of the threshold.
    pub capacity_width_fraction: f64,
    pub bisection_prob_tol: f64,
    pub bisection_width_tol: f64,
    /// Grid points of each coordinate sweep in box searches.
    pub sweep_grid: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            hermite_order: 40,
            maximal_grid: 129,
            sigma_grid: 65,
            argument_tol: 1e-10,
            dp_grid_points: 2001,
            dp_halfwidth_multiplier: 1.5,
            pde_cells_per_side: 800,
            pde_halfwidth_sigmas: 8.0,
            cfl_safety: 0.9,
            capacity_width_fraction: 0.01,
            bisection_prob_tol: 1e-4,
            bisection_width_tol: 1e-6,
            sweep_grid: 17,
        }
    }
}

impl Numerics {
    pub fn grid(&self) -> GridConfig {
        GridConfig {
            points: self.dp_grid_points,
            halfwidth_multiplier: self.dp_halfwidth_multiplier,
            hermite_order: self.hermite_order,
            ..GridConfig::default()
        }
    }

    pub fn sigma_search(&self) -> SigmaSearch {
        SigmaSearch {
            grid: self.sigma_grid,
            argument_tol: self.argument_tol,
            ..SigmaSearch::default()
        }
    }

    pub fn maximal(&self) -> MaximalOptions {
        MaximalOptions {
            grid_per_dim: self.maximal_grid,
            argument_tol: self.argument_tol,
            ..MaximalOptions::default()
        }
    }

    /// The joint evaluators keep their own coarser σ search, since it runs
    /// once per quadrature node.
    pub fn joint(&self) -> JointConfig {
        JointConfig {
            hermite_order: self.hermite_order,
            sweep_grid: self.sweep_grid,
            dp_grid: self.grid(),
            ..JointConfig::default()
        }
    }

    pub fn clt(&self) -> CltConfig {
        CltConfig {
            hermite_order: self.hermite_order,
            sigma: self.sigma_search(),
            sweep_grid: self.sweep_grid,
            dp_grid: self.grid(),
            pde_cells_per_side: self.pde_cells_per_side,
            cfl_safety: self.cfl_safety,
            ..CltConfig::default()
        }
    }

    pub fn capacity(&self) -> CapacityConfig {
        CapacityConfig {
            width_fraction: self.capacity_width_fraction,
            grid: self.grid(),
            hermite_order: self.hermite_order,
            bisection_prob_tol: self.bisection_prob_tol,
            bisection_width_tol: self.bisection_width_tol,
            ..CapacityConfig::default()
        }
    }
}

/// Tolerances of the acceptance criteria.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub third_moment_seq: f64,
    pub third_moment_semi: f64,
    pub even_moment_rel: f64,
    pub odd_moment: f64,
    pub product_moment: f64,
    pub collapse: f64,
    pub skeleton: f64,
    pub pde_agreement: f64,
    pub trend_slack: f64,
    pub dominance: f64,
    pub dominance_strict_gap: f64,
    pub capacity_closed_form: f64,
    pub coverage_se_multiple: f64,
    pub reversed_mean: f64,
    pub mc_se_multiple: f64,
    pub swap: f64,
    pub max_mean_se_multiple: f64,
    pub max_mean_separation_se: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            third_moment_seq: 1e-6,
            third_moment_semi: 1e-9,
            even_moment_rel: 1e-8,
            odd_moment: 1e-6,
            product_moment: 1e-6,
            collapse: 1e-8,
            skeleton: 1e-6,
            pde_agreement: 1e-2,
            trend_slack: 0.10,
            dominance: 1e-8,
            dominance_strict_gap: 1e-3,
            capacity_closed_form: 1e-10,
            coverage_se_multiple: 3.0,
            reversed_mean: 1e-12,
            mc_se_multiple: 4.0,
            swap: 1e-10,
            max_mean_se_multiple: 4.0,
            max_mean_separation_se: 10.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_overrides_keep_defaults() {
        let t: Tolerances = serde_json::from_str(r#"{"skeleton": 1e-5}"#).unwrap();
        assert_eq!(t.skeleton, 1e-5);
        assert_eq!(t.swap, 1e-10);
    }

    #[test]
    fn defaults_agree_with_module_defaults() {
        let n = Numerics::default();
        assert_eq!(n.grid(), GridConfig::default());
        assert_eq!(n.sigma_search(), SigmaSearch::default());
        assert_eq!(n.maximal(), MaximalOptions::default());
        assert_eq!(n.joint(), JointConfig::default());
        assert_eq!(n.clt(), CltConfig::default());
        assert_eq!(n.capacity(), CapacityConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<Numerics>(r#"{"hermit_order": 3}"#).is_err());
    }
}

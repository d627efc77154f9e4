//! Independent numerical routes that must agree: the backward recursion, the
//! G-heat solver, nested quadrature and Monte Carlo replay of the extremal path.

use sublinear::clt::{pde_reference, CltConfig};
use sublinear::dp::{gem_weighted_sum, gnormal_expectation_iterative, policy_replay, GridConfig, IterationSchedule, SigmaSet};
use sublinear::joint::{joint_expectation, IndependenceMode, JointConfig};
use sublinear::kernel::RngStream;
use sublinear::{TestFunction, VarianceBand};

#[test]
fn recursion_approaches_the_heat_solution_for_a_nonconvex_quartic() {
    let band = VarianceBand::new(0.5, 1.0).unwrap();
    let phi = TestFunction::polynomial(vec![0.0, 0.0, -2.0, 0.0, 1.0]).unwrap();
    let pde = pde_reference(&phi, band, &CltConfig::default()).unwrap();
    let errors: Vec<f64> = [8, 64]
        .iter()
        .map(|&n| {
            let v = gnormal_expectation_iterative(&phi, band, &IterationSchedule::new(n)).unwrap().value;
            (v - pde).abs()
        })
        .collect();
    assert!(errors[1] < errors[0], "{errors:?}");
    assert!(errors[1] < 2e-2, "{errors:?}");
}

#[test]
fn recursion_matches_nested_quadrature_on_two_steps() {
    let band = VarianceBand::new(1.0, 2.0).unwrap();
    let phi = TestFunction::power(3);
    let weights = [1.0, 1.0];
    let dp = gem_weighted_sum(&phi, band, &weights, SigmaSet::Grid(9), &GridConfig::default()).unwrap();
    let sum = TestFunction::power_of_sum(weights.to_vec(), 3).unwrap();
    let nested = joint_expectation(&sum, band, IndependenceMode::Sequential, &JointConfig::default()).unwrap();
    assert_eq!(nested.method, "nested-quadrature");
    assert!((dp.value - nested.value).abs() < 1e-4, "{} vs {}", dp.value, nested.value);
}

#[test]
fn replaying_the_extremal_policy_attains_the_recursion_value() {
    let band = VarianceBand::new(0.5, 1.0).unwrap();
    let phi = TestFunction::power(3);
    let weights = vec![1.0; 4];
    let dp = gem_weighted_sum(&phi, band, &weights, SigmaSet::TwoPoint, &GridConfig::default()).unwrap();
    let mc = policy_replay(&dp.policy, &weights, band, &phi, 400_000, &RngStream::new(7, 0)).unwrap();
    let z = (mc.mean - dp.value).abs() / mc.std_error;
    assert!(z < 4.0, "replay {} +- {} vs {}", mc.mean, mc.std_error, dp.value);
}

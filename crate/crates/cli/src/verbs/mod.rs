//! Verb implementations.

mod capacity;
mod distributions;
mod iteration;
mod joint;
mod verify;

use sublinear::kernel::{gauss_hermite, QuadratureRule};
use sublinear::{Error, Result, TestFunction};

use crate::registry::{RunContext, Verb};

pub static ALL: &[&dyn Verb] = &[
    &distributions::Maximal,
    &distributions::SemiNormal,
    &iteration::GnormalIter,
    &iteration::Gem,
    &joint::Joint,
    &joint::Skeleton,
    &capacity::Capacity,
    &capacity::RobustCi,
    &iteration::Pde,
    &iteration::Clt,
    &iteration::DemoNotGnormal,
    &verify::Verify,
];

/// Hermite rule at the configured order, doubled for fast-growing φ.
fn hermite_for(phi: &TestFunction, ctx: &RunContext) -> Result<QuadratureRule> {
    let order = ctx.numerics.hermite_order;
    gauss_hermite(if phi.growth_order() >= 6 { 2 * order } else { order })
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| Error::NumericDomain(format!("csv encoding failed: {e}")))?;
    String::from_utf8(buf).map_err(|e| Error::NumericDomain(format!("csv encoding failed: {e}")))
}

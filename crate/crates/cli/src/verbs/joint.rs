//! `joint` and `skeleton`: multivariate expectations under the independence modes.

use clap::Arg;
use serde_json::{json, Value};

use sublinear::joint::{evaluators, joint_expectation, skeleton_expectation, IndependenceMode, SkeletonMode, SkeletonSet};
use sublinear::Result;

use super::hermite_for;
use crate::registry::{band_arg, phi_arg, with_default, Outcome, Params, RunContext, Verb};

pub struct Joint;

impl Verb for Joint {
    fn name(&self) -> &'static str {
        "joint"
    }

    fn about(&self) -> &'static str {
        "Joint expectation of φ(W1..Wn) under semi-sequential, sequential or fully-sequential independence"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            phi_arg(),
            band_arg(),
            with_default("mode", "all", "semi-sequential, sequential, fully-sequential or all"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let phi = p.phi()?;
        let band = p.band()?;
        let modes: Vec<IndependenceMode> = match p.raw("mode").unwrap_or("all") {
            "all" => evaluators().iter().map(|e| e.mode()).collect(),
            _ => vec![p.parse("mode")?],
        };
        let cfg = ctx.numerics.joint();
        let values = modes
            .into_iter()
            .map(|mode| {
                let v = joint_expectation(&phi, band, mode, &cfg)?;
                Ok(json!({
                    "mode": mode.name(),
                    "value": v.value,
                    "method": v.method,
                    "argmax": v.argmax,
                }))
            })
            .collect::<Result<Vec<Value>>>()?;
        Ok(Outcome::value(json!({
            "phi": phi,
            "band": [band.lo(), band.hi()],
            "values": values,
        })))
    }
}

pub struct Skeleton;

impl Verb for Skeleton {
    fn name(&self) -> &'static str {
        "skeleton"
    }

    fn about(&self) -> &'static str {
        "Two-step expectation maximized over a finite set of feedback σ policies"
    }

    fn args(&self) -> Vec<Arg> {
        vec![phi_arg(), band_arg(), with_default("set", "L2", "S2 or L2")]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let phi = p.phi()?;
        let band = p.band()?;
        let mode: SkeletonMode = p.parse("set")?;
        let r = skeleton_expectation(&phi, &SkeletonSet::new(mode, band), &hermite_for(&phi, ctx)?)?;
        Ok(Outcome::value(json!({
            "phi": phi,
            "band": [band.lo(), band.hi()],
            "set": p.raw("set"),
            "value": r.value,
            "best_index": r.best_index,
            "best_policy": r.best_policy,
            "candidate_values": r.candidate_values,
        })))
    }
}

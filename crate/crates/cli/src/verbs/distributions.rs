//! `maximal` and `semignormal`: one-distribution sublinear expectations.

use clap::Arg;
use serde_json::json;

use sublinear::maximal::{lower_expectation as maximal_lower, maximal_expectation};
use sublinear::semignormal::{lower_expectation, upper_expectation, SemiGNormal, SigmaSearch};
use sublinear::{MaximalDist, Result};

use super::hermite_for;
use crate::registry::{band_arg, flag, phi_arg, required, usage_error, Outcome, Params, RunContext, Verb};

pub struct Maximal;

fn parse_support(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(';')
        .map(|pair| {
            let (a, b) = pair
                .split_once(',')
                .ok_or_else(|| usage_error(format!("--support interval '{pair}' must be lo,hi")))?;
            let lo = a.trim().parse::<f64>().map_err(|_| usage_error(format!("bad number '{a}'")))?;
            let hi = b.trim().parse::<f64>().map_err(|_| usage_error(format!("bad number '{b}'")))?;
            Ok((lo, hi))
        })
        .collect()
}

impl Verb for Maximal {
    fn name(&self) -> &'static str {
        "maximal"
    }

    fn about(&self) -> &'static str {
        "Upper and lower expectation of a maximal distribution on a rectangle"
    }

    fn args(&self) -> Vec<Arg> {
        vec![phi_arg(), required("support", "support rectangle lo,hi[;lo,hi...]")]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let phi = p.phi()?;
        let dist = MaximalDist::rectangle(parse_support(p.raw("support").unwrap_or_default())?)?;
        let opts = ctx.numerics.maximal();
        let up = maximal_expectation(&dist, &phi, &opts)?;
        let down = maximal_lower(&dist, &phi, &opts)?;
        Ok(Outcome::value(json!({
            "phi": phi,
            "upper": { "value": up.value, "argmax": up.argmax },
            "lower": { "value": down.value, "argmin": down.argmax },
        })))
    }
}

pub struct SemiNormal;

impl Verb for SemiNormal {
    fn name(&self) -> &'static str {
        "semignormal"
    }

    fn about(&self) -> &'static str {
        "Upper and lower expectation of a semi-G-normal variable"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            phi_arg(),
            band_arg(),
            flag("no-shortcut", "search σ even when a convexity tag fixes the endpoint"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let phi = p.phi()?;
        let band = p.band()?;
        let w = SemiGNormal::new(band);
        let rule = hermite_for(&phi, ctx)?;
        let search = SigmaSearch {
            shortcut: !p.flag("no-shortcut"),
            ..ctx.numerics.sigma_search()
        };
        let up = upper_expectation(&w, &phi, &rule, &search)?;
        let down = lower_expectation(&w, &phi, &rule, &search)?;
        Ok(Outcome::value(json!({
            "phi": phi,
            "band": [band.lo(), band.hi()],
            "convexity": format!("{:?}", phi.convexity()),
            "upper": { "value": up.value, "argmax_sigma": up.argmax_sigma },
            "lower": { "value": down.value, "argmin_sigma": down.argmax_sigma },
        })))
    }
}

//! `capacity` and `robust-ci`: upper probabilities and worst-case intervals.

use clap::Arg;
use serde_json::json;

use sublinear::capacity::{
    coverage_simulation, extremal_policy, policy_by_name, robust_critical_value, weighted_sum_capacity,
    CapacityCurve, ConfidenceQuery, Family, POLICY_NAMES,
};
use sublinear::kernel::{std_normal_quantile, RngStream};
use sublinear::semignormal::SemiGNormal;
use sublinear::Result;

use super::csv_text;
use crate::registry::{band_arg, opt, usage_error, with_default, Outcome, Params, RunContext, Verb};

pub struct Capacity;

impl Verb for Capacity {
    fn name(&self) -> &'static str {
        "capacity"
    }

    fn about(&self) -> &'static str {
        "Upper/lower CDF curve of a semi-G-normal variable, or P(|Σ aᵢWᵢ| > c) with --c"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            band_arg(),
            with_default("thresholds", "-4:4:81", "curve thresholds: list or a:b:n"),
            opt("c", "threshold for the weighted-sum upper probability"),
            with_default("weights", "1", "weights a1,...,an for --c"),
            with_default("family", "S_n", "S_n (constant σ) or L_n (feedback σ)"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let band = p.band()?;
        if let Some(c) = p.parse_opt::<f64>("c")? {
            let family: Family = p.parse("family")?;
            let query = ConfidenceQuery::new(p.list("weights")?, band, 0.05, family)?;
            let e = weighted_sum_capacity(&query, c, &ctx.numerics.capacity())?;
            return Ok(Outcome::value(json!({
                "family": family.to_string(),
                "weights": query.weights,
                "estimate": e,
            })));
        }
        let curve = CapacityCurve::semignormal(&SemiGNormal::new(band), &p.list("thresholds")?)?;
        let csv = csv_text(|buf| curve.write_csv(buf))?;
        Ok(Outcome::value(json!({ "band": [band.lo(), band.hi()], "curve": curve })).with_table(csv))
    }
}

pub struct RobustCi;

impl Verb for RobustCi {
    fn name(&self) -> &'static str {
        "robust-ci"
    }

    fn about(&self) -> &'static str {
        "Robust critical value for a slope interval, with optional coverage simulation"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            band_arg(),
            opt("design", "design points x1,...,xn (slope weights are derived)"),
            opt("weights", "explicit weights a1,...,an instead of a design"),
            with_default("alpha", "0.05", "nominal level"),
            with_default("family", "L_n", "S_n or L_n"),
            with_default("coverage-reps", "0", "replications per policy (0 skips the simulation)"),
            with_default("policies", "all", "comma-separated policy names or all"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let band = p.band()?;
        let alpha: f64 = p.parse("alpha")?;
        let family: Family = p.parse("family")?;
        let query = match (p.raw("design"), p.raw("weights")) {
            (Some(_), None) => ConfidenceQuery::from_design(&p.list("design")?, band, alpha, family)?,
            (None, Some(_)) => ConfidenceQuery::new(p.list("weights")?, band, alpha, family)?,
            _ => return Err(usage_error("give exactly one of --design and --weights")),
        };
        let cfg = ctx.numerics.capacity();
        let cv = robust_critical_value(&query, &cfg)?;
        let z = std_normal_quantile(1.0 - alpha / 2.0)?;
        let mut result = json!({
            "family": family.to_string(),
            "alpha": alpha,
            "weights_norm": query.norm(),
            "critical_value": cv,
            "naive_lo_c": band.lo() * query.norm() * z,
            "naive_hi_c": band.hi() * query.norm() * z,
        });
        let reps = p.count("coverage-reps")?;
        if reps == 0 {
            return Ok(Outcome::value(result));
        }
        let names: Vec<String> = match p.raw("policies").unwrap_or("all") {
            "all" => POLICY_NAMES.iter().map(|s| s.to_string()).collect(),
            list => list.split(',').map(|s| s.trim().to_owned()).collect(),
        };
        let replay = if names.iter().any(|n| n == "dp-replay") {
            Some(extremal_policy(&query, cv.c, &cfg)?)
        } else {
            None
        };
        let policies = names
            .iter()
            .map(|n| policy_by_name(n, band, replay.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let rows = coverage_simulation(&query, cv.c, &policies, reps, &RngStream::new(ctx.seed, 0))?;
        let mut csv = String::from("policy,coverage,std_error,reps\n");
        for r in &rows {
            csv.push_str(&format!("{},{},{},{}\n", r.policy, r.coverage, r.std_error, r.reps));
        }
        result["coverage"] = json!(rows);
        Ok(Outcome::value(result).with_table(csv))
    }
}

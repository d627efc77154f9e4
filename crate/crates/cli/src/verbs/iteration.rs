//! Backward recursion, the G-heat solver and the limit-theorem experiments.

use std::fs;

use clap::Arg;
use serde_json::json;

use sublinear::clt::{
    errors_nonincreasing, gnormal_clt_check, max_mean_demo, semi_g_clt_lhs, third_moment_emergence, NoiseLaw,
};
use sublinear::dp::{gem_weighted_sum, gnormal_expectation_iterative, policy_replay, IterationSchedule, SigmaSet};
use sublinear::kernel::RngStream;
use sublinear::pde::{convexity_collapse_check, solve_gheat, write_csv, PdeConfig};
use sublinear::semignormal::{upper_expectation, SemiGNormal};
use sublinear::{Result, TestFunction};

use super::{csv_text, hermite_for};
use crate::registry::{
    band_arg, flag, opt, phi_arg, required, usage_error, with_default, Outcome, Params, RunContext, Verb,
};

fn write_policy(p: &Params<'_>, json: String) -> Result<Option<String>> {
    match p.raw("policy-out") {
        Some(path) => {
            fs::write(path, json).map_err(|e| usage_error(format!("cannot write policy to {path}: {e}")))?;
            Ok(Some(path.to_owned()))
        }
        None => Ok(None),
    }
}

pub struct GnormalIter;

impl Verb for GnormalIter {
    fn name(&self) -> &'static str {
        "gnormal-iter"
    }

    fn about(&self) -> &'static str {
        "G-normal expectation by n steps of the backward recursion"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            phi_arg(),
            band_arg(),
            with_default("n", "100", "number of steps"),
            with_default("sigma-set", "two-point", "two-point, three-point or grid:M"),
            opt("policy-out", "write the maximizing σ policy as JSON"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let phi = p.phi()?;
        let band = p.band()?;
        let n = p.count("n")?;
        let schedule = IterationSchedule {
            sigma_set: p.parse("sigma-set")?,
            grid: ctx.numerics.grid(),
            ..IterationSchedule::new(n)
        };
        let out = gnormal_expectation_iterative(&phi, band, &schedule)?;
        let policy_file = write_policy(p, out.policy.to_json())?;
        Ok(Outcome::value(json!({
            "phi": phi,
            "band": [band.lo(), band.hi()],
            "n": n,
            "value": out.value,
            "policy_file": policy_file,
        })))
    }
}

pub struct Gem;

impl Verb for Gem {
    fn name(&self) -> &'static str {
        "gem"
    }

    fn about(&self) -> &'static str {
        "Sequential expectation of φ(Σ aᵢWᵢ) by backward recursion, with optional replay"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            phi_arg(),
            band_arg(),
            required("weights", "weights a1,...,an"),
            with_default("sigma-set", "grid:9", "two-point, three-point or grid:M"),
            with_default("replay", "0", "Monte Carlo samples replaying the maximizing policy"),
            opt("policy-out", "write the maximizing σ policy as JSON"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let phi = p.phi()?;
        let band = p.band()?;
        let weights = p.list("weights")?;
        let sigma_set: SigmaSet = p.parse("sigma-set")?;
        let out = gem_weighted_sum(&phi, band, &weights, sigma_set, &ctx.numerics.grid())?;
        let samples = p.count("replay")?;
        let replay = if samples > 0 {
            let mc = policy_replay(&out.policy, &weights, band, &phi, samples, &RngStream::new(ctx.seed, 0))?;
            Some(json!({ "mean": mc.mean, "std_error": mc.std_error, "samples": mc.samples }))
        } else {
            None
        };
        let policy_file = write_policy(p, out.policy.to_json())?;
        Ok(Outcome::value(json!({
            "phi": phi,
            "band": [band.lo(), band.hi()],
            "weights": weights,
            "value": out.value,
            "replay": replay,
            "policy_file": policy_file,
        })))
    }
}

pub struct Pde;

impl Verb for Pde {
    fn name(&self) -> &'static str {
        "pde"
    }

    fn about(&self) -> &'static str {
        "Explicit finite-difference solution of the G-heat equation"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            phi_arg(),
            band_arg(),
            with_default("t", "1", "final time"),
            opt("cells", "cells on each side of zero"),
            opt("cfl", "fraction of the stability limit used as time step"),
            opt("dt", "explicit time step (checked against the stability limit)"),
            flag("collapse", "also compare with the classical heat solution at the collapsed σ"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let phi = p.phi()?;
        let band = p.band()?;
        let t: f64 = p.parse("t")?;
        let cells = match p.raw("cells") {
            Some(_) => p.count("cells")?,
            None => ctx.numerics.pde_cells_per_side,
        };
        let cfl = p.parse_opt("cfl")?.unwrap_or(ctx.numerics.cfl_safety);
        let mut cfg = PdeConfig::with_halfwidth(band, t, ctx.numerics.pde_halfwidth_sigmas, cells, cfl)?;
        if let Some(dt) = p.parse_opt::<f64>("dt")? {
            cfg.dt = dt;
        }
        let slice = solve_gheat(&phi, &cfg)?;
        let collapse = if p.flag("collapse") {
            Some(convexity_collapse_check(&phi, &cfg)?)
        } else {
            None
        };
        let csv = csv_text(|buf| write_csv(&slice, buf))?;
        Ok(Outcome::value(json!({
            "phi": phi,
            "band": [band.lo(), band.hi()],
            "t": t,
            "value_at_zero": slice.values()[cells],
            "dx": cfg.dx,
            "dt": cfg.dt,
            "steps": cfg.steps()?,
            "x_halfwidth": cfg.x_halfwidth,
            "collapse": collapse,
        }))
        .with_table(csv))
    }
}

pub struct Clt;

impl Verb for Clt {
    fn name(&self) -> &'static str {
        "clt"
    }

    fn about(&self) -> &'static str {
        "Limit-theorem experiments: gnormal (recursion vs G-heat), semi (i.i.d. noise), third-moment"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            with_default("kind", "gnormal", "gnormal, semi or third-moment"),
            with_default("phi", "x3", "scalar test function"),
            band_arg(),
            with_default("n-list", "10,40,160", "step counts for the gnormal kind"),
            with_default("n", "10", "sample size for the semi and third-moment kinds"),
            with_default("noise", "normal", "normal, rademacher or uniform"),
            flag("corners", "search the whole σ box instead of constant vectors"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let band = p.band()?;
        let cfg = ctx.numerics.clt();
        match p.raw("kind").unwrap_or("gnormal") {
            "gnormal" => {
                let phi = p.phi()?;
                let rows = gnormal_clt_check(&phi, band, &p.counts("n-list")?, &cfg)?;
                let mut csv = String::from("n,dp_value,pde_value,abs_error\n");
                for r in &rows {
                    csv.push_str(&format!("{},{},{},{}\n", r.n, r.dp_value, r.pde_value, r.abs_error));
                }
                Ok(Outcome::value(json!({
                    "kind": "gnormal",
                    "phi": phi,
                    "rows": rows,
                    "errors_nonincreasing": errors_nonincreasing(&rows, ctx.tolerances.trend_slack),
                }))
                .with_table(csv))
            }
            "semi" => {
                let phi = p.phi()?;
                let n = p.count("n")?;
                let noise: NoiseLaw = p.parse("noise")?;
                let lhs = semi_g_clt_lhs(&phi, band, n, noise, p.flag("corners"), &cfg)?;
                let limit = upper_expectation(&SemiGNormal::new(band), &phi, &hermite_for(&phi, ctx)?, &cfg.sigma)?;
                Ok(Outcome::value(json!({
                    "kind": "semi",
                    "phi": phi,
                    "n": n,
                    "noise": noise.to_string(),
                    "value": lhs.value,
                    "argmax": lhs.argmax,
                    "limit": limit.value,
                    "abs_error": (lhs.value - limit.value).abs(),
                })))
            }
            "third-moment" => {
                let n = p.count("n")?;
                let (semi, seq) = third_moment_emergence(band, n, &ctx.numerics.joint())?;
                Ok(Outcome::value(json!({
                    "kind": "third-moment",
                    "n": n,
                    "semi_sequential": semi,
                    "sequential": seq,
                })))
            }
            other => Err(usage_error(format!(
                "unknown --kind '{other}' (expected gnormal, semi or third-moment)"
            ))),
        }
    }
}

pub struct DemoNotGnormal;

impl Verb for DemoNotGnormal {
    fn name(&self) -> &'static str {
        "demo-notgnormal"
    }

    fn about(&self) -> &'static str {
        "Max-mean estimate over σ blocks, compared with semi-G-normal and G-normal values"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            with_default("phi", "x3", "scalar test function"),
            with_default("band", "0.5,1", "volatility band lo,hi"),
            with_default("blocks", "17", "number of σ blocks"),
            with_default("samples", "100000", "samples per block"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let phi: TestFunction = p.phi()?;
        let band = p.band()?;
        let r = max_mean_demo(
            &phi,
            band,
            p.count("blocks")?,
            p.count("samples")?,
            &RngStream::new(ctx.seed, 0),
            &ctx.numerics.clt(),
        )?;
        let mut csv = String::from("sigma,mean,std_error\n");
        for i in 0..r.block_sigmas.len() {
            csv.push_str(&format!("{},{},{}\n", r.block_sigmas[i], r.block_means[i], r.block_std_errors[i]));
        }
        let summary = json!({
            "phi": phi,
            "estimate": r.estimate,
            "std_error": r.std_error,
            "semi_value": r.semi_value,
            "gnormal_value": r.gnormal_value,
            "se_from_semi": r.distance_to_semi_in_se(),
            "se_from_gnormal": r.distance_to_gnormal_in_se(),
            "report": r,
        });
        Ok(Outcome::value(summary).with_table(csv))
    }
}


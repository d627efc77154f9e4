//! `verify`: the acceptance suite.

use clap::Arg;
use serde_json::json;

use sublinear::verify::{run_suite, VerifyContext};
use sublinear::Result;

use crate::registry::{flag, opt, usage_error, Outcome, Params, RunContext, Verb};

pub struct Verify;

impl Verb for Verify {
    fn name(&self) -> &'static str {
        "verify"
    }

    fn about(&self) -> &'static str {
        "Run the acceptance criteria; exits nonzero if any fails"
    }

    fn args(&self) -> Vec<Arg> {
        vec![
            opt("only", "comma-separated criterion numbers (default: all)"),
            flag("no-budgets", "do not fail criteria that exceed their time budget"),
        ]
    }

    fn run(&self, p: &Params<'_>, ctx: &RunContext) -> Result<Outcome> {
        let ids: Vec<u8> = match p.raw("only") {
            Some(_) => p
                .counts("only")?
                .into_iter()
                .map(|i| u8::try_from(i).ok().filter(|i| (1..=14).contains(i)))
                .collect::<Option<_>>()
                .ok_or_else(|| usage_error("--only takes criterion numbers 1 to 14"))?,
            None => Vec::new(),
        };
        let vctx = VerifyContext {
            enforce_budgets: !p.flag("no-budgets"),
            ..VerifyContext::new(&ctx.numerics, ctx.tolerances.clone(), ctx.seed)
        };
        let reports = run_suite(&vctx, &ids);
        let passed = reports.iter().all(|r| r.passed);
        let criteria: Vec<_> = reports
            .iter()
            .map(|r| json!({ "id": r.id, "title": r.title, "passed": r.numeric_passed, "detail": r.detail }))
            .collect();
        let timings: Vec<_> = reports
            .iter()
            .map(|r| json!({ "id": r.id, "elapsed_secs": r.elapsed_secs, "budget_secs": r.budget_secs, "passed": r.passed }))
            .collect();
        let mut report: Vec<String> = reports.iter().map(|r| r.to_string()).collect();
        report.push(format!(
            "{} of {} criteria passed",
            reports.iter().filter(|r| r.passed).count(),
            reports.len()
        ));
        Ok(Outcome {
            result: json!({ "criteria": criteria }),
            table: None,
            diagnostics: Some(json!({ "timings": timings, "passed": passed })),
            report,
            passed,
        })
    }
}

//! The verb registry. Each command is a `Verb` trait object that declares its
//! own arguments and turns parsed matches into a JSON result.

use std::fmt::Display;
use std::str::FromStr;

use clap::{Arg, ArgAction, ArgMatches};
use serde_json::{Map, Value};

use sublinear::config::{Numerics, Tolerances};
use sublinear::{Error, Result, TestFunction, VarianceBand};

use crate::verbs;

pub struct RunContext {
    pub seed: u64,
    pub numerics: Numerics,
    pub tolerances: Tolerances,
}

pub struct Outcome {
    pub result: Value,
    /// CSV text for curves and tables.
    pub table: Option<String>,
    /// Run-dependent details (timings) kept out of the result file.
    pub diagnostics: Option<Value>,
    /// Human-readable lines for stderr.
    pub report: Vec<String>,
    pub passed: bool,
}

impl Outcome {
    pub fn value(result: Value) -> Self {
        Self {
            result,
            table: None,
            diagnostics: None,
            report: Vec::new(),
            passed: true,
        }
    }

    pub fn with_table(mut self, csv: String) -> Self {
        self.table = Some(csv);
        self
    }
}

pub trait Verb: Sync {
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    fn args(&self) -> Vec<Arg>;
    fn run(&self, params: &Params<'_>, ctx: &RunContext) -> Result<Outcome>;
}

pub fn registry() -> &'static [&'static dyn Verb] {
    verbs::ALL
}

pub fn find(name: &str) -> Option<&'static dyn Verb> {
    registry().iter().copied().find(|v| v.name() == name)
}

pub fn usage_error(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Typed access to a verb's matches. Every value arrives as a string and is
/// parsed here, so bad values become usage errors.
pub struct Params<'a> {
    matches: &'a ArgMatches,
}

impl<'a> Params<'a> {
    pub fn new(matches: &'a ArgMatches) -> Self {
        Self { matches }
    }

    pub fn raw(&self, id: &str) -> Option<&'a str> {
        self.matches.get_one::<String>(id).map(String::as_str)
    }

    fn required(&self, id: &str) -> Result<&'a str> {
        self.raw(id).ok_or_else(|| usage_error(format!("--{id} is required")))
    }

    pub fn flag(&self, id: &str) -> bool {
        self.matches.get_flag(id)
    }

    pub fn parse<T>(&self, id: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let s = self.required(id)?;
        s.trim()
            .parse()
            .map_err(|e| usage_error(format!("--{id} '{s}': {e}")))
    }

    pub fn parse_opt<T>(&self, id: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.raw(id) {
            Some(_) => self.parse(id).map(Some),
            None => Ok(None),
        }
    }

    /// A nonnegative integer, accepting `1e5` style input.
    pub fn count(&self, id: &str) -> Result<usize> {
        let v: f64 = self.parse(id)?;
        if !(v >= 0.0 && v.fract() == 0.0 && v <= 1e12) {
            return Err(usage_error(format!("--{id} must be a nonnegative integer, got {v}")));
        }
        Ok(v as usize)
    }

    pub fn list(&self, id: &str) -> Result<Vec<f64>> {
        parse_list(self.required(id)?).map_err(|e| usage_error(format!("--{id}: {e}")))
    }

    pub fn counts(&self, id: &str) -> Result<Vec<usize>> {
        self.list(id)?
            .into_iter()
            .map(|v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(usage_error(format!("--{id} entries must be positive integers, got {v}")))
                }
            })
            .collect()
    }

    pub fn phi(&self) -> Result<TestFunction> {
        TestFunction::parse(self.required("phi")?)
    }

    pub fn band(&self) -> Result<VarianceBand> {
        self.parse("band")
    }

    /// Every declared argument with its resolved value.
    pub fn resolved(&self, args: &[Arg]) -> Value {
        let mut out = Map::new();
        for arg in args {
            let id = arg.get_id().as_str();
            let v = match arg.get_action() {
                ArgAction::SetTrue => Value::Bool(self.matches.get_flag(id)),
                _ => self.raw(id).map_or(Value::Null, |s| Value::String(s.to_owned())),
            };
            out.insert(id.to_owned(), v);
        }
        Value::Object(out)
    }
}

/// Comma-separated numbers, or `a:b:n` for `n` evenly spaced points.
pub fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let s = s.trim();
    if let [a, b, n] = s.split(':').collect::<Vec<_>>()[..] {
        let a: f64 = a.trim().parse().map_err(|_| format!("bad range start '{a}'"))?;
        let b: f64 = b.trim().parse().map_err(|_| format!("bad range end '{b}'"))?;
        let n: usize = n.trim().parse().map_err(|_| format!("bad point count '{n}'"))?;
        if n < 2 {
            return Err("a range needs at least two points".into());
        }
        return Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect());
    }
    let values = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}'")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(format!("expected finite numbers, got '{s}'"));
    }
    Ok(values)
}

pub fn opt(id: &'static str, help: &'static str) -> Arg {
    Arg::new(id).long(id).help(help).allow_hyphen_values(true)
}

pub fn required(id: &'static str, help: &'static str) -> Arg {
    opt(id, help).required(true)
}

pub fn with_default(id: &'static str, default: &'static str, help: &'static str) -> Arg {
    opt(id, help).default_value(default)
}

pub fn flag(id: &'static str, help: &'static str) -> Arg {
    Arg::new(id).long(id).help(help).action(ArgAction::SetTrue)
}

pub fn phi_arg() -> Arg {
    required("phi", "test function: shortcut (x3, call:K, absind:c, (x1+x2)^3) or JSON")
}

pub fn band_arg() -> Arg {
    required("band", "volatility band lo,hi")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_list("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_list("0:1:1").is_err());
        assert!(parse_list("a,b").is_err());
    }

    #[test]
    fn verb_names_are_unique() {
        let mut names: Vec<_> = registry().iter().map(|v| v.name()).collect();
        let n = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), n);
        assert_eq!(n, 12);
        assert!(find("gnormal-iter").is_some());
        assert!(find("nope").is_none());
    }
}

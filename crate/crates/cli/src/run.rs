//! Argument handling, run configuration files, result files and manifests.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Command};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use sublinear::config::{Numerics, Tolerances};
use sublinear::verify::DEFAULT_SEED;

use crate::registry::{find, registry, Outcome, Params, RunContext};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const VALUE_GLOBALS: [&str; 4] = ["--output", "--seed", "--threads", "--config"];

#[derive(Args, Debug, Default)]
pub struct GlobalOpts {
    /// Result file (JSON); tables go next to it as CSV, the manifest to <output>.manifest.json
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run configuration file (JSON)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// A run as read from `--config`; command-line values take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub numerics: Numerics,
}

/// The fully resolved configuration echoed into the manifest.
#[derive(Debug, Serialize)]
struct Resolved<'a> {
    command: &'a str,
    params: Value,
    output: Option<&'a Path>,
    seed: u64,
    threads: Option<usize>,
    tolerances: &'a Tolerances,
    numerics: &'a Numerics,
}

pub fn command() -> Command {
    let mut cmd = Command::new("sublinear")
        .version(sublinear::VERSION)
        .about("Sublinear expectations: maximal, semi-G-normal and G-normal computations");
    cmd = GlobalOpts::augment_args(cmd);
    for verb in registry() {
        cmd = cmd.subcommand(
            Command::new(verb.name())
                .about(verb.about())
                .args(verb.args())
                .args_override_self(true),
        );
    }
    cmd
}

fn global_opts(m: &clap::ArgMatches) -> GlobalOpts {
    GlobalOpts {
        output: m.get_one::<PathBuf>("output").cloned(),
        seed: m.get_one::<u64>("seed").copied(),
        threads: m.get_one::<usize>("threads").copied(),
        config: m.get_one::<PathBuf>("config").cloned(),
    }
}

/// Position of the verb token, skipping values of global options.
fn verb_position(argv: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let tok = argv[i].to_string_lossy();
        if VALUE_GLOBALS.contains(&tok.as_ref()) {
            i += 2;
            continue;
        }
        if find(&tok).is_some() {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn param_tokens(params: &Map<String, Value>) -> Vec<OsString> {
    let mut out = Vec::new();
    for (k, v) in params {
        let flag = OsString::from(format!("--{k}"));
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => out.push(flag),
            Value::String(s) => out.extend([flag, s.into()]),
            Value::Number(n) => out.extend([flag, n.to_string().into()]),
            Value::Array(items) => {
                let joined: Vec<String> = items
                    .iter()
                    .map(|x| x.as_str().map_or_else(|| x.to_string(), str::to_owned))
                    .collect();
                out.extend([flag, joined.join(",").into()]);
            }
            Value::Object(_) => out.extend([flag, v.to_string().into()]),
        }
    }
    out
}

fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
}

fn usage(msg: &str) -> i32 {
    eprintln!("error: {msg}");
    eprintln!("{}", command().render_usage());
    EXIT_USAGE
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn table_path(output: &Path) -> PathBuf {
    let p = output.with_extension("csv");
    if p == output {
        PathBuf::from(format!("{}.table.csv", output.display()))
    } else {
        p
    }
}

fn manifest_path(output: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", output.display()))
}

/// Runs one command and returns the process exit code.
pub fn run(argv: Vec<OsString>) -> i32 {
    let strict = |args: &[OsString]| {
        command().try_get_matches_from(args).map_err(|e| {
            let _ = e.print();
            e.exit_code()
        })
    };
    // Lenient pass: only the config path and the verb name are needed here,
    // since config params may still supply required arguments.
    let first = match command().ignore_errors(true).try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(_) => return strict(&argv).err().unwrap_or(EXIT_USAGE),
    };
    let config = match first.get_one::<PathBuf>("config") {
        Some(path) => match load_config(path) {
            Ok(c) => c,
            Err(msg) => return usage(&msg),
        },
        None => RunConfig::default(),
    };
    let verb_name = match (first.subcommand_name(), config.command.as_deref()) {
        (Some(a), Some(b)) if a != b => {
            return usage(&format!("command '{a}' conflicts with '{b}' in the config file"));
        }
        (Some(a), _) => a.to_owned(),
        (None, Some(b)) => b.to_owned(),
        (None, None) => {
            return match strict(&argv) {
                Ok(_) => usage("no command given"),
                Err(code) => code,
            }
        }
    };
    let Some(verb) = find(&verb_name) else {
        return usage(&format!("unknown command '{verb_name}'"));
    };

    let mut full: Vec<OsString> = Vec::new();
    match verb_position(&argv) {
        Some(i) => {
            full.extend_from_slice(&argv[..i]);
            full.push(verb_name.clone().into());
            full.extend(param_tokens(&config.params));
            full.extend_from_slice(&argv[i + 1..]);
        }
        None => {
            full.extend_from_slice(&argv);
            full.push(verb_name.clone().into());
            full.extend(param_tokens(&config.params));
        }
    }
    let matches = match strict(&full) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let cli = global_opts(&matches);
    let sub = matches.subcommand_matches(&verb_name).expect("verb matched");

    let output = cli.output.or(config.output.clone());
    let seed = cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    let threads = cli.threads.or(config.threads);
    if let Some(n) = threads {
        if n == 0 {
            return usage("--threads must be positive");
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let params = Params::new(sub);
    let resolved = Resolved {
        command: verb.name(),
        params: params.resolved(&verb.args()),
        output: output.as_deref(),
        seed,
        threads,
        tolerances: &config.tolerances,
        numerics: &config.numerics,
    };
    let ctx = RunContext {
        seed,
        numerics: config.numerics.clone(),
        tolerances: config.tolerances.clone(),
    };

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let outcome = verb.run(&params, &ctx);
    let wall = clock.elapsed().as_secs_f64();

    let (code, error, written) = match outcome {
        Ok(out) => match emit(&out, output.as_deref()) {
            Ok(files) => (if out.passed { EXIT_OK } else { EXIT_NUMERIC }, None, (files, out.diagnostics)),
            Err(msg) => {
                eprintln!("error: {msg}");
                (EXIT_NUMERIC, Some(msg), (Vec::new(), out.diagnostics))
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_usage() {
                let mut sub_cmd = command();
                if let Some(s) = sub_cmd.find_subcommand_mut(verb.name()) {
                    eprintln!("{}", s.render_usage());
                }
                EXIT_USAGE
            } else {
                EXIT_NUMERIC
            };
            (code, Some(e.to_string()), (Vec::new(), None))
        }
    };

    let manifest = json!({
        "config": resolved,
        "versions": { "sublinear-core": sublinear::VERSION, "sublinear-cli": env!("CARGO_PKG_VERSION") },
        "seed": seed,
        "started_unix_secs": started,
        "wall_time_secs": wall,
        "exit_code": code,
        "error": error,
        "outputs": written.0,
        "diagnostics": written.1,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    match output.as_deref() {
        Some(out) => {
            if let Err(msg) = write_file(&manifest_path(out), &(text + "\n")) {
                eprintln!("error: {msg}");
                return EXIT_NUMERIC.max(code);
            }
        }
        None => eprintln!("manifest: {}", serde_json::to_string(&manifest).expect("manifest serializes")),
    }
    code
}

fn emit(out: &Outcome, output: Option<&Path>) -> Result<Vec<String>, String> {
    for line in &out.report {
        eprintln!("{line}");
    }
    let body = serde_json::to_string_pretty(&out.result).map_err(|e| e.to_string())? + "\n";
    let Some(path) = output else {
        print!("{body}");
        return Ok(Vec::new());
    };
    write_file(path, &body)?;
    let mut files = vec![path.display().to_string()];
    if let Some(csv) = &out.table {
        let t = table_path(path);
        write_file(&t, csv)?;
        files.push(t.display().to_string());
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"comand": "pde"}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"command": "pde", "tolerances": {"swap": 1e-9}}"#).unwrap();
        assert_eq!(c.tolerances.swap, 1e-9);
        assert_eq!(c.numerics, Numerics::default());
    }

    #[test]
    fn verb_is_found_after_global_values() {
        assert_eq!(verb_position(&os(&["bin", "--seed", "3", "pde", "--t", "1"])), Some(3));
        assert_eq!(verb_position(&os(&["bin", "--output", "pde", "joint"])), Some(3));
        assert_eq!(verb_position(&os(&["bin", "--seed", "3"])), None);
    }

    #[test]
    fn params_become_flags() {
        let params: Map<String, Value> =
            serde_json::from_str(r#"{"band": "1,2", "n": 10, "weights": [1, 2], "corners": true, "x": false}"#).unwrap();
        let toks: Vec<String> = param_tokens(&params).iter().map(|t| t.to_string_lossy().into_owned()).collect();
        assert_eq!(toks, ["--band", "1,2", "--corners", "--n", "10", "--weights", "1,2"]);
    }

    #[test]
    fn side_files() {
        assert_eq!(table_path(Path::new("out/r.json")), PathBuf::from("out/r.csv"));
        assert_eq!(table_path(Path::new("r.csv")), PathBuf::from("r.csv.table.csv"));
        assert_eq!(manifest_path(Path::new("r.json")), PathBuf::from("r.json.manifest.json"));
    }
}

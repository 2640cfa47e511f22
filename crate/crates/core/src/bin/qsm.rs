//! Scenario runner: `qsm run <config> [--seed N] [--out DIR] [--dt X]
//! [--horizon X] [--quiet]`.
//!
//! Exit codes: 0 success, 1 a validation task failed, 2 usage/parse errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use quantum_semimarkov::scenario::{run, Scenario};

const USAGE: &str =
    "usage: qsm run <config-file> [--seed N] [--out DIR] [--dt X] [--horizon X] [--quiet]";

struct Overrides {
    seed: Option<u64>,
    out: Option<PathBuf>,
    dt: Option<f64>,
    horizon: Option<f64>,
    quiet: bool,
}

fn parse_args(args: &[String]) -> Result<(PathBuf, Overrides), String> {
    if args.first().map(String::as_str) != Some("run") {
        return Err(USAGE.to_string());
    }
    let Some(path) = args.get(1) else {
        return Err(USAGE.to_string());
    };
    let mut overrides = Overrides { seed: None, out: None, dt: None, horizon: None, quiet: false };
    let mut it = args[2..].iter();
    while let Some(flag) = it.next() {
        match flag.as_str() {
            "--quiet" => overrides.quiet = true,
            "--seed" | "--out" | "--dt" | "--horizon" => {
                let Some(value) = it.next() else {
                    return Err(format!("{flag} needs a value\n{USAGE}"));
                };
                match flag.as_str() {
                    "--seed" => {
                        overrides.seed =
                            Some(value.parse().map_err(|_| format!("bad seed `{value}`"))?)
                    }
                    "--out" => overrides.out = Some(PathBuf::from(value)),
                    "--dt" => {
                        overrides.dt = Some(value.parse().map_err(|_| format!("bad dt `{value}`"))?)
                    }
                    "--horizon" => {
                        overrides.horizon =
                            Some(value.parse().map_err(|_| format!("bad horizon `{value}`"))?)
                    }
                    _ => unreachable!(),
                }
            }
            other => return Err(format!("unknown flag `{other}`\n{USAGE}")),
        }
    }
    Ok((PathBuf::from(path), overrides))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (path, overrides) = match parse_args(&args) {
        Ok(parsed) => parsed,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    let mut scenario = match Scenario::parse_file(Path::new(&path)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = overrides.seed {
        scenario.seed = seed;
    }
    if let Some(out) = overrides.out {
        scenario.out_dir = out;
    }
    if let Some(dt) = overrides.dt {
        scenario.dt = dt;
    }
    if let Some(horizon) = overrides.horizon {
        scenario.horizon = horizon;
    }
    scenario.quiet = overrides.quiet;

    match run(&scenario) {
        Ok(report) => {
            if !scenario.quiet {
                print!("{}", report.render());
            }
            if report.failed() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(1)
        }
    }
}

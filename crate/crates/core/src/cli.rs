//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or runtime error, 2 bound violation,
//! 3 I/O error. Every error goes to standard error as a single line starting
//! with `error[usage]:`, `error[runtime]:`, `error[io]:` or `error[violation]:`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::bounds::{find_bound, NamedBound, NAMED_BOUNDS};
use crate::error::Error;
use crate::estimators::Status;
use crate::experiments::{self, apply_config, parse_config, write_report, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "concentra",
    version,
    about = "Monte Carlo checks of concentration bounds for additive functionals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the registered scenario names, one per line.
    List,
    /// Run a scenario and write its report.
    Run {
        name: String,
        #[arg(long)]
        trials: Option<u64>,
        /// Master seed, a decimal unsigned 64-bit integer.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// INI file with per-scenario overrides, applied before the flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads; 0 uses every core. Output does not depend on it.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Evaluate a named bound and print it as JSON.
    Bound {
        name: String,
        /// Parameter as `key=value`; repeat for each parameter.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } => Failure::Io(msg),
            Error::InvalidParameter { .. } | Error::UnknownScenario(_) | Error::UnknownBound(_) | Error::Config(_) => {
                Failure::Usage(msg)
            }
            Error::NonFinite { .. }
            | Error::Quadrature { .. }
            | Error::TooManyAborts { .. }
            | Error::Csv(_)
            | Error::Json(_) => Failure::Runtime(msg),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return EXIT_OK;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            let _ = writeln!(err, "error[usage]: {}", one_line(first));
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let (tag, msg, code) = match f {
                Failure::Usage(m) => ("usage", m, EXIT_USAGE),
                Failure::Runtime(m) => ("runtime", m, EXIT_USAGE),
                Failure::Io(m) => ("io", m, EXIT_IO),
            };
            let _ = writeln!(err, "error[{tag}]: {}", one_line(&msg));
            code
        }
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Io(format!("<stdout>: {e}"))
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::List => {
            for info in experiments::scenario_infos() {
                writeln!(out, "{}", info.name).map_err(io_failure)?;
            }
            Ok(EXIT_OK)
        }
        Command::Run {
            name,
            trials,
            seed,
            dt,
            out: path,
            format,
            config,
            workers,
        } => {
            let mut spec = experiments::lookup(&name)?;
            if let Some(cfg) = config {
                apply_config(&parse_config(&cfg)?, &mut spec)?;
            }
            if let Some(n) = trials {
                spec.set("trials", n as f64)?;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(d) = dt {
                spec.set("dt", d)?;
            }
            let format = match format {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            };
            let report = experiments::run(&spec, workers)?;
            match path {
                Some(p) => write_report(&report, &p, format)?,
                None => out.write_all(report.render(format)?.as_bytes()).map_err(io_failure)?,
            }
            let violations: Vec<String> = report
                .rows
                .iter()
                .filter(|r| r.verdict == Status::Violation)
                .map(|r| r.r.to_string())
                .collect();
            if violations.is_empty() {
                Ok(EXIT_OK)
            } else {
                let _ = writeln!(
                    err,
                    "error[violation]: scenario {} exceeds its bound at R = {}",
                    report.scenario,
                    violations.join(", ")
                );
                Ok(EXIT_VIOLATION)
            }
        }
        Command::Bound { name, params } => {
            let bound = resolve_bound(&name)?;
            let mut values = BTreeMap::new();
            for kv in &params {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Failure::Usage(format!("--param `{kv}` is not of the form key=value")))?;
                let k = k.trim();
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("--param `{kv}`: `{v}` is not a number")))?;
                if values.insert(k.to_string(), v).is_some() {
                    return Err(Failure::Usage(format!("--param `{k}` given twice")));
                }
            }
            let value = bound.evaluate(&values)?;
            let json = serde_json::to_string_pretty(&value).map_err(Error::from)?;
            writeln!(out, "{json}").map_err(io_failure)?;
            Ok(EXIT_OK)
        }
    }
}

/// Looks up a bound by name, also accepting a trailing `_tail` or `_bound`.
fn resolve_bound(name: &str) -> Result<&'static NamedBound, Failure> {
    if let Ok(b) = find_bound(name) {
        return Ok(b);
    }
    for suffix in ["_tail", "_bound"] {
        if let Some(stem) = name.strip_suffix(suffix) {
            if let Ok(b) = find_bound(stem) {
                return Ok(b);
            }
        }
    }
    let known: Vec<&str> = NAMED_BOUNDS.iter().map(|b| b.name).collect();
    Err(Failure::Usage(format!(
        "unknown bound `{name}` (known: {})",
        known.join(", ")
    )))
}

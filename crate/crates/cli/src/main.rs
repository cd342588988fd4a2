mod aggregate;
mod config;
mod data;
mod output;
mod runner;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rwre::theorems::{run_check, CHECKS};
use rwre::EnvParams;

use crate::output::Sink;

#[derive(Parser)]
#[command(name = "rwre", version, about = "Random walks in balanced time-dependent random environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample paths and write the endpoint distribution as CSV.
    Simulate(data::SimulateArgs),
    /// Forward kernel on a torus, or killed on a ball.
    Kernel(data::KernelArgs),
    /// Invariant density slices on a torus.
    Rho(data::RhoArgs),
    /// Run one check and print its report.
    Verify {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(CHECKS))]
        check: String,
        #[command(flatten)]
        env: EnvArg,
        /// Geometry as a JSON object; omitted fields keep their defaults.
        #[arg(long)]
        geometry: Option<String>,
        /// Threshold override `name=value`; repeatable.
        #[arg(long = "threshold", value_parser = parse_override)]
        thresholds: Vec<(String, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every job of an experiment config.
    Run { config: PathBuf },
    /// Summarize the reports under a directory.
    Aggregate { dir: PathBuf },
}

#[derive(clap::Args)]
pub struct EnvArg {
    /// Environment as inline JSON or a path to a JSON file.
    #[arg(long)]
    env: String,
}

impl EnvArg {
    pub fn load(&self) -> Result<EnvParams, String> {
        let text = if self.env.trim_start().starts_with('{') {
            self.env.clone()
        } else {
            std::fs::read_to_string(&self.env).map_err(|e| format!("{}: {e}", self.env))?
        };
        let env: EnvParams = serde_json::from_str(&text).map_err(|e| format!("environment: {e}"))?;
        env.validate().map_err(|e| e.to_string())?;
        Ok(env)
    }
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    Ok((k.to_string(), v.parse::<f64>().map_err(|e| e.to_string())?))
}

/// Failures of a single command: bad input exits 2, a failed computation 1.
pub enum Failure {
    Usage(String),
    Compute(String),
    /// Downstream reader went away.
    Closed,
}

impl From<rwre::Error> for Failure {
    fn from(e: rwre::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            Failure::Closed
        } else {
            Failure::Compute(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => runner::run(&config),
        Command::Aggregate { dir } => aggregate::aggregate(&dir),
        other => match single(other) {
            Ok(code) => code,
            Err(Failure::Usage(msg)) => {
                eprintln!("error: {msg}");
                2
            }
            Err(Failure::Compute(msg)) => {
                eprintln!("error: {msg}");
                1
            }
            Err(Failure::Closed) => 0,
        },
    };
    ExitCode::from(code)
}

fn single(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Simulate(args) => data::simulate(args),
        Command::Kernel(args) => data::kernel(args),
        Command::Rho(args) => data::rho(args),
        Command::Verify { check, env, geometry, thresholds, out } => {
            let env = env.load().map_err(Failure::Usage)?;
            let geometry = match geometry {
                Some(g) => serde_json::from_str(&g).map_err(|e| Failure::Usage(format!("geometry: {e}")))?,
                None => serde_json::Value::Null,
            };
            let overrides: BTreeMap<String, f64> = thresholds.into_iter().collect();
            let report = run_check(&check, &env, &geometry, &overrides).map_err(|e| match e {
                rwre::Error::Param(m) => Failure::Usage(m),
                e => Failure::Compute(e.to_string()),
            })?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Compute(e.to_string()))?;
            let mut sink = Sink::open(out.as_deref())?;
            sink.line(&text)?;
            sink.finish()?;
            for c in report.failures() {
                eprintln!("{c}");
            }
            Ok(if report.pass { 0 } else { 1 })
        }
        Command::Run { .. } | Command::Aggregate { .. } => unreachable!(),
    }
}

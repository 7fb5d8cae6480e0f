//! `ccd`: validation runs, GA studies and report tables for the vehicle
//! co-design problem.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod files;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use ccd_core::ccd::Mode;
use ccd_core::sim::SpeedUnits;

/// Failure with its exit code. Usage errors (bad config, missing files,
/// bad flags) exit 2; failures while running exit 1.
#[derive(Debug)]
pub enum Fail {
    Usage(String),
    Run(String),
}

pub type Result<T> = std::result::Result<T, Fail>;

pub fn usage<E: std::fmt::Display>(e: E) -> Fail {
    Fail::Usage(e.to_string())
}

pub fn run_err<E: std::fmt::Display>(e: E) -> Fail {
    Fail::Run(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "ccd", version, about = "Closed-loop validation and control co-design studies for a power-split HEV")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Debug, Default)]
pub struct Common {
    /// JSON run configuration; every key is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Units of the speed column of the cycle file.
    #[arg(long, value_parser = parse_units)]
    pub units: Option<SpeedUnits>,
    /// Drive cycle CSV (`time_s,speed`); defaults to the bundled 300 s excerpt.
    #[arg(long)]
    pub cycle: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_units(s: &str) -> std::result::Result<SpeedUnits, String> {
    s.parse()
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Plant,
    Sequential,
    Simultaneous,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Plant => Mode::PlantOnly,
            ModeArg::Sequential => Mode::Sequential,
            ModeArg::Simultaneous => Mode::Simultaneous,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run one design closed loop and write the trace, summary and plot data.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Run a GA study and write history.jsonl, best.json and comparison.csv.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// best.json of a plant study; required by the sequential mode.
        #[arg(long)]
        plant_optimum: Option<PathBuf>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Turn study histories into spider.csv and totals.csv.
    Report {
        #[arg(required = true)]
        histories: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn one_line(s: &str) -> String {
    s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.trim());
            return ExitCode::from(2);
        }
    };
    let res = match cli.cmd {
        Cmd::Validate { common } => files::validate(&common),
        Cmd::Optimize { common, mode, plant_optimum, generations, jobs } => {
            files::optimize(&common, mode.into(), plant_optimum.as_deref(), generations, jobs)
        }
        Cmd::Report { histories, config, out } => files::report(&histories, config.as_deref(), out.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(m)) => {
            eprintln!("error: {}", one_line(&m));
            ExitCode::from(2)
        }
        Err(Fail::Run(m)) => {
            eprintln!("error: {}", one_line(&m));
            ExitCode::from(1)
        }
    }
}

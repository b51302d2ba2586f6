//! `pvann`: clear-sky irradiance, sensor calibration, dataset generation,
//! network training and evaluation, and MPPT day simulations.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_assignment, Resolved, RunDir, Schema};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "pvann", version, about = "PV panel MPPT with a neural duty-cycle predictor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file, or a manifest.txt from an earlier run
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress messages
    #[arg(long)]
    quiet: bool,
    /// Override a config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, String)>,
}

#[derive(Subcommand)]
enum Command {
    /// Clear-sky irradiance profile for a site and day
    Irradiance {
        #[command(flatten)]
        common: Common,
    },
    /// Fit pyranometer gain and offset against the clear-sky profile
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Sensor CSV with header `time_h,volts`
        #[arg(long)]
        sensor: Option<PathBuf>,
    },
    /// Generate the (irradiance, temperature, load) -> duty dataset
    Dataset {
        #[command(flatten)]
        common: Common,
        /// Panel parameter file
        #[arg(long)]
        panel: Option<PathBuf>,
    },
    /// Train candidate networks and export the best one
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory written by `pvann dataset`
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a weight file on a dataset split
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Directory written by `pvann dataset`
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Simulate P&O and/or ANN tracking over a day
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Day profile CSV; a clear-sky day is used when absent
        #[arg(long)]
        profile: Option<PathBuf>,
    },
}

type Handler = fn(&mut commands::Ctx<'_>) -> Result<(), CliError>;

fn path_flag(key: &str, p: Option<PathBuf>) -> Option<(String, String)> {
    p.map(|p| (key.to_string(), p.display().to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, schema, handler, common, flags): (&'static str, Schema, Handler, Common, Vec<_>) =
        match cli.command {
            Command::Irradiance { common } => {
                ("irradiance", commands::IRRADIANCE, commands::irradiance, common, vec![])
            }
            Command::Calibrate { common, sensor } => (
                "calibrate",
                commands::CALIBRATE,
                commands::calibrate,
                common,
                vec![path_flag("sensor", sensor)],
            ),
            Command::Dataset { common, panel } => (
                "dataset",
                commands::DATASET,
                commands::dataset,
                common,
                vec![path_flag("panel", panel)],
            ),
            Command::Train { common, dataset } => (
                "train",
                commands::TRAIN,
                commands::train,
                common,
                vec![path_flag("dataset", dataset)],
            ),
            Command::Eval {
                common,
                weights,
                dataset,
            } => (
                "eval",
                commands::EVAL,
                commands::eval,
                common,
                vec![path_flag("weights", weights), path_flag("dataset", dataset)],
            ),
            Command::Simulate {
                common,
                weights,
                profile,
            } => (
                "simulate",
                commands::SIMULATE,
                commands::simulate,
                common,
                vec![path_flag("weights", weights), path_flag("profile", profile)],
            ),
        };
    let mut overrides = common.set.clone();
    overrides.extend(flags.into_iter().flatten());
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let cfg = Resolved::load(name, schema, common.config.as_deref(), &overrides, common.quiet)?;
    let mut ctx = commands::Ctx {
        cfg: &cfg,
        run: RunDir::create(&common.out)?,
        quiet: common.quiet,
    };
    handler(&mut ctx)?;
    ctx.run.finish(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

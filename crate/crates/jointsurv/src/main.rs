use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jointsurv::commands::{cmd_compare, cmd_diagnose, cmd_extrapolate, cmd_fit, cmd_km, cmd_simulate, Outcome};
use jointsurv::core::model::{AssociationFunctional, AssociationStructure};
use jointsurv::{CliError, Overrides, Preset, Result, RunConfig};

/// Bayesian joint modelling of a longitudinal biomarker and overall survival.
#[derive(Parser)]
#[command(name = "jointsurv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in scenario's cohort, truth and a starter config.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the posterior; writes draws, diagnostics and a manifest.
    Fit(RunArgs),
    /// Diagnostics and DIC for an existing posterior.
    Diagnose {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        posterior: PathBuf,
    },
    /// Joint-model and Weibull survival extrapolation.
    Extrapolate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        posterior: PathBuf,
    },
    /// Kaplan-Meier curves and observed RMST.
    Km(RunArgs),
    /// Rank fits of one cohort by DIC.
    Compare {
        /// Diagnostics JSON files (at least 2).
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = ["smoke", "paper"])]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["common", "exchangeable", "independent"])]
    association: Option<String>,
    #[arg(long, value_parser = ["current", "slope"])]
    functional: Option<String>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        let overrides = Overrides {
            preset: self.preset.as_deref().map(str::parse::<Preset>).transpose()?,
            seed: self.seed,
            association: self.association.as_deref().map(str::parse::<AssociationStructure>).transpose()?,
            functional: self.functional.as_deref().map(str::parse::<AssociationFunctional>).transpose()?,
        };
        cfg.apply(&overrides);
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate { scenario, seed, out } => cmd_simulate(&scenario, seed, &out),
        Command::Fit(a) => cmd_fit(&a.config()?, &a.out),
        Command::Diagnose { run, posterior } => cmd_diagnose(&run.config()?, &posterior, &run.out),
        Command::Extrapolate { run, posterior } => cmd_extrapolate(&run.config()?, &posterior, &run.out),
        Command::Km(a) => cmd_km(&a.config()?, &a.out),
        Command::Compare { inputs, out } => cmd_compare(&inputs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome).expect("outcome serialises"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&e.to_json()).expect("error serialises"));
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &CliError) -> u8 {
    e.exit_code().try_into().unwrap_or(1)
}

//! `percop`: scenario generation, calibration, quanto pricing and density
//! grids from the command line.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

mod commands;
mod error;
mod files;
mod format;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CopulaArg, DensityArgs, PriceArgs};
use error::CliError;

#[derive(Parser)]
#[command(name = "percop", version, about = "Perturbed Gaussian copula pricing tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a scenario config into one directory per template and correlation.
    ScenarioGen {
        /// TOML config with [underlying1], [underlying2], [option], [scenarios], [mc].
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate the perturbed marginal to one surface file.
    Calibrate {
        surface: PathBuf,
        /// CSV report to append a row to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Price quanto options for one or more scenario directories.
    Price {
        /// Scenario directories, or directories containing them.
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        copula: CopulaArg,
        /// Imply the perturbed correlation from the Gaussian quanto forward.
        #[arg(long)]
        match_quanto_forward: bool,
        /// Strike override; repeat for several.
        #[arg(long = "strike")]
        strikes: Vec<f64>,
        /// Expected maturity; an error if the surfaces differ.
        #[arg(long)]
        maturity: Option<f64>,
        /// Correlation override.
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        /// Add the local-vol Monte Carlo comparator.
        #[arg(long)]
        mc: bool,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps_per_year: Option<usize>,
        /// Output CSV (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write joint and marginal density grids.
    Density {
        /// Scenario directory; without it the parameters come from flags.
        scenario: Option<PathBuf>,
        #[arg(long)]
        sigma1: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        r1: f64,
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        r2: f64,
        #[arg(long)]
        maturity: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        /// Points per axis.
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::ScenarioGen { config, out } => commands::scenario_gen(&config, &out),
        Command::Calibrate { surface, out } => commands::calibrate(&surface, out.as_deref()),
        Command::Price {
            scenarios,
            copula,
            match_quanto_forward,
            strikes,
            maturity,
            rho,
            mc,
            paths,
            seed,
            steps_per_year,
            out,
        } => {
            let args = PriceArgs {
                scenarios,
                copula,
                match_quanto_forward,
                strikes,
                maturity,
                rho,
                mc,
                paths,
                seed,
                steps_per_year,
            };
            let (csv, notes) = commands::price(&args)?;
            for n in notes {
                eprintln!("{n}");
            }
            match out {
                Some(p) => {
                    files::write_text(&p, &csv)?;
                    Ok(String::new())
                }
                None => Ok(csv),
            }
        }
        Command::Density {
            scenario,
            sigma1,
            r1,
            sigma2,
            r2,
            maturity,
            rho,
            grid,
            out,
        } => commands::density(&DensityArgs {
            scenario,
            sigma1,
            r1,
            sigma2,
            r2,
            maturity,
            rho,
            grid,
            out,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("percop: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

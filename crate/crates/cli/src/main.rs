//! `facehmax` command-line interface.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Errors caused by bad arguments or configuration (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "facehmax", version, about = "HMAX tuning-size experiments on face stimuli")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Turn calibration warnings into errors.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Also write SVG bar charts of the results.
    #[arg(long, global = true)]
    pub emit_plot: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw synthetic faces and write them with a manifest.
    GenFaces {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: Option<u64>,
    },
    /// Preprocess faces and write them and example stimuli as PGM.
    Prep,
    /// Learn template banks from the training faces.
    Learn {
        /// Size class, or `all`.
        #[arg(long, default_value = "all")]
        size: String,
        /// Templates per bank.
        #[arg(long)]
        n: Option<usize>,
        /// C1 band to learn from.
        #[arg(long)]
        band: Option<usize>,
    },
    /// Compute C2 of the test faces and write the C2 cache.
    Extract,
    /// Run experiments and write reports.
    Run {
        experiment: Experiment,
        /// Comma-separated size classes (overrides the config file).
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<String>>,
    },
    /// Re-check the hashes of every artifact in the output directory.
    Verify,
    /// Find the S2 width that puts the mean C2 of one bank on the test
    /// faces at a target value.
    CalibrateSigma {
        #[arg(long, default_value = "large")]
        size: String,
        /// Target mean response; the middle of the neural band by default.
        #[arg(long)]
        target: Option<f64>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Cfe,
    Fie,
    FieNeural,
    Wpe,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

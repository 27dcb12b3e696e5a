//! Subcommand implementations. Each writes its files, prints a short
//! summary on stdout and reports problems through [`CliError`].

use std::fs;
use std::path::Path;

use crate::args::{Cli, Command};
use crate::error::CliError;

mod estimate_scale;
mod evaluate;
mod optimize;
mod plot_data;
mod simulate;
mod trilaterate;

/// Settings shared by all subcommands.
#[derive(Debug, Clone, Copy)]
pub struct Context {
    pub seed: Option<u64>,
    /// Significant digits of floats in output files.
    pub precision: usize,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Context { seed: cli.seed, precision: cli.precision };
    match cli.command {
        Command::Simulate(a) => simulate::run(&a, &ctx),
        Command::EstimateScale(a) => estimate_scale::run(&a, &ctx),
        Command::Optimize(a) => optimize::run(&a, &ctx),
        Command::Evaluate(a) => evaluate::run(&a, &ctx),
        Command::PlotData(a) => plot_data::run(&a, &ctx),
        Command::Trilaterate(a) => trilaterate::run(&a, &ctx),
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

use std::fmt::Write as _;

use monorange_core::eval;

use super::Context;
use crate::args::EvaluateArgs;
use crate::error::CliError;
use crate::formats::{self, toml_float};

pub fn run(args: &EvaluateArgs, ctx: &Context) -> Result<(), CliError> {
    let estimate = formats::read_trajectory(&args.estimate)?;
    let reference = formats::read_trajectory(&args.ground_truth)?;
    let r = eval::evaluate(&estimate, &reference, args.tolerance, args.align)?;

    let d = ctx.precision;
    let mut report = String::from("[evaluation]\n");
    let _ = writeln!(report, "rmse = {}", toml_float(r.rmse, d));
    let _ = writeln!(report, "rmse_x = {}", toml_float(r.rmse_axes.x, d));
    let _ = writeln!(report, "rmse_y = {}", toml_float(r.rmse_axes.y, d));
    let _ = writeln!(report, "rmse_z = {}", toml_float(r.rmse_axes.z, d));
    let _ = writeln!(report, "max_error = {}", toml_float(r.max_error, d));
    let _ = writeln!(report, "n_pairs = {}", r.n_pairs);
    let _ = writeln!(report, "tolerance = {}", toml_float(r.tolerance, d));
    let _ = writeln!(report, "aligned = {}", r.alignment.is_some());
    print!("{report}");
    if let Some(path) = &args.output {
        formats::write_text(path, &report)?;
    }
    Ok(())
}

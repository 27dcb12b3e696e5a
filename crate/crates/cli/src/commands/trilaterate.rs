use monorange_core::ranging::{trilaterate_anchor, RangingExtrinsics};
use nalgebra::Vector3;

use super::Context;
use crate::args::TrilaterateArgs;
use crate::error::CliError;
use crate::formats::{self, toml_float};

pub fn run(args: &TrilaterateArgs, ctx: &Context) -> Result<(), CliError> {
    let samples = formats::read_survey(&args.survey)?;
    let t = trilaterate_anchor(&samples)?;
    let d = ctx.precision;
    let a = t.anchor;
    println!("anchor        [{}, {}, {}]", toml_float(a.x, d), toml_float(a.y, d), toml_float(a.z, d));
    println!("residual rms  {}", toml_float(t.residual_rms, d));
    println!("iterations    {}", t.iterations);
    println!("condition     {}", toml_float(t.condition, d));
    println!("samples       {}", samples.len());

    if let Some(path) = &args.output {
        let lever = match &args.lever_arm {
            Some(v) => Vector3::new(v[0], v[1], v[2]),
            None => Vector3::zeros(),
        };
        formats::write_text(path, &formats::format_extrinsics(&RangingExtrinsics::new(a, lever), d))?;
    }
    Ok(())
}

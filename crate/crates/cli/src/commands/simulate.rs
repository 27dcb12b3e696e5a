use log::info;
use monorange_core::sim::{self, survey_samples};

use super::{create_dir, Context};
use crate::args::SimulateArgs;
use crate::config;
use crate::error::{sim_error, CliError};
use crate::formats::{self, ObservationSet};

pub const GROUND_TRUTH: &str = "ground_truth.txt";
pub const VO_TRAJECTORY: &str = "vo_trajectory.txt";
pub const RANGES: &str = "ranges.txt";
pub const OBSERVATIONS: &str = "observations.txt";
pub const EXTRINSICS: &str = "extrinsics.toml";
pub const SURVEY: &str = "survey.txt";

pub fn run(args: &SimulateArgs, ctx: &Context) -> Result<(), CliError> {
    let cfg = config::load(&args.config, ctx.seed)?;
    let scenario = sim::simulate(&cfg.world, &cfg.noise).map_err(|e| sim_error(&args.config, e))?;
    let digits = ctx.precision;
    let world = &scenario.world;

    create_dir(&args.out_dir)?;
    let out = |name: &str| args.out_dir.join(name);
    formats::write_text(&out(GROUND_TRUTH), &formats::format_trajectory(&world.keyframes, digits))?;
    formats::write_text(&out(VO_TRAJECTORY), &formats::format_trajectory(&scenario.vo_trajectory, digits))?;
    formats::write_text(&out(RANGES), &formats::format_ranges(&scenario.measurements.ranges, digits))?;
    let observations = ObservationSet {
        intrinsics: world.intrinsics,
        points: scenario.vo_points.clone(),
        observations: scenario.measurements.observations.clone(),
    };
    formats::write_text(&out(OBSERVATIONS), &formats::format_observations(&observations, digits))?;
    formats::write_text(&out(EXTRINSICS), &formats::format_extrinsics(&world.extrinsics, digits))?;

    if let Some(survey) = cfg.survey {
        let sigma = survey.sigma.unwrap_or(cfg.noise.range_sigma);
        let samples = survey_samples(
            &world.extrinsics.anchor_position,
            survey.samples,
            survey.inner_radius,
            survey.outer_radius,
            sigma,
            cfg.world.seed,
        );
        formats::write_text(&out(SURVEY), &formats::format_survey(&samples, digits))?;
        info!("wrote {} survey samples", samples.len());
    }

    let triangulated = scenario.vo_points.iter().filter(|p| p.is_some()).count();
    println!("seed               {}", cfg.world.seed);
    println!("keyframes          {}", world.keyframes.len());
    println!("map points         {} ({} triangulated by VO)", world.points.len(), triangulated);
    println!("observations       {}", scenario.measurements.observations.len());
    println!("ranges             {}", scenario.measurements.ranges.len());
    println!("true scale         {}", world.true_scale);
    println!("output directory   {}", args.out_dir.display());
    Ok(())
}

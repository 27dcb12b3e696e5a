use log::{info, warn};
use monorange_core::graph::RangeLoss;
use monorange_core::optimizer::{self, LinearSolver, LmConfig, Termination};
use monorange_core::pipeline::{self, GraphInputs};
use monorange_core::text::{self, general};

use super::{create_dir, Context};
use crate::args::OptimizeArgs;
use crate::error::CliError;
use crate::formats::{self, ScaleRecord};

pub const SCALED_TRAJECTORY: &str = "scaled_trajectory.txt";
pub const REFINED_TRAJECTORY: &str = "refined_trajectory.txt";
pub const REFINED_POINTS: &str = "refined_points.txt";
pub const LM_LOG: &str = "lm_log.txt";

pub fn run(args: &OptimizeArgs, ctx: &Context) -> Result<(), CliError> {
    let trajectory = formats::read_trajectory(&args.trajectory)?;
    let obs = formats::read_observations(&args.observations)?;
    let ranges = formats::read_ranges(&args.ranges)?;
    let extrinsics = formats::read_extrinsics(&args.extrinsics)?;
    let scale = ScaleRecord::read(&args.scale)?;

    if args.robust_range && !(args.huber_threshold > 0.0 && args.huber_threshold.is_finite()) {
        return Err(CliError::Usage("--huber-threshold must be positive".into()));
    }
    let lm = LmConfig {
        max_iterations: args.max_iterations,
        initial_lambda: args.initial_lambda,
        solver: if args.dense { LinearSolver::Dense } else { LinearSolver::Schur },
        ..LmConfig::default()
    };
    lm.validate().map_err(|e| CliError::Usage(format!("optimizer: {e}")))?;

    let inputs = GraphInputs {
        trajectory: &trajectory,
        points: &obs.points,
        observations: &obs.observations,
        ranges: &ranges,
        intrinsics: obs.intrinsics,
        extrinsics,
        association_tolerance: args.tolerance,
    };
    let mut assembled = pipeline::assemble_graph(&inputs)?;
    if args.robust_range {
        assembled.graph.set_range_loss(RangeLoss::Huber { threshold: args.huber_threshold });
    }
    let initial = assembled.graph.apply_scale(scale.alpha)?;
    initial.validate()?;
    info!(
        "graph: {} poses, {} points, {} re-projection and {} range factors",
        initial.poses().len(),
        initial.points().len(),
        initial.reprojection_factors().len(),
        initial.range_factors().len()
    );

    let digits = ctx.precision;
    create_dir(&args.out_dir)?;
    if let Some(path) = &args.snapshot {
        formats::write_text(path, &text::write_snapshot(&initial, digits))?;
    }
    let (refined, report) = optimizer::optimize(&initial, &lm)?;

    let out = |name: &str| args.out_dir.join(name);
    let scaled = pipeline::scale_trajectory(&trajectory, scale.alpha);
    formats::write_text(&out(SCALED_TRAJECTORY), &formats::format_trajectory(&scaled, digits))?;
    let refined_traj = pipeline::graph_trajectory(&refined, &trajectory);
    formats::write_text(&out(REFINED_TRAJECTORY), &formats::format_trajectory(&refined_traj, digits))?;
    formats::write_text(
        &out(REFINED_POINTS),
        &formats::format_points(&assembled.point_ids, refined.points(), digits),
    )?;
    formats::write_text(&out(LM_LOG), &text::write_lm_log(&report, digits))?;

    if report.termination == Termination::LambdaOverflow {
        warn!("damping grew past its limit before convergence; results are the last accepted state");
    }
    if assembled.dropped_points > 0 {
        info!("{} map points left out (untriangulated or seen once)", assembled.dropped_points);
    }
    if assembled.unassociated_ranges > 0 {
        warn!("{} ranges had no keyframe within {} s", assembled.unassociated_ranges, args.tolerance);
    }
    println!("scale          {}", general(scale.alpha, 6));
    println!("initial cost   {}", general(report.initial_cost, 9));
    println!("final cost     {}", general(report.final_cost, 9));
    println!("iterations     {} ({} accepted steps)", report.iterations, report.accepted_steps());
    println!("termination    {}", report.termination.as_str());
    Ok(())
}

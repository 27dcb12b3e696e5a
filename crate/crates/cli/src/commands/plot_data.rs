use std::fmt::Write as _;

use log::warn;
use monorange_core::eval::global_scale_fit;
use monorange_core::ranging::predict_range;
use monorange_core::scale;
use monorange_core::text::{read_lm_log, sci};
use monorange_core::trajectory::{nearest_index, StampedPose};

use super::{create_dir, Context};
use crate::args::PlotDataArgs;
use crate::error::CliError;
use crate::formats::{self, ScaleRecord};

pub const TRAJECTORIES: &str = "trajectories.csv";
pub const RANGE_ERROR: &str = "range_error.csv";
pub const DUPLETS: &str = "duplets.csv";
pub const LM_COST: &str = "lm_cost.csv";

/// Positions in the World ground plane. The World frame is the first camera
/// frame, so the ground plane is spanned by x and z.
fn push_trajectory(out: &mut String, source: &str, trajectory: &[StampedPose], digits: usize) {
    for s in trajectory {
        let t = s.pose.translation;
        let _ = writeln!(out, "{source},{},{},{}", sci(s.timestamp, digits), sci(t.x, digits), sci(t.z, digits));
    }
}

fn scaled(trajectory: &[StampedPose], alpha: f64) -> Vec<StampedPose> {
    monorange_core::pipeline::scale_trajectory(trajectory, alpha)
}

pub fn run(args: &PlotDataArgs, ctx: &Context) -> Result<(), CliError> {
    let d = ctx.precision;
    let gt = formats::read_trajectory(&args.ground_truth)?;
    let vo = formats::read_trajectory(&args.vo)?;
    let ranges = formats::read_ranges(&args.ranges)?;
    let ext = formats::read_extrinsics(&args.extrinsics)?;
    let lm_log = read_lm_log(&formats::read_text(&args.lm_log)?).map_err(|e| CliError::parse(&args.lm_log, e))?;
    let estimate = args.scale.as_deref().map(ScaleRecord::read).transpose()?;
    let refined = args.refined.as_deref().map(formats::read_trajectory).transpose()?;
    create_dir(&args.out_dir)?;
    let out = |name: &str| args.out_dir.join(name);

    let mut csv = String::from("source,timestamp,x,z\n");
    push_trajectory(&mut csv, "ground_truth", &gt, d);
    match global_scale_fit(&vo, &gt, args.tolerance) {
        Some(alpha) => push_trajectory(&mut csv, "vo_true_scale", &scaled(&vo, alpha), d),
        None => warn!("VO and ground truth share no timestamps; skipping the true-scale VO curve"),
    }
    if let Some(s) = &estimate {
        push_trajectory(&mut csv, "vo_estimated_scale", &scaled(&vo, s.alpha), d);
    }
    if let Some(r) = &refined {
        push_trajectory(&mut csv, "refined", r, d);
    }
    formats::write_text(&out(TRAJECTORIES), &csv)?;

    let mut csv = String::from("timestamp,measured,true_distance,abs_error\n");
    for r in &ranges {
        if let Some(i) = nearest_index(&gt, r.timestamp, args.tolerance) {
            let truth = predict_range(&gt[i].pose, 1.0, &ext);
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                sci(r.timestamp, d),
                sci(r.distance, d),
                sci(truth, d),
                sci((r.distance - truth).abs(), d)
            );
        }
    }
    formats::write_text(&out(RANGE_ERROR), &csv)?;

    let acc = scale::accumulate_duplets(&vo, &ranges, &ext, args.tolerance)?;
    let mut csv = String::from("timestamp,alpha_minus,alpha_plus\n");
    for dup in &acc.duplets {
        let _ = writeln!(csv, "{},{},{}", sci(dup.timestamp, d), sci(dup.alpha_minus, d), sci(dup.alpha_plus, d));
    }
    formats::write_text(&out(DUPLETS), &csv)?;

    let mut csv = String::from("iteration,cost,lambda,step_norm,accepted\n");
    if let Some(c) = lm_log.initial_cost {
        let _ = writeln!(csv, "0,{},,,1", sci(c, d));
    }
    for r in &lm_log.records {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.iteration,
            sci(r.cost, d),
            sci(r.lambda, d),
            sci(r.step_norm, d),
            u8::from(r.accepted)
        );
    }
    formats::write_text(&out(LM_COST), &csv)?;

    println!("wrote {TRAJECTORIES}, {RANGE_ERROR}, {DUPLETS} and {LM_COST} to {}", args.out_dir.display());
    Ok(())
}

use log::warn;
use monorange_core::scale::{self, Branch, ScaleError, SelectionConfig};
use monorange_core::text::general;

use super::Context;
use crate::args::EstimateScaleArgs;
use crate::error::CliError;
use crate::formats::{self, ScaleRecord};

/// Digits of the printed branch statistics.
const TABLE_DIGITS: usize = 6;

pub fn run(args: &EstimateScaleArgs, ctx: &Context) -> Result<(), CliError> {
    let trajectory = formats::read_trajectory(&args.trajectory)?;
    let ranges = formats::read_ranges(&args.ranges)?;
    let ext = formats::read_extrinsics(&args.extrinsics)?;
    if let Some(k) = args.mad {
        if !(k > 0.0 && k.is_finite()) {
            return Err(CliError::Usage("--mad must be a positive number".into()));
        }
    }

    let acc = scale::accumulate_duplets(&trajectory, &ranges, &ext, args.tolerance)?;
    let skipped = acc.skipped;
    if acc.duplets.is_empty() && skipped.degenerate_pose > 0 && skipped.degenerate_pose == skipped.total() {
        return Err(CliError::Data(format!(
            "all {} associated ranges fall on poses without camera translation; the scale is unobservable",
            skipped.degenerate_pose
        )));
    }
    let selection = SelectionConfig { min_samples: args.min_samples, mad_threshold: args.mad };
    let estimate = scale::select_scale(&acc.duplets, &selection).map_err(|e| match e {
        ScaleError::InsufficientSamples { got, needed } => CliError::Data(format!(
            "insufficient samples: {got} usable ranges, at least {needed} required ({} unassociated, {} degenerate, {} without a real root)",
            skipped.unassociated, skipped.degenerate_pose, skipped.no_real_solution
        )),
        other => other.into(),
    })?;

    println!("{:<13} {:>12} {:>20} {:>8}", "branch", "mean", "standard deviation", "samples");
    for branch in [Branch::Minus, Branch::Plus] {
        let s = estimate.stats(branch);
        println!(
            "{:<13} {:>12} {:>20} {:>8}",
            branch.name(),
            general(s.mean, TABLE_DIGITS),
            general(s.std_dev, TABLE_DIGITS),
            s.n
        );
    }
    println!(
        "selected      {} (alpha = {}, std {})",
        estimate.branch.name(),
        general(estimate.alpha, TABLE_DIGITS),
        general(estimate.std_dev, TABLE_DIGITS)
    );
    println!(
        "skipped       {} ranges ({} unassociated, {} degenerate pose, {} no real root)",
        skipped.total(),
        skipped.unassociated,
        skipped.degenerate_pose,
        skipped.no_real_solution
    );

    if estimate.ambiguous {
        warn!(
            "branch selection is ambiguous: std {} vs {}",
            general(estimate.std_dev, TABLE_DIGITS),
            general(estimate.rejected_branch_std, TABLE_DIGITS)
        );
    }
    if estimate.alpha < 0.0 {
        if !args.allow_negative_scale {
            return Err(CliError::Data(format!(
                "selected scale {} is negative; rerun with --allow-negative-scale to keep it",
                general(estimate.alpha, TABLE_DIGITS)
            )));
        }
        warn!("selected scale {} is negative", general(estimate.alpha, TABLE_DIGITS));
    }

    let record = ScaleRecord::new(&estimate, &skipped);
    formats::write_text(&args.output, &record.format(ctx.precision))
}

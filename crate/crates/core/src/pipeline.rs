//! End-to-end back-end: duplet accumulation, scale selection, graph
//! assembly, scaling and joint refinement.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::CameraIntrinsics;
use crate::graph::{FactorGraph, GraphError, RangeFactor, RangeLoss, ReprojectionFactor, VariableId};
use crate::optimizer::{self, LmConfig, LmReport, OptimizeError};
use crate::ranging::{RangeMeasurement, RangingExtrinsics};
use crate::scale::{self, DupletAccumulation, ScaleError, ScaleEstimate, SelectionConfig};
use crate::sim::Observation;
use crate::trajectory::{self, StampedPose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

/// Up-to-scale VO output plus the ranging data it is fused with.
#[derive(Debug, Clone, Copy)]
pub struct GraphInputs<'a> {
    pub trajectory: &'a [StampedPose],
    /// VO map points by id; `None` for points the VO never triangulated.
    pub points: &'a [Option<Vector3<f64>>],
    pub observations: &'a [Observation],
    pub ranges: &'a [RangeMeasurement],
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: RangingExtrinsics,
    pub association_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledGraph {
    pub graph: FactorGraph,
    /// Input point id of each graph point.
    pub point_ids: Vec<usize>,
    /// Points left out for lacking a position or two observations.
    pub dropped_points: usize,
    pub unassociated_ranges: usize,
}

/// Builds the (unscaled) factor graph. Keyframe 0 is fixed as the gauge.
pub fn assemble_graph(inputs: &GraphInputs<'_>) -> Result<AssembledGraph, GraphError> {
    let n_kf = inputs.trajectory.len();
    let mut graph = FactorGraph::new(inputs.intrinsics);
    for stamped in inputs.trajectory {
        graph.add_pose(stamped.pose);
    }
    if n_kf > 0 {
        graph.fix(VariableId::Pose(0))?;
    }

    let mut counts = vec![0usize; inputs.points.len()];
    for obs in inputs.observations {
        if obs.keyframe >= n_kf {
            return Err(GraphError::UnknownVariable(VariableId::Pose(obs.keyframe)));
        }
        if obs.point >= inputs.points.len() {
            return Err(GraphError::UnknownVariable(VariableId::Point(obs.point)));
        }
        counts[obs.point] += 1;
    }

    let mut graph_index = vec![None; inputs.points.len()];
    let mut point_ids = Vec::new();
    let mut dropped_points = 0;
    for (id, p) in inputs.points.iter().enumerate() {
        match p {
            Some(x) if counts[id] >= 2 => {
                graph_index[id] = Some(graph.add_point(*x));
                point_ids.push(id);
            }
            _ => dropped_points += 1,
        }
    }

    for obs in inputs.observations {
        if let Some(point) = graph_index[obs.point] {
            graph.add_reprojection(ReprojectionFactor {
                pose: obs.keyframe,
                point,
                observed: obs.pixel,
                sigma_px: obs.sigma_px,
            })?;
        }
    }

    let ext = graph.add_extrinsics(inputs.extrinsics);
    let mut unassociated_ranges = 0;
    for r in inputs.ranges {
        match trajectory::nearest_index(inputs.trajectory, r.timestamp, inputs.association_tolerance) {
            Some(pose) => {
                graph.add_range(RangeFactor { pose, measured: r.distance, sigma_m: r.sigma, extrinsics: ext })?;
            }
            None => unassociated_ranges += 1,
        }
    }

    Ok(AssembledGraph { graph, point_ids, dropped_points, unassociated_ranges })
}

/// Stamped poses of `graph`, reusing the timestamps of `template`.
pub fn graph_trajectory(graph: &FactorGraph, template: &[StampedPose]) -> Vec<StampedPose> {
    template
        .iter()
        .zip(graph.poses())
        .map(|(s, p)| StampedPose::new(s.timestamp, *p))
        .collect()
}

pub fn scale_trajectory(trajectory: &[StampedPose], alpha: f64) -> Vec<StampedPose> {
    trajectory
        .iter()
        .map(|s| StampedPose::new(s.timestamp, s.pose.scaled(alpha)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub selection: SelectionConfig,
    pub lm: LmConfig,
    pub range_loss: RangeLoss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub accumulation: DupletAccumulation,
    pub scale: ScaleEstimate,
    /// VO trajectory multiplied by the selected scale (no refinement).
    pub scaled_trajectory: Vec<StampedPose>,
    pub assembled: AssembledGraph,
    /// Graph after scaling, before refinement.
    pub initial_graph: FactorGraph,
    pub refined_graph: FactorGraph,
    pub refined_trajectory: Vec<StampedPose>,
    pub report: LmReport,
}

/// Scale estimation followed by global refinement.
pub fn run(inputs: &GraphInputs<'_>, config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let accumulation =
        scale::accumulate_duplets(inputs.trajectory, inputs.ranges, &inputs.extrinsics, inputs.association_tolerance)?;
    let scale = scale::select_scale(&accumulation.duplets, &config.selection)?;

    let mut assembled = assemble_graph(inputs)?;
    assembled.graph.set_range_loss(config.range_loss);
    let initial_graph = assembled.graph.apply_scale(scale.alpha)?;
    let (refined_graph, report) = optimizer::optimize(&initial_graph, &config.lm)?;

    Ok(PipelineOutput {
        scaled_trajectory: scale_trajectory(inputs.trajectory, scale.alpha),
        refined_trajectory: graph_trajectory(&refined_graph, inputs.trajectory),
        accumulation,
        scale,
        assembled,
        initial_graph,
        refined_graph,
        report,
    })
}

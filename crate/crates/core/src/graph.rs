//! The global map as a factor graph.
//!
//! Variables are keyframe poses (camera-to-World) and World-frame map points.
//! Factors are pixel re-projection constraints between a pose and a point,
//! and range constraints between a pose and a fixed anchor. All residuals
//! are `predicted − measured`, whitened by their scalar sigma.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use nalgebra::{Matrix2x3, Matrix2x6, RowVector6, Vector2, Vector3};
use thiserror::Error;

use crate::geometry::{self, skew, CameraIntrinsics, Pose};
use crate::ranging::RangingExtrinsics;

pub const DEFAULT_PIXEL_SIGMA: f64 = 1.0;
/// Range factors with a predicted distance below this are deactivated.
pub const MIN_RANGE: f64 = 1e-6;
/// Default Huber threshold on whitened range residuals.
pub const DEFAULT_HUBER_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VariableId {
    Pose(usize),
    Point(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FactorRef {
    Reprojection(usize),
    Range(usize),
}

impl core::fmt::Display for VariableId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            VariableId::Pose(i) => write!(f, "pose {i}"),
            VariableId::Point(i) => write!(f, "point {i}"),
        }
    }
}

impl core::fmt::Display for FactorRef {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FactorRef::Reprojection(i) => write!(f, "reprojection factor {i}"),
            FactorRef::Range(i) => write!(f, "range factor {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("{0} does not exist")]
    UnknownVariable(VariableId),
    #[error("range factor references unknown extrinsics set {0}")]
    UnknownExtrinsics(usize),
    #[error("{factor}: {reason}")]
    InvalidFactor { factor: FactorRef, reason: &'static str },
    #[error("no pose is fixed; the gauge is free")]
    NoFixedPose,
    #[error("point {point} has {observations} re-projection factor(s), at least 2 are required")]
    UnderconstrainedPoint { point: usize, observations: usize },
    #[error("{0} is not finite")]
    NonFiniteVariable(VariableId),
    #[error("scale must be finite and non-zero, got {0}")]
    InvalidScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprojectionFactor {
    pub pose: usize,
    pub point: usize,
    pub observed: Vector2<f64>,
    pub sigma_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeFactor {
    pub pose: usize,
    pub measured: f64,
    pub sigma_m: f64,
    /// Index into the graph's ranging extrinsics.
    pub extrinsics: usize,
}

/// Loss applied to whitened range residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RangeLoss {
    #[default]
    Squared,
    Huber { threshold: f64 },
}

impl RangeLoss {
    pub fn huber() -> Self {
        RangeLoss::Huber { threshold: DEFAULT_HUBER_THRESHOLD }
    }

    /// Cost contribution of a whitened residual `r`.
    pub fn cost(&self, r: f64) -> f64 {
        match *self {
            RangeLoss::Squared => r * r,
            RangeLoss::Huber { threshold: k } => {
                let a = r.abs();
                if a <= k {
                    r * r
                } else {
                    2.0 * k * a - k * k
                }
            }
        }
    }

    /// Square root of the IRLS weight at residual `r`.
    pub fn sqrt_weight(&self, r: f64) -> f64 {
        match *self {
            RangeLoss::Squared => 1.0,
            RangeLoss::Huber { threshold: k } => {
                let a = r.abs();
                if a <= k {
                    1.0
                } else {
                    (k / a).sqrt()
                }
            }
        }
    }
}

/// Whitened re-projection residual with Jacobians w.r.t. the pose retraction
/// parameters and the point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprojectionLinearization {
    pub residual: Vector2<f64>,
    pub d_pose: Matrix2x6<f64>,
    pub d_point: Matrix2x3<f64>,
}

/// Whitened range residual and its Jacobian w.r.t. the pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeLinearization {
    pub residual: f64,
    pub d_pose: RowVector6<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub reprojection: f64,
    pub range: f64,
    pub inactive_reprojection: usize,
    pub inactive_range: usize,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.reprojection + self.range
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    poses: Vec<Pose>,
    points: Vec<Vector3<f64>>,
    reprojection: Vec<ReprojectionFactor>,
    ranges: Vec<RangeFactor>,
    fixed: BTreeSet<VariableId>,
    intrinsics: CameraIntrinsics,
    extrinsics: Vec<RangingExtrinsics>,
    range_loss: RangeLoss,
}

impl FactorGraph {
    pub fn new(intrinsics: CameraIntrinsics) -> Self {
        Self {
            poses: Vec::new(),
            points: Vec::new(),
            reprojection: Vec::new(),
            ranges: Vec::new(),
            fixed: BTreeSet::new(),
            intrinsics,
            extrinsics: Vec::new(),
            range_loss: RangeLoss::Squared,
        }
    }

    pub fn add_pose(&mut self, pose: Pose) -> usize {
        self.poses.push(pose);
        self.poses.len() - 1
    }

    pub fn add_point(&mut self, point: Vector3<f64>) -> usize {
        self.points.push(point);
        self.points.len() - 1
    }

    pub fn add_extrinsics(&mut self, ext: RangingExtrinsics) -> usize {
        self.extrinsics.push(ext);
        self.extrinsics.len() - 1
    }

    pub fn add_reprojection(&mut self, factor: ReprojectionFactor) -> Result<usize, GraphError> {
        let id = FactorRef::Reprojection(self.reprojection.len());
        self.check_pose(factor.pose)?;
        if factor.point >= self.points.len() {
            return Err(GraphError::UnknownVariable(VariableId::Point(factor.point)));
        }
        if !(factor.sigma_px > 0.0 && factor.sigma_px.is_finite()) {
            return Err(GraphError::InvalidFactor { factor: id, reason: "sigma must be positive" });
        }
        if !self.intrinsics.contains(&factor.observed) {
            return Err(GraphError::InvalidFactor { factor: id, reason: "observed pixel outside the image" });
        }
        self.reprojection.push(factor);
        Ok(self.reprojection.len() - 1)
    }

    pub fn add_range(&mut self, factor: RangeFactor) -> Result<usize, GraphError> {
        let id = FactorRef::Range(self.ranges.len());
        self.check_pose(factor.pose)?;
        if factor.extrinsics >= self.extrinsics.len() {
            return Err(GraphError::UnknownExtrinsics(factor.extrinsics));
        }
        if !(factor.measured >= 0.0 && factor.measured.is_finite()) {
            return Err(GraphError::InvalidFactor { factor: id, reason: "distance must be non-negative" });
        }
        if !(factor.sigma_m > 0.0 && factor.sigma_m.is_finite()) {
            return Err(GraphError::InvalidFactor { factor: id, reason: "sigma must be positive" });
        }
        self.ranges.push(factor);
        Ok(self.ranges.len() - 1)
    }

    fn check_pose(&self, pose: usize) -> Result<(), GraphError> {
        if pose >= self.poses.len() {
            return Err(GraphError::UnknownVariable(VariableId::Pose(pose)));
        }
        Ok(())
    }

    fn check_variable(&self, id: VariableId) -> Result<(), GraphError> {
        let exists = match id {
            VariableId::Pose(i) => i < self.poses.len(),
            VariableId::Point(i) => i < self.points.len(),
        };
        if exists {
            Ok(())
        } else {
            Err(GraphError::UnknownVariable(id))
        }
    }

    /// Holds a variable constant during optimization.
    pub fn fix(&mut self, id: VariableId) -> Result<(), GraphError> {
        self.check_variable(id)?;
        self.fixed.insert(id);
        Ok(())
    }

    pub fn unfix(&mut self, id: VariableId) {
        self.fixed.remove(&id);
    }

    pub fn is_fixed(&self, id: VariableId) -> bool {
        self.fixed.contains(&id)
    }

    pub fn fixed(&self) -> &BTreeSet<VariableId> {
        &self.fixed
    }

    pub fn set_range_loss(&mut self, loss: RangeLoss) {
        self.range_loss = loss;
    }

    pub fn range_loss(&self) -> RangeLoss {
        self.range_loss
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn pose(&self, i: usize) -> &Pose {
        &self.poses[i]
    }

    pub fn point(&self, i: usize) -> &Vector3<f64> {
        &self.points[i]
    }

    pub fn set_pose(&mut self, i: usize, pose: Pose) {
        self.poses[i] = pose;
    }

    pub fn set_point(&mut self, i: usize, point: Vector3<f64>) {
        self.points[i] = point;
    }

    pub fn reprojection_factors(&self) -> &[ReprojectionFactor] {
        &self.reprojection
    }

    pub fn range_factors(&self) -> &[RangeFactor] {
        &self.ranges
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &[RangingExtrinsics] {
        &self.extrinsics
    }

    pub fn num_variables(&self) -> usize {
        self.poses.len() + self.points.len()
    }

    /// Checks the invariants the optimizer relies on: finite values, a fixed
    /// pose for the gauge, and at least two observations per free point.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (i, p) in self.poses.iter().enumerate() {
            let q = p.rotation.quaternion().coords;
            if !p.translation.iter().chain(q.iter()).all(|v| v.is_finite()) {
                return Err(GraphError::NonFiniteVariable(VariableId::Pose(i)));
            }
        }
        for (i, p) in self.points.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(GraphError::NonFiniteVariable(VariableId::Point(i)));
            }
        }
        if !self.poses.is_empty() && !self.fixed.iter().any(|id| matches!(id, VariableId::Pose(_))) {
            return Err(GraphError::NoFixedPose);
        }
        let mut counts = alloc::vec![0usize; self.points.len()];
        for f in &self.reprojection {
            counts[f.point] += 1;
        }
        for (point, &observations) in counts.iter().enumerate() {
            if observations < 2 && !self.is_fixed(VariableId::Point(point)) {
                return Err(GraphError::UnderconstrainedPoint { point, observations });
            }
        }
        Ok(())
    }

    /// Whitened residual only; `None` when the point is behind the camera.
    pub fn reprojection_error(&self, index: usize) -> Option<Vector2<f64>> {
        let f = &self.reprojection[index];
        let predicted = geometry::project(&self.intrinsics, &self.poses[f.pose], &self.points[f.point])?;
        Some((predicted - f.observed) / f.sigma_px)
    }

    /// Whitened residual with Jacobians; `None` marks an inactive
    /// (behind-camera) factor.
    pub fn reprojection_residual(&self, index: usize) -> Option<ReprojectionLinearization> {
        let f = &self.reprojection[index];
        let (predicted, d_pose, d_point) =
            geometry::project_with_jacobians(&self.intrinsics, &self.poses[f.pose], &self.points[f.point])?;
        let w = 1.0 / f.sigma_px;
        Some(ReprojectionLinearization {
            residual: (predicted - f.observed) * w,
            d_pose: d_pose * w,
            d_point: d_point * w,
        })
    }

    fn range_vector(&self, f: &RangeFactor) -> Vector3<f64> {
        let ext = &self.extrinsics[f.extrinsics];
        ext.tag_position(&self.poses[f.pose]) - ext.anchor_position
    }

    /// Whitened range residual; `None` when the tag sits on the anchor.
    pub fn range_error(&self, index: usize) -> Option<f64> {
        let f = &self.ranges[index];
        let predicted = self.range_vector(f).norm();
        if predicted < MIN_RANGE {
            return None;
        }
        Some((predicted - f.measured) / f.sigma_m)
    }

    /// Whitened range residual with its pose Jacobian. The loss is not
    /// applied here.
    pub fn range_residual(&self, index: usize) -> Option<RangeLinearization> {
        let f = &self.ranges[index];
        let u = self.range_vector(f);
        let predicted = u.norm();
        if predicted < MIN_RANGE {
            return None;
        }
        let w = 1.0 / f.sigma_m;
        let dir = u.transpose() / predicted;
        let pose = &self.poses[f.pose];
        let lever = &self.extrinsics[f.extrinsics].tag_lever_arm;
        // R·Exp(δθ)·p ≈ R·p − R·skew(p)·δθ
        let d_rot = -(dir * pose.rotation.matrix() * skew(lever));
        let mut d_pose = RowVector6::zeros();
        d_pose.fixed_view_mut::<1, 3>(0, 0).copy_from(&(d_rot * w));
        d_pose.fixed_view_mut::<1, 3>(0, 3).copy_from(&(dir * w));
        Some(RangeLinearization {
            residual: (predicted - f.measured) * w,
            d_pose,
        })
    }

    /// Cost terms summed in factor index order, skipping inactive factors.
    pub fn cost_breakdown(&self) -> CostBreakdown {
        let mut out = CostBreakdown::default();
        for i in 0..self.reprojection.len() {
            match self.reprojection_error(i) {
                Some(r) => out.reprojection += r.norm_squared(),
                None => out.inactive_reprojection += 1,
            }
        }
        for i in 0..self.ranges.len() {
            match self.range_error(i) {
                Some(r) => out.range += self.range_loss.cost(r),
                None => out.inactive_range += 1,
            }
        }
        out
    }

    /// Sum of squared whitened re-projection residuals plus range losses.
    pub fn total_cost(&self) -> f64 {
        self.cost_breakdown().total()
    }

    /// Multiplies every pose translation and map point by `alpha`.
    pub fn apply_scale(&self, alpha: f64) -> Result<FactorGraph, GraphError> {
        if !alpha.is_finite() || alpha == 0.0 {
            return Err(GraphError::InvalidScale(alpha));
        }
        let mut out = self.clone();
        for p in &mut out.poses {
            p.translation *= alpha;
        }
        for x in &mut out.points {
            *x *= alpha;
        }
        Ok(out)
    }
}

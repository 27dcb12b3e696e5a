//! Global scale initialization from single-anchor ranges.
//!
//! Each range measurement against an up-to-scale pose yields a quadratic in
//! the unknown scale `α`:
//!
//! ```text
//! A·α² + 2B·α + C = 0
//! A = ‖p_WC‖²
//! B = p_WCᵀ (R_WC·p_CT − p_WA)
//! C = ‖R_WC·p_CT − p_WA‖² − ρ²
//! ```
//!
//! Its two roots form a duplet. Across many measurements the root belonging
//! to the true scale stays put while the other wanders, so the branch with
//! the smaller spread is selected and its mean is the initial scale.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use thiserror::Error;

use crate::geometry::Pose;
use crate::ranging::{RangeMeasurement, RangingExtrinsics};
use crate::trajectory::{self, StampedPose};

/// Camera positions closer than this to the World origin make `A` vanish.
pub const MIN_POSITION_NORM: f64 = 1e-6;
pub const DEFAULT_MIN_SAMPLES: usize = 10;
/// Half a frame period at 30 fps.
pub const DEFAULT_ASSOCIATION_TOLERANCE: f64 = 0.05;
/// Branch standard deviations closer than this (relative) are flagged ambiguous.
pub const AMBIGUITY_RATIO: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScaleError {
    #[error("camera position norm {norm:e} is too close to the World origin")]
    DegeneratePose { norm: f64 },
    #[error("no real scale solution (discriminant {discriminant:e})")]
    NoRealSolution { discriminant: f64 },
    #[error("need at least {needed} duplets, got {got}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("trajectory timestamps are not strictly increasing")]
    UnsortedTrajectory,
}

/// Coefficients of `A·α² + 2B·α + C = 0` for one range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleQuadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ScaleQuadratic {
    pub fn new(pose: &Pose, distance: f64, ext: &RangingExtrinsics) -> Self {
        let p = pose.translation;
        let offset = pose.rotation.rotate(&ext.tag_lever_arm) - ext.anchor_position;
        Self {
            a: p.norm_squared(),
            b: p.dot(&offset),
            c: offset.norm_squared() - distance * distance,
        }
    }

    pub fn evaluate(&self, alpha: f64) -> f64 {
        self.a * alpha * alpha + 2.0 * self.b * alpha + self.c
    }

    /// `(B/A)² − C/A`.
    pub fn discriminant(&self) -> f64 {
        let ba = self.b / self.a;
        ba * ba - self.c / self.a
    }
}

/// The two scale roots of one range measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleDuplet {
    pub timestamp: f64,
    /// Root taken with the negative radical.
    pub alpha_minus: f64,
    /// Root taken with the positive radical.
    pub alpha_plus: f64,
    pub discriminant: f64,
}

impl ScaleDuplet {
    pub fn branch(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Minus => self.alpha_minus,
            Branch::Plus => self.alpha_plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Minus,
    Plus,
}

impl Branch {
    pub fn other(self) -> Branch {
        match self {
            Branch::Minus => Branch::Plus,
            Branch::Plus => Branch::Minus,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Minus => "alpha_minus",
            Branch::Plus => "alpha_plus",
        }
    }
}

/// Both roots of the scale quadratic for `range` observed at `pose`.
pub fn scale_candidates(
    pose: &Pose,
    range: &RangeMeasurement,
    ext: &RangingExtrinsics,
) -> Result<ScaleDuplet, ScaleError> {
    let norm = pose.translation.norm();
    if !(norm >= MIN_POSITION_NORM) {
        return Err(ScaleError::DegeneratePose { norm });
    }
    let q = ScaleQuadratic::new(pose, range.distance, ext);
    let discriminant = q.discriminant();
    if !(discriminant >= 0.0) {
        return Err(ScaleError::NoRealSolution { discriminant });
    }
    let ba = q.b / q.a;
    let root = discriminant.sqrt();
    // The root away from zero is formed without cancellation; the other comes
    // from the product of roots, C/A.
    let far = if ba >= 0.0 { -ba - root } else { -ba + root };
    let near = if far != 0.0 { (q.c / q.a) / far } else { 0.0 };
    let (alpha_minus, alpha_plus) = if far <= near { (far, near) } else { (near, far) };
    Ok(ScaleDuplet {
        timestamp: range.timestamp,
        alpha_minus,
        alpha_plus,
        discriminant,
    })
}

/// Counts of ranges that did not produce a duplet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipSummary {
    pub unassociated: usize,
    pub degenerate_pose: usize,
    pub no_real_solution: usize,
}

impl SkipSummary {
    pub fn total(&self) -> usize {
        self.unassociated + self.degenerate_pose + self.no_real_solution
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DupletAccumulation {
    pub duplets: Vec<ScaleDuplet>,
    pub skipped: SkipSummary,
}

/// Pairs every range with the nearest-in-time pose and solves for its duplet.
///
/// Ranges outside `tolerance`, at degenerate poses, or without real roots are
/// counted in [`SkipSummary`]. Output follows the input range order.
pub fn accumulate_duplets(
    trajectory: &[StampedPose],
    ranges: &[RangeMeasurement],
    ext: &RangingExtrinsics,
    tolerance: f64,
) -> Result<DupletAccumulation, ScaleError> {
    if !trajectory::is_strictly_increasing(trajectory) {
        return Err(ScaleError::UnsortedTrajectory);
    }
    let mut duplets = Vec::with_capacity(ranges.len());
    let mut skipped = SkipSummary::default();
    for range in ranges {
        let Some(idx) = trajectory::nearest_index(trajectory, range.timestamp, tolerance) else {
            skipped.unassociated += 1;
            continue;
        };
        match scale_candidates(&trajectory[idx].pose, range, ext) {
            Ok(d) => duplets.push(d),
            Err(ScaleError::DegeneratePose { .. }) => skipped.degenerate_pose += 1,
            Err(_) => skipped.no_real_solution += 1,
        }
    }
    Ok(DupletAccumulation { duplets, skipped })
}

/// Mean and sample standard deviation of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchStats {
    pub mean: f64,
    pub std_dev: f64,
    pub n: usize,
}

impl BranchStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_dev: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_dev = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_dev, n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub min_samples: usize,
    /// Optional median-absolute-deviation pre-filter applied per branch;
    /// values farther than `k · 1.4826 · MAD` from the median are dropped.
    pub mad_threshold: Option<f64>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            min_samples: DEFAULT_MIN_SAMPLES,
            mad_threshold: None,
        }
    }
}

/// Selected initial global scale with the statistics of both branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimate {
    pub alpha: f64,
    pub std_dev: f64,
    pub n_samples: usize,
    pub rejected_branch_mean: f64,
    pub rejected_branch_std: f64,
    pub branch: Branch,
    pub minus: BranchStats,
    pub plus: BranchStats,
    /// Branch spreads differ by less than [`AMBIGUITY_RATIO`].
    pub ambiguous: bool,
}

impl ScaleEstimate {
    pub fn stats(&self, branch: Branch) -> &BranchStats {
        match branch {
            Branch::Minus => &self.minus,
            Branch::Plus => &self.plus,
        }
    }
}

/// Picks the branch with the smaller sample standard deviation and returns its mean.
pub fn select_scale(duplets: &[ScaleDuplet], config: &SelectionConfig) -> Result<ScaleEstimate, ScaleError> {
    let needed = config.min_samples.max(2);
    if duplets.len() < needed {
        return Err(ScaleError::InsufficientSamples { got: duplets.len(), needed });
    }

    let series = |branch: Branch| -> Vec<f64> {
        let values: Vec<f64> = duplets.iter().map(|d| d.branch(branch)).collect();
        match config.mad_threshold {
            Some(k) => mad_filter(&values, k),
            None => values,
        }
    };
    let minus = BranchStats::from_values(&series(Branch::Minus));
    let plus = BranchStats::from_values(&series(Branch::Plus));
    for stats in [&minus, &plus] {
        if stats.n < needed {
            return Err(ScaleError::InsufficientSamples { got: stats.n, needed });
        }
    }

    let branch = if plus.std_dev <= minus.std_dev { Branch::Plus } else { Branch::Minus };
    let (chosen, rejected) = match branch {
        Branch::Plus => (plus, minus),
        Branch::Minus => (minus, plus),
    };
    let ambiguous = rejected.std_dev - chosen.std_dev < AMBIGUITY_RATIO * rejected.std_dev;

    Ok(ScaleEstimate {
        alpha: chosen.mean,
        std_dev: chosen.std_dev,
        n_samples: chosen.n,
        rejected_branch_mean: rejected.mean,
        rejected_branch_std: rejected.std_dev,
        branch,
        minus,
        plus,
        ambiguous,
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Keeps values within `k · 1.4826 · MAD` of the median, preserving order.
pub fn mad_filter(values: &[f64], k: f64) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let med = median(&sorted);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(|a, b| a.total_cmp(b));
    let bound = k * 1.4826 * median(&dev);
    values.iter().copied().filter(|v| (v - med).abs() <= bound).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn ext(anchor: Vector3<f64>) -> RangingExtrinsics {
        RangingExtrinsics::new(anchor, Vector3::zeros())
    }

    fn range(d: f64) -> RangeMeasurement {
        RangeMeasurement::new(0.0, d, 0.1).unwrap()
    }

    #[test]
    fn symmetric_roots() {
        let pose = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let d = scale_candidates(&pose, &range(2.0), &ext(Vector3::zeros())).unwrap();
        assert_eq!((d.alpha_minus, d.alpha_plus), (-2.0, 2.0));
        assert_eq!(d.discriminant, 4.0);
    }

    #[test]
    fn double_root() {
        let pose = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let d = scale_candidates(&pose, &range(0.0), &ext(Vector3::new(1.0, 0.0, 0.0))).unwrap();
        assert_eq!(d.discriminant, 0.0);
        assert_eq!((d.alpha_minus, d.alpha_plus), (1.0, 1.0));
    }

    #[test]
    fn degenerate_and_missing_solutions() {
        let origin = Pose::identity();
        assert!(matches!(
            scale_candidates(&origin, &range(1.0), &ext(Vector3::x())),
            Err(ScaleError::DegeneratePose { .. })
        ));
        // The ray along x stays 5 m from an anchor at (0, 5, 0); a 1 m range cannot be met.
        let pose = Pose::from_translation(Vector3::x());
        assert!(matches!(
            scale_candidates(&pose, &range(1.0), &ext(Vector3::new(0.0, 5.0, 0.0))),
            Err(ScaleError::NoRealSolution { .. })
        ));
    }

    #[test]
    fn constant_branch_wins() {
        let wild = [-4.1, 9.3, 0.2, -7.5, 3.3, 12.0, -1.0, 5.5, -9.9, 2.2];
        let duplets: Vec<_> = wild
            .iter()
            .enumerate()
            .map(|(i, &w)| ScaleDuplet { timestamp: i as f64, alpha_minus: w, alpha_plus: 4.6, discriminant: 1.0 })
            .collect();
        let est = select_scale(&duplets, &SelectionConfig::default()).unwrap();
        assert_eq!(est.branch, Branch::Plus);
        assert!((est.alpha - 4.6).abs() < 1e-12);
        assert!(est.std_dev < 1e-12);
        assert!(est.rejected_branch_std > 1.0);
        assert!(!est.ambiguous);
    }

    #[test]
    fn insufficient_samples() {
        let d = ScaleDuplet { timestamp: 0.0, alpha_minus: -1.0, alpha_plus: 1.0, discriminant: 1.0 };
        let err = select_scale(&[d; 9], &SelectionConfig::default()).unwrap_err();
        assert_eq!(err, ScaleError::InsufficientSamples { got: 9, needed: 10 });
    }

    #[test]
    fn ambiguous_flag() {
        let duplets: Vec<_> = (0..20)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                ScaleDuplet { timestamp: i as f64, alpha_minus: -3.0 + s, alpha_plus: 3.0 + 0.95 * s, discriminant: 1.0 }
            })
            .collect();
        let est = select_scale(&duplets, &SelectionConfig::default()).unwrap();
        assert_eq!(est.branch, Branch::Plus);
        assert!(est.ambiguous);
    }

    #[test]
    fn mad_filter_drops_outliers() {
        let v = [1.0, 1.1, 0.9, 1.05, 0.95, 50.0];
        let kept = mad_filter(&v, 3.0);
        assert_eq!(kept.len(), 5);
        assert!(!kept.contains(&50.0));
    }

    #[test]
    fn accumulation_counts_skips() {
        let ext = ext(Vector3::new(0.0, 0.0, 10.0));
        let traj: Vec<_> = (0..5)
            .map(|i| StampedPose::new(i as f64, Pose::from_translation(Vector3::new(i as f64, 0.0, 0.0))))
            .collect();
        let ranges = [
            RangeMeasurement::new(0.0, 10.0, 0.1).unwrap(), // origin pose: degenerate
            RangeMeasurement::new(1.0, 12.0, 0.1).unwrap(),
            RangeMeasurement::new(2.0, 1.0, 0.1).unwrap(), // closer than the ray ever gets
            RangeMeasurement::new(7.0, 12.0, 0.1).unwrap(), // unassociated
        ];
        let acc = accumulate_duplets(&traj, &ranges, &ext, 0.05).unwrap();
        assert_eq!(acc.duplets.len(), 1);
        assert_eq!(
            acc.skipped,
            SkipSummary { unassociated: 1, degenerate_pose: 1, no_real_solution: 1 }
        );
    }
}

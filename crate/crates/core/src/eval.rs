//! Trajectory accuracy metrics.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::{Pose, Rotation};
use crate::trajectory::{self, StampedPose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least 2 associated pose pairs, found {found}")]
    TooFewPairs { found: usize },
}

/// Position error statistics of an estimate against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub rmse_axes: Vector3<f64>,
    pub max_error: f64,
    pub n_pairs: usize,
    pub tolerance: f64,
    /// Rigid transform applied to the estimate, when alignment was requested.
    pub alignment: Option<Pose>,
}

/// Root-mean-square of the Euclidean differences, paired by index.
pub fn position_rmse(estimate: &[Vector3<f64>], reference: &[Vector3<f64>]) -> f64 {
    let n = estimate.len().min(reference.len());
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = estimate.iter().zip(reference).map(|(a, b)| (a - b).norm_squared()).sum();
    (sq / n as f64).sqrt()
}

/// Rotation and translation (no scale) minimizing `Σ‖R·src_i + t − dst_i‖²`.
pub fn rigid_alignment(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Pose {
    let n = src.len().min(dst.len());
    if n == 0 {
        return Pose::identity();
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = src[..n].iter().sum::<Vector3<f64>>() * inv_n;
    let mu_d = dst[..n].iter().sum::<Vector3<f64>>() * inv_n;
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cov += (d - mu_d) * (s - mu_s).transpose();
    }
    let svd = cov.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Pose::from_translation(mu_d - mu_s);
    };
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    let rotation = Rotation::from_matrix(&r);
    Pose::new(rotation, mu_d - rotation.rotate(&mu_s))
}

/// Single scale `s` minimizing `Σ‖s·est_i − ref_i‖²` over timestamp-associated
/// positions. `None` when nothing associates or the estimate has no extent.
pub fn global_scale_fit(estimate: &[StampedPose], reference: &[StampedPose], tolerance: f64) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, j) in trajectory::associate(estimate, reference, tolerance) {
        let e = estimate[i].pose.translation;
        num += e.dot(&reference[j].pose.translation);
        den += e.norm_squared();
    }
    (den > 0.0).then(|| num / den)
}

/// Associates poses by nearest timestamp and reports position errors.
///
/// Without `align` both trajectories are compared directly in the shared
/// World frame.
pub fn evaluate(
    estimate: &[StampedPose],
    reference: &[StampedPose],
    tolerance: f64,
    align: bool,
) -> Result<EvalReport, EvalError> {
    let pairs = trajectory::associate(estimate, reference, tolerance);
    if pairs.len() < 2 {
        return Err(EvalError::TooFewPairs { found: pairs.len() });
    }
    let est: Vec<Vector3<f64>> = pairs.iter().map(|&(i, _)| estimate[i].pose.translation).collect();
    let refs: Vec<Vector3<f64>> = pairs.iter().map(|&(_, j)| reference[j].pose.translation).collect();

    let alignment = align.then(|| rigid_alignment(&est, &refs));
    let est: Vec<Vector3<f64>> = match &alignment {
        Some(t) => est.iter().map(|p| t.apply(p)).collect(),
        None => est,
    };

    let n = est.len() as f64;
    let mut sq_axes = Vector3::zeros();
    let mut max_error: f64 = 0.0;
    for (a, b) in est.iter().zip(&refs) {
        let d = a - b;
        sq_axes += d.component_mul(&d);
        max_error = max_error.max(d.norm());
    }
    let rmse_axes = (sq_axes / n).map(|v| v.sqrt());
    Ok(EvalReport {
        rmse: (sq_axes.sum() / n).sqrt(),
        rmse_axes,
        max_error,
        n_pairs: pairs.len(),
        tolerance,
        alignment,
    })
}

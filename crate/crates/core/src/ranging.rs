//! Two-way time-of-flight ranging: distance conversion, the tag–anchor range
//! model, and anchor trilateration from a survey.

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

use crate::geometry::Pose;

/// Speed of light in vacuum, m/s (exact by definition of the meter).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default one-sigma range accuracy, meters.
pub const DEFAULT_RANGE_SIGMA: f64 = 0.10;

/// Linearized trilateration systems worse conditioned than this are rejected.
pub const MAX_CONDITION_NUMBER: f64 = 1e8;

const GN_MAX_ITERATIONS: usize = 50;
const GN_STEP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RangingError {
    #[error("round-trip time {round_trip} s is below the time offset {offset} s")]
    NegativeTime { round_trip: f64, offset: f64 },
    #[error("invalid range measurement: {0}")]
    InvalidMeasurement(&'static str),
    #[error("trilateration needs at least 4 samples, got {got}")]
    InsufficientSamples { got: usize },
    #[error("survey geometry is degenerate (condition number {condition:e})")]
    DegenerateGeometry { condition: f64 },
}

/// A time-stamped tag–anchor distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMeasurement {
    pub timestamp: f64,
    pub distance: f64,
    pub sigma: f64,
}

impl RangeMeasurement {
    pub fn new(timestamp: f64, distance: f64, sigma: f64) -> Result<Self, RangingError> {
        if !(distance >= 0.0) || !distance.is_finite() {
            return Err(RangingError::InvalidMeasurement("distance must be finite and non-negative"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(RangingError::InvalidMeasurement("sigma must be finite and positive"));
        }
        if !timestamp.is_finite() {
            return Err(RangingError::InvalidMeasurement("timestamp must be finite"));
        }
        Ok(Self { timestamp, distance, sigma })
    }

    /// Measurement with the default sigma.
    pub fn with_default_sigma(timestamp: f64, distance: f64) -> Result<Self, RangingError> {
        Self::new(timestamp, distance, DEFAULT_RANGE_SIGMA)
    }
}

/// Anchor position in the World frame and tag lever arm in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangingExtrinsics {
    pub anchor_position: Vector3<f64>,
    pub tag_lever_arm: Vector3<f64>,
}

impl RangingExtrinsics {
    pub fn new(anchor_position: Vector3<f64>, tag_lever_arm: Vector3<f64>) -> Self {
        Self { anchor_position, tag_lever_arm }
    }

    pub fn is_finite(&self) -> bool {
        self.anchor_position.iter().chain(self.tag_lever_arm.iter()).all(|v| v.is_finite())
    }

    /// Tag position in the World frame for a (metric) camera pose.
    pub fn tag_position(&self, pose: &Pose) -> Vector3<f64> {
        pose.apply(&self.tag_lever_arm)
    }
}

/// Averaged round-trip time and the calibrated system delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TofSample {
    pub round_trip_time_avg: f64,
    pub time_offset: f64,
}

/// `d = c/2 · (t_tof − t_off)`.
pub fn tof_to_distance(sample: &TofSample) -> Result<f64, RangingError> {
    let dt = sample.round_trip_time_avg - sample.time_offset;
    if dt < 0.0 {
        return Err(RangingError::NegativeTime {
            round_trip: sample.round_trip_time_avg,
            offset: sample.time_offset,
        });
    }
    Ok(0.5 * SPEED_OF_LIGHT * dt)
}

/// Predicted range for an up-to-scale pose: `‖−p_WA + α·p_WC + R_WC·p_CT‖`.
pub fn predict_range(pose: &Pose, scale: f64, ext: &RangingExtrinsics) -> f64 {
    (pose.translation * scale + pose.rotation.rotate(&ext.tag_lever_arm) - ext.anchor_position).norm()
}

/// One survey observation: known tag position and the measured distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurveySample {
    pub tag_position: Vector3<f64>,
    pub distance: f64,
}

impl SurveySample {
    pub fn new(tag_position: Vector3<f64>, distance: f64) -> Self {
        Self { tag_position, distance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trilateration {
    pub anchor: Vector3<f64>,
    pub residual_rms: f64,
    pub iterations: usize,
    /// Condition number of the linearized initialization system.
    pub condition: f64,
}

/// Least-squares anchor position from ≥ 4 survey samples.
///
/// A closed-form start comes from the mean-subtracted squared-distance
/// equations, which are linear in the anchor; Gauss-Newton then minimizes
/// `Σ (‖a − x_i‖ − d_i)²`.
pub fn trilaterate_anchor(samples: &[SurveySample]) -> Result<Trilateration, RangingError> {
    let n = samples.len();
    if n < 4 {
        return Err(RangingError::InsufficientSamples { got: n });
    }

    let inv_n = 1.0 / n as f64;
    let centroid = samples.iter().map(|s| s.tag_position).sum::<Vector3<f64>>() * inv_n;
    let mean_sq_pos = samples.iter().map(|s| s.tag_position.norm_squared()).sum::<f64>() * inv_n;
    let mean_sq_dist = samples.iter().map(|s| s.distance * s.distance).sum::<f64>() * inv_n;

    let mut m = DMatrix::zeros(n, 3);
    let mut b = DVector::zeros(n);
    for (i, s) in samples.iter().enumerate() {
        let row = (s.tag_position - centroid) * 2.0;
        m.fixed_view_mut::<1, 3>(i, 0).copy_from(&row.transpose());
        b[i] = (s.tag_position.norm_squared() - mean_sq_pos) - (s.distance * s.distance - mean_sq_dist);
    }

    let svd = m.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION_NUMBER) {
        return Err(RangingError::DegenerateGeometry { condition });
    }
    let x0 = svd
        .solve(&b, 0.0)
        .map_err(|_| RangingError::DegenerateGeometry { condition })?;
    let mut anchor = Vector3::new(x0[0], x0[1], x0[2]);

    let mut iterations = 0;
    for _ in 0..GN_MAX_ITERATIONS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for s in samples {
            let diff = anchor - s.tag_position;
            let dist = diff.norm();
            if dist == 0.0 {
                continue;
            }
            let j = diff / dist;
            jtj += j * j.transpose();
            jtr += j * (dist - s.distance);
        }
        let Some(step) = jtj.lu().solve(&(-jtr)) else {
            break;
        };
        anchor += step;
        iterations += 1;
        if step.norm() < GN_STEP_TOLERANCE {
            break;
        }
    }

    let sq: f64 = samples
        .iter()
        .map(|s| {
            let r = (anchor - s.tag_position).norm() - s.distance;
            r * r
        })
        .sum();

    Ok(Trilateration {
        anchor,
        residual_rms: (sq * inv_n).sqrt(),
        iterations,
        condition,
    })
}

/// Closed-form intersection of three spheres.
///
/// Returns both intersection points (mirror images through the plane of the
/// centers), or `None` if the spheres do not meet or the centers are collinear.
pub fn intersect_three_spheres(centers: &[Vector3<f64>; 3], radii: &[f64; 3]) -> Option<[Vector3<f64>; 2]> {
    let p21 = centers[1] - centers[0];
    let p31 = centers[2] - centers[0];
    let d = p21.norm();
    if d == 0.0 {
        return None;
    }
    let ex = p21 / d;
    let i = ex.dot(&p31);
    let ey_raw = p31 - ex * i;
    let ey_norm = ey_raw.norm();
    if ey_norm <= 1e-12 * d.max(p31.norm()) {
        return None;
    }
    let ey = ey_raw / ey_norm;
    let ez = ex.cross(&ey);
    let j = ey.dot(&p31);

    let [r1, r2, r3] = *radii;
    let x = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let y = (r1 * r1 - r3 * r3 + i * i + j * j) / (2.0 * j) - (i / j) * x;
    let z2 = r1 * r1 - x * x - y * y;
    if z2 < 0.0 {
        return None;
    }
    let z = z2.sqrt();
    let base = centers[0] + ex * x + ey * y;
    Some([base + ez * z, base - ez * z])
}

//! Time-stamped pose sequences and nearest-timestamp association.

use alloc::vec::Vec;

use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

impl StampedPose {
    pub fn new(timestamp: f64, pose: Pose) -> Self {
        Self { timestamp, pose }
    }
}

/// True when timestamps are finite and strictly increasing.
pub fn is_strictly_increasing(trajectory: &[StampedPose]) -> bool {
    trajectory.iter().all(|p| p.timestamp.is_finite())
        && trajectory.windows(2).all(|w| w[0].timestamp < w[1].timestamp)
}

/// Index of the entry whose timestamp is nearest to `t`, if within `tolerance`.
///
/// `trajectory` must be sorted by timestamp. Ties resolve to the earlier entry.
pub fn nearest_index(trajectory: &[StampedPose], t: f64, tolerance: f64) -> Option<usize> {
    if trajectory.is_empty() || !t.is_finite() {
        return None;
    }
    let upper = trajectory.partition_point(|p| p.timestamp < t);
    let mut best: Option<(usize, f64)> = None;
    for idx in [upper.wrapping_sub(1), upper] {
        if let Some(p) = trajectory.get(idx) {
            let dt = (p.timestamp - t).abs();
            if best.is_none_or(|(_, d)| dt < d) {
                best = Some((idx, dt));
            }
        }
    }
    best.filter(|&(_, dt)| dt <= tolerance).map(|(i, _)| i)
}

/// Pairs each entry of `estimate` with the nearest entry of `reference`.
pub fn associate(estimate: &[StampedPose], reference: &[StampedPose], tolerance: f64) -> Vec<(usize, usize)> {
    estimate
        .iter()
        .enumerate()
        .filter_map(|(i, p)| nearest_index(reference, p.timestamp, tolerance).map(|j| (i, j)))
        .collect()
}

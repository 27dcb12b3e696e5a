#![allow(dead_code)]

use monorange_core::geometry::{self, CameraIntrinsics, Pose, Rotation};
use monorange_core::graph::{FactorGraph, RangeFactor, ReprojectionFactor, VariableId};
use monorange_core::pipeline::GraphInputs;
use monorange_core::scale::DEFAULT_ASSOCIATION_TOLERANCE;
use monorange_core::sim::{Scenario, WorldConfig};
use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, extent: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| uniform(rng, -extent, extent))
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    // Rotation vectors with angles up to just under π.
    let axis = loop {
        let v = uniform_vector(rng, 1.0);
        if v.norm() > 1e-3 {
            break v.normalize();
        }
    };
    Rotation::exp(&(axis * uniform(rng, 0.0, 3.1)))
}

pub fn random_pose(rng: &mut ChaCha8Rng, extent: f64) -> Pose {
    Pose::new(random_rotation(rng), uniform_vector(rng, extent))
}

pub fn intrinsics() -> CameraIntrinsics {
    WorldConfig::default_intrinsics()
}

/// A World point that projects inside the image of `pose` at depth in `[min_depth, max_depth]`.
pub fn visible_point(rng: &mut ChaCha8Rng, k: &CameraIntrinsics, pose: &Pose, min_depth: f64, max_depth: f64) -> Vector3<f64> {
    let u = uniform(rng, 20.0, k.width as f64 - 20.0);
    let v = uniform(rng, 20.0, k.height as f64 - 20.0);
    let depth = uniform(rng, min_depth, max_depth);
    let ray = k.unproject(&nalgebra::Vector2::new(u, v));
    pose.apply(&(ray * (depth / ray.z)))
}

pub fn perturbation(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Vector6<f64> {
    let mut d = Vector6::zeros();
    for i in 0..3 {
        d[i] = uniform(rng, -rot, rot);
        d[i + 3] = uniform(rng, -trans, trans);
    }
    d
}

/// Benchmark world cut down to `n_keyframes`, keeping the benchmark's spacing
/// between keyframes so consecutive views still overlap.
pub fn small_world(seed: u64, n_keyframes: usize, n_map_points: usize) -> WorldConfig {
    let benchmark = WorldConfig::benchmark(seed);
    let share = (n_keyframes as f64 / benchmark.n_keyframes as f64).min(1.0);
    WorldConfig {
        n_keyframes,
        n_map_points,
        lap_fraction: benchmark.lap_fraction * share,
        ..benchmark
    }
}

/// Pipeline inputs for the VO side of a scenario.
pub fn inputs(sc: &Scenario) -> GraphInputs<'_> {
    GraphInputs {
        trajectory: &sc.vo_trajectory,
        points: &sc.vo_points,
        observations: &sc.measurements.observations,
        ranges: &sc.measurements.ranges,
        intrinsics: sc.world.intrinsics,
        extrinsics: sc.world.extrinsics,
        association_tolerance: DEFAULT_ASSOCIATION_TOLERANCE,
    }
}

/// Metric graph at ground truth with the scenario's measurements attached.
/// Points seen fewer than twice are kept (and fixed) so point indices match
/// the world.
pub fn truth_graph(sc: &Scenario) -> FactorGraph {
    let mut g = FactorGraph::new(sc.world.intrinsics);
    for k in &sc.world.keyframes {
        g.add_pose(k.pose);
    }
    for p in &sc.world.points {
        g.add_point(*p);
    }
    g.fix(VariableId::Pose(0)).unwrap();
    for o in &sc.measurements.observations {
        g.add_reprojection(ReprojectionFactor {
            pose: o.keyframe,
            point: o.point,
            observed: o.pixel,
            sigma_px: o.sigma_px,
        })
        .unwrap();
    }
    let mut seen = vec![0usize; sc.world.points.len()];
    for o in &sc.measurements.observations {
        seen[o.point] += 1;
    }
    for (j, n) in seen.iter().enumerate() {
        if *n < 2 {
            g.fix(VariableId::Point(j)).unwrap();
        }
    }
    let ext = g.add_extrinsics(sc.world.extrinsics);
    for (pose, r) in sc.measurements.ranges.iter().enumerate() {
        g.add_range(RangeFactor { pose, measured: r.distance, sigma_m: r.sigma, extrinsics: ext })
            .unwrap();
    }
    g
}

/// Independent re-projection: pinhole model written out by hand.
pub fn manual_projection(k: &CameraIntrinsics, pose: &Pose, x: &Vector3<f64>) -> Option<nalgebra::Vector2<f64>> {
    let r = pose.rotation.matrix();
    let xc = r.transpose() * (x - pose.translation);
    if xc.z <= geometry::DEPTH_EPSILON {
        return None;
    }
    Some(nalgebra::Vector2::new(k.fx * xc.x / xc.z + k.cx, k.fy * xc.y / xc.z + k.cy))
}

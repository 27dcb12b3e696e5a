//! Synthetic ground-truth world and measurement generator.
//!
//! Worlds are laid out in a site frame (x, y horizontal, z up). The camera
//! looks along the direction of travel with x right, y down, z forward. The
//! World frame is the first keyframe's camera frame, so the first true pose
//! is the identity and every output is expressed in that frame.
//!
//! All randomness comes from the configured seed; separate ChaCha streams are
//! used for world generation, measurements, VO drift and anchor surveys.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

#[cfg(not(feature = "std"))]
use nalgebra::{ComplexField, RealField};
use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose, Rotation};
use crate::ranging::{RangeMeasurement, RangingExtrinsics, SurveySample, DEFAULT_RANGE_SIGMA};
use crate::trajectory::StampedPose;

const MAX_REJECTION_ROUNDS: usize = 1000;

const STREAM_WORLD: u64 = 0;
const STREAM_MEASUREMENTS: u64 = 1;
const STREAM_VO: u64 = 2;
const STREAM_SURVEY: u64 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid world configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("map point {point} could not be placed where two keyframes see it after {rounds} attempts")]
    VisibilityInfeasible { point: usize, rounds: usize },
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated as finite and non-negative")
}

/// Horizontal path followed by the camera, sizes in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryShape {
    /// Counter-clockwise circle about the site origin, starting at `(radius, 0)`.
    Circle { radius: f64 },
    /// Lemniscate of Gerono spanning `length` along x and `width` along y,
    /// starting at the tip of the +x lobe.
    FigureEight { length: f64, width: f64 },
    /// From the site origin along +x.
    Straight { length: f64 },
}

impl TrajectoryShape {
    /// Site-frame horizontal position and heading at keyframe `k` of `n`.
    fn sample(&self, k: usize, n: usize, lap_fraction: f64) -> (Vector2<f64>, f64) {
        let lap = lap_fraction * k as f64 / n as f64;
        match *self {
            TrajectoryShape::Circle { radius } => {
                let theta = TAU * lap;
                let pos = Vector2::new(radius * theta.cos(), radius * theta.sin());
                (pos, theta + 0.5 * PI)
            }
            TrajectoryShape::FigureEight { length, width } => {
                let s = 0.5 * PI + TAU * lap;
                let pos = Vector2::new(0.5 * length * s.sin(), 0.5 * width * (2.0 * s).sin());
                let vel = Vector2::new(0.5 * length * s.cos(), width * (2.0 * s).cos());
                (pos, vel.y.atan2(vel.x))
            }
            TrajectoryShape::Straight { length } => {
                let x = if n > 1 { length * k as f64 / (n - 1) as f64 } else { 0.0 };
                (Vector2::new(x, 0.0), 0.0)
            }
        }
    }

    fn size_ok(&self) -> bool {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            TrajectoryShape::Circle { radius } => ok(radius),
            TrajectoryShape::FigureEight { length, width } => ok(length) && ok(width),
            TrajectoryShape::Straight { length } => ok(length),
        }
    }
}

/// Camera-to-site pose for a forward-looking camera at `heading` (radians from +x).
pub fn camera_pose_in_site(position: Vector3<f64>, heading: f64) -> Pose {
    let forward = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let right = Vector3::new(heading.sin(), -heading.cos(), 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    Pose::new(Rotation::from_matrix(&Matrix3::from_columns(&[right, down, forward])), position)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub shape: TrajectoryShape,
    /// Share of a closed shape's loop covered by the keyframes; ignored for
    /// straight paths. Keyframes are evenly spaced in the loop parameter.
    pub lap_fraction: f64,
    pub n_keyframes: usize,
    pub n_map_points: usize,
    /// Seconds between keyframes.
    pub keyframe_interval: f64,
    /// Camera height above the site ground plane, meters.
    pub camera_height: f64,
    /// Site-frame bounding box for map points.
    pub points_min: Vector3<f64>,
    pub points_max: Vector3<f64>,
    /// A point counts as seen when its depth lies in this range and it projects inside the image.
    pub min_depth: f64,
    pub max_depth: f64,
    pub intrinsics: CameraIntrinsics,
    /// Anchor position in the site frame.
    pub anchor: Vector3<f64>,
    /// Tag position in the camera frame.
    pub tag_lever_arm: Vector3<f64>,
    pub true_scale: f64,
    pub seed: u64,
}

impl WorldConfig {
    /// Default camera: 640×480 with a 500 px focal length.
    pub fn default_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }

    /// Standard benchmark: 20 m × 10 m figure-eight, 100 keyframes, 500
    /// points, anchor 15 m beyond the starting lobe tip, true scale 4.6.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            shape: TrajectoryShape::FigureEight { length: 20.0, width: 10.0 },
            lap_fraction: 0.9,
            n_keyframes: 100,
            n_map_points: 500,
            keyframe_interval: 0.5,
            camera_height: 1.0,
            points_min: Vector3::new(-25.0, -20.0, 0.0),
            points_max: Vector3::new(25.0, 20.0, 6.0),
            min_depth: 1.0,
            max_depth: 40.0,
            intrinsics: Self::default_intrinsics(),
            anchor: Vector3::new(25.0, 0.0, 2.0),
            tag_lever_arm: Vector3::new(0.0, -0.2, 0.0),
            true_scale: 4.6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_keyframes < 2 {
            return Err(SimError::InvalidConfig("n_keyframes must be at least 2"));
        }
        if self.n_map_points < 8 {
            return Err(SimError::InvalidConfig("n_map_points must be at least 8"));
        }
        if !(self.true_scale > 0.0 && self.true_scale.is_finite()) {
            return Err(SimError::InvalidConfig("true_scale must be positive"));
        }
        if !self.shape.size_ok() {
            return Err(SimError::InvalidConfig("trajectory size must be positive"));
        }
        if !(self.lap_fraction > 0.0 && self.lap_fraction <= 1.0) {
            return Err(SimError::InvalidConfig("lap_fraction must lie in (0, 1]"));
        }
        if !(self.keyframe_interval > 0.0) {
            return Err(SimError::InvalidConfig("keyframe_interval must be positive"));
        }
        if !(self.min_depth > 0.0 && self.max_depth > self.min_depth) {
            return Err(SimError::InvalidConfig("require 0 < min_depth < max_depth"));
        }
        if (0..3).any(|i| !(self.points_min[i] <= self.points_max[i])) {
            return Err(SimError::InvalidConfig("points_min must not exceed points_max"));
        }
        self.intrinsics
            .validate()
            .map_err(|_| SimError::InvalidConfig("invalid camera intrinsics"))?;
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if !finite(&self.anchor) || !finite(&self.tag_lever_arm) {
            return Err(SimError::InvalidConfig("anchor and lever arm must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Pixel noise standard deviation, px.
    pub pixel_sigma: f64,
    /// Range noise standard deviation, m.
    pub range_sigma: f64,
    /// VO rotation random walk, rad per keyframe.
    pub vo_rotation_sigma: f64,
    /// VO translation random walk, as a fraction of each step's length.
    pub vo_translation_sigma: f64,
    pub outlier_probability: f64,
    /// Extra distance added to outlier ranges, m.
    pub outlier_magnitude: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.0,
            range_sigma: DEFAULT_RANGE_SIGMA,
            vo_rotation_sigma: 0.0,
            vo_translation_sigma: 0.0,
            outlier_probability: 0.0,
            outlier_magnitude: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self { range_sigma: 0.0, ..Self::default() }
    }

    /// 1 px pixel noise, 0.10 m ranges, 1 % translation and 1 mrad rotation drift per keyframe.
    pub fn benchmark() -> Self {
        Self {
            pixel_sigma: 1.0,
            range_sigma: 0.10,
            vo_rotation_sigma: 1e-3,
            vo_translation_sigma: 0.01,
            outlier_probability: 0.0,
            outlier_magnitude: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let values = [
            self.pixel_sigma,
            self.range_sigma,
            self.vo_rotation_sigma,
            self.vo_translation_sigma,
            self.outlier_probability,
            self.outlier_magnitude,
        ];
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(SimError::InvalidConfig("noise parameters must be finite and non-negative"));
        }
        if self.outlier_probability > 1.0 {
            return Err(SimError::InvalidConfig("outlier_probability must not exceed 1"));
        }
        Ok(())
    }

    /// Sigma written alongside synthesized measurements (falls back to the
    /// defaults when the corresponding noise is zero).
    pub fn reported_range_sigma(&self) -> f64 {
        if self.range_sigma > 0.0 {
            self.range_sigma
        } else {
            DEFAULT_RANGE_SIGMA
        }
    }

    pub fn reported_pixel_sigma(&self) -> f64 {
        if self.pixel_sigma > 0.0 {
            self.pixel_sigma
        } else {
            crate::graph::DEFAULT_PIXEL_SIGMA
        }
    }
}

/// Ground truth, all in the World frame.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub keyframes: Vec<StampedPose>,
    pub points: Vec<Vector3<f64>>,
    pub extrinsics: RangingExtrinsics,
    pub intrinsics: CameraIntrinsics,
    /// Maps site-frame coordinates into the World frame.
    pub site_to_world: Pose,
    pub true_scale: f64,
}

impl World {
    pub fn poses(&self) -> Vec<Pose> {
        self.keyframes.iter().map(|k| k.pose).collect()
    }
}

fn is_visible(config: &WorldConfig, pose: &Pose, point: &Vector3<f64>) -> bool {
    let xc = pose.world_to_camera(point);
    if xc.z < config.min_depth || xc.z > config.max_depth {
        return false;
    }
    config
        .intrinsics
        .project_camera(&xc)
        .is_some_and(|px| config.intrinsics.contains(&px))
}

/// Builds the ground-truth world for `config`. Deterministic in `config.seed`.
pub fn generate_world(config: &WorldConfig) -> Result<World, SimError> {
    config.validate()?;
    let n = config.n_keyframes;

    let site_poses: Vec<Pose> = (0..n)
        .map(|k| {
            let (xy, heading) = config.shape.sample(k, n, config.lap_fraction);
            camera_pose_in_site(Vector3::new(xy.x, xy.y, config.camera_height), heading)
        })
        .collect();
    let site_to_world = site_poses[0].inverse();

    let mut keyframes: Vec<StampedPose> = site_poses
        .iter()
        .enumerate()
        .map(|(k, p)| StampedPose::new(k as f64 * config.keyframe_interval, site_to_world.compose(p)))
        .collect();
    keyframes[0].pose = Pose::identity();

    let mut rng = rng_for(config.seed, STREAM_WORLD);
    let mut points = Vec::with_capacity(config.n_map_points);
    for point in 0..config.n_map_points {
        let mut placed = None;
        for _ in 0..MAX_REJECTION_ROUNDS {
            let site = Vector3::from_fn(|i, _| {
                let (lo, hi) = (config.points_min[i], config.points_max[i]);
                lo + (hi - lo) * rng.random::<f64>()
            });
            let candidate = site_to_world.apply(&site);
            let seen = keyframes.iter().filter(|k| is_visible(config, &k.pose, &candidate)).take(2).count();
            if seen >= 2 {
                placed = Some(candidate);
                break;
            }
        }
        match placed {
            Some(p) => points.push(p),
            None => return Err(SimError::VisibilityInfeasible { point, rounds: MAX_REJECTION_ROUNDS }),
        }
    }

    Ok(World {
        keyframes,
        points,
        extrinsics: RangingExtrinsics::new(site_to_world.apply(&config.anchor), config.tag_lever_arm),
        intrinsics: config.intrinsics,
        site_to_world,
        true_scale: config.true_scale,
    })
}

/// A pixel measurement of map point `point` in keyframe `keyframe`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub keyframe: usize,
    pub point: usize,
    pub pixel: Vector2<f64>,
    pub sigma_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub observations: Vec<Observation>,
    /// One range per keyframe, stamped with the keyframe time.
    pub ranges: Vec<RangeMeasurement>,
}

/// Noisy pixel observations of every visible point and one range per keyframe.
pub fn synthesize_measurements(world: &World, noise: &NoiseConfig, seed: u64) -> Result<Measurements, SimError> {
    noise.validate()?;
    let mut rng = rng_for(seed, STREAM_MEASUREMENTS);
    let pixel_noise = gaussian(noise.pixel_sigma);
    let range_noise = gaussian(noise.range_sigma);
    let k = &world.intrinsics;

    let mut observations = Vec::new();
    for (kf, stamped) in world.keyframes.iter().enumerate() {
        for (pt, x) in world.points.iter().enumerate() {
            let Some(px) = crate::geometry::project(k, &stamped.pose, x) else {
                continue;
            };
            let noisy = px + Vector2::new(pixel_noise.sample(&mut rng), pixel_noise.sample(&mut rng));
            if !k.contains(&px) || !k.contains(&noisy) {
                continue;
            }
            observations.push(Observation {
                keyframe: kf,
                point: pt,
                pixel: noisy,
                sigma_px: noise.reported_pixel_sigma(),
            });
        }
    }

    let mut ranges = Vec::with_capacity(world.keyframes.len());
    for stamped in &world.keyframes {
        let truth = crate::ranging::predict_range(&stamped.pose, 1.0, &world.extrinsics);
        let mut d = truth + range_noise.sample(&mut rng);
        if noise.outlier_probability > 0.0 && rng.random::<f64>() < noise.outlier_probability {
            d += noise.outlier_magnitude;
        }
        ranges.push(RangeMeasurement {
            timestamp: stamped.timestamp,
            distance: d.abs(),
            sigma: noise.reported_range_sigma(),
        });
    }
    Ok(Measurements { observations, ranges })
}

/// Turns metric poses into a drifting, up-to-scale VO trajectory.
///
/// Translations are divided by `true_scale`; each relative motion then gets
/// a random rotation and a translation perturbation proportional to its
/// length, and the perturbed increments are chained. The first pose is kept.
pub fn corrupt_to_vo(true_poses: &[Pose], true_scale: f64, noise: &NoiseConfig, seed: u64) -> Result<Vec<Pose>, SimError> {
    noise.validate()?;
    if !(true_scale > 0.0 && true_scale.is_finite()) {
        return Err(SimError::InvalidConfig("true_scale must be positive"));
    }
    let scaled: Vec<Pose> = true_poses.iter().map(|p| p.scaled(1.0 / true_scale)).collect();
    if noise.vo_rotation_sigma == 0.0 && noise.vo_translation_sigma == 0.0 {
        return Ok(scaled);
    }

    let mut rng = rng_for(seed, STREAM_VO);
    let rot_noise = gaussian(noise.vo_rotation_sigma);
    let unit = gaussian(1.0);
    let mut out = Vec::with_capacity(scaled.len());
    if let Some(first) = scaled.first() {
        out.push(*first);
    }
    for w in scaled.windows(2) {
        let rel = w[0].inverse().compose(&w[1]);
        let omega = Vector3::from_fn(|_, _| rot_noise.sample(&mut rng));
        let step = rel.translation.norm() * noise.vo_translation_sigma;
        let dt = Vector3::from_fn(|_, _| unit.sample(&mut rng)) * step;
        let noisy = Pose::new(rel.rotation.compose(&Rotation::exp(&omega)), rel.translation + dt);
        let prev = *out.last().expect("seeded with the first pose");
        out.push(prev.compose(&noisy));
    }
    Ok(out)
}

/// Multi-view midpoint triangulation: the point closest (in least squares)
/// to every viewing ray. `None` for points with fewer than two rays or
/// near-parallel rays.
pub fn triangulate_points(
    poses: &[Pose],
    observations: &[Observation],
    intrinsics: &CameraIntrinsics,
    n_points: usize,
) -> Vec<Option<Vector3<f64>>> {
    let mut lhs = alloc::vec![Matrix3::<f64>::zeros(); n_points];
    let mut rhs = alloc::vec![Vector3::<f64>::zeros(); n_points];
    let mut rays = alloc::vec![0usize; n_points];
    for obs in observations {
        let (Some(pose), true) = (poses.get(obs.keyframe), obs.point < n_points) else {
            continue;
        };
        let dir = pose.rotation.rotate(&intrinsics.unproject(&obs.pixel)).normalize();
        let proj = Matrix3::identity() - dir * dir.transpose();
        lhs[obs.point] += proj;
        rhs[obs.point] += proj * pose.translation;
        rays[obs.point] += 1;
    }
    (0..n_points)
        .map(|j| {
            if rays[j] < 2 {
                return None;
            }
            let eig = lhs[j].symmetric_eigenvalues();
            if eig.min() < 1e-9 * eig.max() {
                return None;
            }
            lhs[j].lu().solve(&rhs[j])
        })
        .collect()
}

/// Survey for anchor trilateration: `n` tag positions drawn uniformly
/// from a spherical shell of radii `[inner, outer]` around `anchor`, with
/// Gaussian range noise.
pub fn survey_samples(
    anchor: &Vector3<f64>,
    n: usize,
    inner: f64,
    outer: f64,
    sigma: f64,
    seed: u64,
) -> Vec<SurveySample> {
    let mut rng = rng_for(seed, STREAM_SURVEY);
    let noise = gaussian(sigma.max(0.0));
    let unit = gaussian(1.0);
    (0..n)
        .map(|_| {
            let dir = loop {
                let v = Vector3::from_fn(|_, _| unit.sample(&mut rng));
                let norm = v.norm();
                if norm > 1e-9 {
                    break v / norm;
                }
            };
            let r = inner + (outer - inner) * rng.random::<f64>();
            let tag = anchor + dir * r;
            SurveySample::new(tag, (r + noise.sample(&mut rng)).abs())
        })
        .collect()
}

/// A complete synthetic run: truth, measurements and the VO estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub world: World,
    pub measurements: Measurements,
    pub vo_trajectory: Vec<StampedPose>,
    /// VO map points (up to scale), triangulated from the VO poses.
    pub vo_points: Vec<Option<Vector3<f64>>>,
}

/// Generates the world, measurements and VO estimate from `config.seed`.
pub fn simulate(config: &WorldConfig, noise: &NoiseConfig) -> Result<Scenario, SimError> {
    let world = generate_world(config)?;
    let measurements = synthesize_measurements(&world, noise, config.seed)?;
    let vo_poses = corrupt_to_vo(&world.poses(), config.true_scale, noise, config.seed)?;
    let vo_points = triangulate_points(&vo_poses, &measurements.observations, &world.intrinsics, world.points.len());
    let vo_trajectory = world
        .keyframes
        .iter()
        .zip(&vo_poses)
        .map(|(k, p)| StampedPose::new(k.timestamp, *p))
        .collect();
    Ok(Scenario { world, measurements, vo_trajectory, vo_points })
}

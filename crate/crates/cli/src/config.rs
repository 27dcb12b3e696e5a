//! Simulation configuration files.
//!
//! A config is TOML restricted to flat sections:
//!
//! ```toml
//! [world]
//! shape = "figure-eight"      # "circle" (radius), "figure-eight" (length, width), "straight" (length)
//! length = 20.0
//! width = 10.0
//! n_keyframes = 100
//! n_map_points = 500
//! true_scale = 4.6
//! anchor = [25.0, 0.0, 2.0]   # site frame: x east, y north, z up
//!
//! [noise]
//! pixel_sigma = 1.0
//!
//! [survey]                    # optional: also write survey.txt
//! samples = 50
//! ```
//!
//! `shape`, `n_keyframes`, `n_map_points`, `true_scale`, `anchor` and the
//! size keys of the chosen shape are required. Every other key falls back to
//! the benchmark world. Unknown keys are errors.

use std::path::Path;

use monorange_core::geometry::CameraIntrinsics;
use monorange_core::sim::{NoiseConfig, TrajectoryShape, WorldConfig};
use nalgebra::Vector3;
use serde::Deserialize;

use crate::error::CliError;
use crate::formats::read_toml;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeName {
    Circle,
    FigureEight,
    Straight,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub shape: ShapeName,
    pub radius: Option<f64>,
    pub length: Option<f64>,
    pub width: Option<f64>,
    pub lap_fraction: Option<f64>,
    pub n_keyframes: usize,
    pub n_map_points: usize,
    pub true_scale: f64,
    pub anchor: [f64; 3],
    pub lever_arm: Option<[f64; 3]>,
    pub keyframe_interval: Option<f64>,
    pub camera_height: Option<f64>,
    pub points_min: Option<[f64; 3]>,
    pub points_max: Option<[f64; 3]>,
    pub min_depth: Option<f64>,
    pub max_depth: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSection {
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    pub width: Option<u32>,
    pub height: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub pixel_sigma: Option<f64>,
    pub range_sigma: Option<f64>,
    pub vo_rotation_sigma: Option<f64>,
    pub vo_translation_sigma: Option<f64>,
    pub outlier_probability: Option<f64>,
    pub outlier_magnitude: Option<f64>,
}

/// Tag positions sampled around the anchor for trilateration.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveySection {
    #[serde(default = "SurveySection::default_samples")]
    pub samples: usize,
    #[serde(default = "SurveySection::default_inner")]
    pub inner_radius: f64,
    #[serde(default = "SurveySection::default_outer")]
    pub outer_radius: f64,
    /// Range noise of the survey; the `[noise]` range sigma when absent.
    pub sigma: Option<f64>,
}

impl SurveySection {
    fn default_samples() -> usize {
        50
    }
    fn default_inner() -> f64 {
        5.0
    }
    fn default_outer() -> f64 {
        30.0
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    world: WorldSection,
    #[serde(default)]
    camera: CameraSection,
    #[serde(default)]
    noise: NoiseSection,
    survey: Option<SurveySection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub world: WorldConfig,
    pub noise: NoiseConfig,
    pub survey: Option<SurveySection>,
}

/// Reads a config file; `seed_override` replaces the file's seed.
pub fn load(path: &Path, seed_override: Option<u64>) -> Result<SimulationConfig, CliError> {
    let file: ConfigFile = read_toml(path)?;
    resolve(file, seed_override).map_err(|m| CliError::config(path, m))
}

/// Parses config text; used by tests and by [`load`].
pub fn parse(text: &str, seed_override: Option<u64>) -> Result<SimulationConfig, String> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| e.to_string())?;
    resolve(file, seed_override)
}

fn required(value: Option<f64>, key: &str, shape: &str) -> Result<f64, String> {
    value.ok_or_else(|| format!("missing key `{key}` in [world], required for shape {shape}"))
}

fn resolve(file: ConfigFile, seed_override: Option<u64>) -> Result<SimulationConfig, String> {
    let w = file.world;
    let base = WorldConfig::benchmark(0);
    let shape = match w.shape {
        ShapeName::Circle => TrajectoryShape::Circle { radius: required(w.radius, "radius", "circle")? },
        ShapeName::FigureEight => TrajectoryShape::FigureEight {
            length: required(w.length, "length", "figure-eight")?,
            width: required(w.width, "width", "figure-eight")?,
        },
        ShapeName::Straight => TrajectoryShape::Straight { length: required(w.length, "length", "straight")? },
    };
    let unused = match w.shape {
        ShapeName::Circle => vec![("length", w.length), ("width", w.width)],
        ShapeName::FigureEight => vec![("radius", w.radius)],
        ShapeName::Straight => vec![("radius", w.radius), ("width", w.width)],
    };
    if let Some((key, _)) = unused.iter().find(|(_, v)| v.is_some()) {
        return Err(format!("key `{key}` does not apply to the chosen shape"));
    }

    let k = base.intrinsics;
    let c = file.camera;
    let intrinsics = CameraIntrinsics {
        fx: c.fx.unwrap_or(k.fx),
        fy: c.fy.unwrap_or(k.fy),
        cx: c.cx.unwrap_or(k.cx),
        cy: c.cy.unwrap_or(k.cy),
        width: c.width.unwrap_or(k.width),
        height: c.height.unwrap_or(k.height),
    };

    let world = WorldConfig {
        shape,
        lap_fraction: w.lap_fraction.unwrap_or(base.lap_fraction),
        n_keyframes: w.n_keyframes,
        n_map_points: w.n_map_points,
        keyframe_interval: w.keyframe_interval.unwrap_or(base.keyframe_interval),
        camera_height: w.camera_height.unwrap_or(base.camera_height),
        points_min: w.points_min.map(Vector3::from).unwrap_or(base.points_min),
        points_max: w.points_max.map(Vector3::from).unwrap_or(base.points_max),
        min_depth: w.min_depth.unwrap_or(base.min_depth),
        max_depth: w.max_depth.unwrap_or(base.max_depth),
        intrinsics,
        anchor: Vector3::from(w.anchor),
        tag_lever_arm: w.lever_arm.map(Vector3::from).unwrap_or(base.tag_lever_arm),
        true_scale: w.true_scale,
        seed: seed_override.or(w.seed).unwrap_or(0),
    };
    world.validate().map_err(|e| e.to_string())?;

    let b = NoiseConfig::benchmark();
    let n = file.noise;
    let noise = NoiseConfig {
        pixel_sigma: n.pixel_sigma.unwrap_or(b.pixel_sigma),
        range_sigma: n.range_sigma.unwrap_or(b.range_sigma),
        vo_rotation_sigma: n.vo_rotation_sigma.unwrap_or(b.vo_rotation_sigma),
        vo_translation_sigma: n.vo_translation_sigma.unwrap_or(b.vo_translation_sigma),
        outlier_probability: n.outlier_probability.unwrap_or(b.outlier_probability),
        outlier_magnitude: n.outlier_magnitude.unwrap_or(b.outlier_magnitude),
    };
    noise.validate().map_err(|e| e.to_string())?;

    if let Some(s) = &file.survey {
        if !(s.inner_radius > 0.0 && s.outer_radius >= s.inner_radius) {
            return Err("survey radii must satisfy 0 < inner_radius <= outer_radius".into());
        }
        if s.sigma.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
            return Err("survey sigma must be finite and non-negative".into());
        }
    }

    Ok(SimulationConfig { world, noise, survey: file.survey })
}

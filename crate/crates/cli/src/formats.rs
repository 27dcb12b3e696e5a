//! Text file formats read and written by the command-line tool.
//!
//! Line formats (whitespace separated, `#` starts a comment line):
//!
//! * trajectory: `timestamp_s tx ty tz qx qy qz qw`, camera-to-World,
//!   quaternion scalar-last, strictly increasing timestamps
//! * range log: `timestamp_s distance_m [sigma_m]`, sigma defaults to 0.10 m
//! * observations: an `intrinsics fx fy cx cy width height` line, a
//!   `points <count>` line, then `point <id> x y z` and
//!   `obs <keyframe> <point> u v [sigma_px]` lines in any order
//! * survey: `x y z distance_m`, tag positions in the World frame
//! * map points: `id x y z`
//!
//! Key-value files (extrinsics, scale estimate, evaluation report) are TOML.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use monorange_core::geometry::CameraIntrinsics;
use monorange_core::graph::DEFAULT_PIXEL_SIGMA;
use monorange_core::ranging::{RangeMeasurement, RangingExtrinsics, SurveySample, DEFAULT_RANGE_SIGMA};
use monorange_core::scale::{ScaleEstimate, SkipSummary};
use monorange_core::sim::Observation;
use monorange_core::text::{self, content_lines, sci, Fields, TextError};
use monorange_core::trajectory::StampedPose;
use nalgebra::{Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::CliError;

/// Quaternions further than this from unit norm are reported when read.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn parse_error(line: usize, reason: impl Into<String>) -> TextError {
    TextError::Parse { line, reason: reason.into() }
}

/// Float literal valid in both TOML and Rust, at `digits` significant digits.
pub fn toml_float(value: f64, digits: usize) -> String {
    if value.is_nan() {
        "nan".into()
    } else if value.is_infinite() {
        if value > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        sci(value, digits)
    }
}

fn toml_vector(v: &Vector3<f64>, digits: usize) -> String {
    format!("[{}, {}, {}]", toml_float(v.x, digits), toml_float(v.y, digits), toml_float(v.z, digits))
}

/// Deserializes a TOML file, reporting syntax and schema errors with the file path.
pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::config(path, e.to_string().trim_end().to_string()))
}

pub fn parse_trajectory(text: &str) -> Result<Vec<StampedPose>, TextError> {
    let mut out: Vec<StampedPose> = Vec::new();
    for (line, l) in content_lines(text) {
        let mut f = Fields::new(line, l);
        let t = f.next_f64("timestamp")?;
        let (pose, norm) = text::read_pose(&mut f)?;
        f.finish()?;
        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            warn!("line {line}: quaternion norm {norm} normalized to 1");
        }
        if let Some(prev) = out.last() {
            if t.partial_cmp(&prev.timestamp) != Some(std::cmp::Ordering::Greater) {
                return Err(parse_error(line, format!("timestamp {t} does not increase")));
            }
        }
        out.push(StampedPose::new(t, pose));
    }
    Ok(out)
}

pub fn format_trajectory(trajectory: &[StampedPose], digits: usize) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for s in trajectory {
        out.push_str(&sci(s.timestamp, digits));
        out.push(' ');
        text::write_pose(&mut out, &s.pose, digits);
        out.push('\n');
    }
    out
}

pub fn read_trajectory(path: &Path) -> Result<Vec<StampedPose>, CliError> {
    let traj = parse_trajectory(&read_text(path)?).map_err(|e| CliError::parse(path, e))?;
    if traj.is_empty() {
        return Err(CliError::Data(format!("{}: trajectory has no poses", path.display())));
    }
    Ok(traj)
}

pub fn parse_ranges(text: &str) -> Result<Vec<RangeMeasurement>, TextError> {
    let mut out = Vec::new();
    for (line, l) in content_lines(text) {
        let mut f = Fields::new(line, l);
        let t = f.next_f64("timestamp")?;
        let d = f.next_f64("distance")?;
        let sigma = f.optional::<f64>("sigma")?.unwrap_or(DEFAULT_RANGE_SIGMA);
        f.finish()?;
        out.push(RangeMeasurement::new(t, d, sigma).map_err(|e| parse_error(line, e.to_string()))?);
    }
    Ok(out)
}

pub fn format_ranges(ranges: &[RangeMeasurement], digits: usize) -> String {
    let mut out = String::from("# timestamp distance sigma\n");
    for r in ranges {
        let _ = writeln!(out, "{} {} {}", sci(r.timestamp, digits), sci(r.distance, digits), sci(r.sigma, digits));
    }
    out
}

pub fn read_ranges(path: &Path) -> Result<Vec<RangeMeasurement>, CliError> {
    parse_ranges(&read_text(path)?).map_err(|e| CliError::parse(path, e))
}

/// Camera model, map points (`None` when not triangulated) and pixel observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub intrinsics: CameraIntrinsics,
    pub points: Vec<Option<Vector3<f64>>>,
    pub observations: Vec<Observation>,
}

pub fn parse_observations(text: &str) -> Result<ObservationSet, TextError> {
    let mut intrinsics = None;
    let mut points: Option<Vec<Option<Vector3<f64>>>> = None;
    let mut observations = Vec::new();
    for (line, l) in content_lines(text) {
        let mut f = Fields::new(line, l);
        match f.next_str("record type")? {
            "intrinsics" => {
                if intrinsics.is_some() {
                    return Err(parse_error(line, "duplicate intrinsics line"));
                }
                let k = CameraIntrinsics::new(
                    f.next_f64("fx")?,
                    f.next_f64("fy")?,
                    f.next_f64("cx")?,
                    f.next_f64("cy")?,
                    f.next("width")?,
                    f.next("height")?,
                )
                .map_err(|e| parse_error(line, e.to_string()))?;
                intrinsics = Some(k);
            }
            "points" => {
                if points.is_some() {
                    return Err(parse_error(line, "duplicate points line"));
                }
                points = Some(vec![None; f.next("point count")?]);
            }
            "point" => {
                let table = points.as_mut().ok_or_else(|| parse_error(line, "point before the points count line"))?;
                let id: usize = f.next("point id")?;
                let p = f.next_vector3("point coordinate")?;
                let slot = table
                    .get_mut(id)
                    .ok_or_else(|| parse_error(line, format!("point id {id} exceeds the declared count")))?;
                if slot.replace(p).is_some() {
                    return Err(parse_error(line, format!("duplicate point id {id}")));
                }
            }
            "obs" => {
                let keyframe = f.next("keyframe index")?;
                let point = f.next("point id")?;
                let pixel = Vector2::new(f.next_f64("u")?, f.next_f64("v")?);
                let sigma_px = f.optional::<f64>("pixel sigma")?.unwrap_or(DEFAULT_PIXEL_SIGMA);
                if !(sigma_px > 0.0 && sigma_px.is_finite()) {
                    return Err(parse_error(line, "pixel sigma must be positive"));
                }
                observations.push(Observation { keyframe, point, pixel, sigma_px });
            }
            other => return Err(parse_error(line, format!("unknown record type `{other}`"))),
        }
        f.finish()?;
    }
    let intrinsics = intrinsics.ok_or_else(|| parse_error(0, "missing intrinsics line"))?;
    let points = points.ok_or_else(|| parse_error(0, "missing points count line"))?;
    Ok(ObservationSet { intrinsics, points, observations })
}

pub fn format_observations(set: &ObservationSet, digits: usize) -> String {
    let k = &set.intrinsics;
    let mut out = String::from("# intrinsics fx fy cx cy width height\n");
    let _ = writeln!(
        out,
        "intrinsics {} {} {} {} {} {}",
        sci(k.fx, digits),
        sci(k.fy, digits),
        sci(k.cx, digits),
        sci(k.cy, digits),
        k.width,
        k.height
    );
    let _ = writeln!(out, "points {}", set.points.len());
    out.push_str("# point id x y z\n");
    for (id, p) in set.points.iter().enumerate() {
        if let Some(p) = p {
            let _ = writeln!(out, "point {id} {} {} {}", sci(p.x, digits), sci(p.y, digits), sci(p.z, digits));
        }
    }
    out.push_str("# obs keyframe point u v sigma_px\n");
    for o in &set.observations {
        let _ = writeln!(
            out,
            "obs {} {} {} {} {}",
            o.keyframe,
            o.point,
            sci(o.pixel.x, digits),
            sci(o.pixel.y, digits),
            sci(o.sigma_px, digits)
        );
    }
    out
}

pub fn read_observations(path: &Path) -> Result<ObservationSet, CliError> {
    parse_observations(&read_text(path)?).map_err(|e| CliError::parse(path, e))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtrinsicsFile {
    ranging: RangingSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangingSection {
    anchor: [f64; 3],
    #[serde(default)]
    lever_arm: [f64; 3],
}

/// Anchor position (World frame) and tag lever arm (camera frame).
pub fn format_extrinsics(ext: &RangingExtrinsics, digits: usize) -> String {
    format!(
        "[ranging]\n# anchor position in the World frame, m\nanchor = {}\n# tag position in the camera frame, m\nlever_arm = {}\n",
        toml_vector(&ext.anchor_position, digits),
        toml_vector(&ext.tag_lever_arm, digits)
    )
}

pub fn read_extrinsics(path: &Path) -> Result<RangingExtrinsics, CliError> {
    let file: ExtrinsicsFile = read_toml(path)?;
    let ext = RangingExtrinsics::new(Vector3::from(file.ranging.anchor), Vector3::from(file.ranging.lever_arm));
    if !ext.is_finite() {
        return Err(CliError::config(path, "anchor and lever arm must be finite"));
    }
    Ok(ext)
}

pub fn parse_survey(text: &str) -> Result<Vec<SurveySample>, TextError> {
    let mut out = Vec::new();
    for (line, l) in content_lines(text) {
        let mut f = Fields::new(line, l);
        let tag = f.next_vector3("tag coordinate")?;
        let d = f.next_f64("distance")?;
        f.finish()?;
        if d < 0.0 {
            return Err(parse_error(line, "distance must be non-negative"));
        }
        out.push(SurveySample::new(tag, d));
    }
    Ok(out)
}

pub fn format_survey(samples: &[SurveySample], digits: usize) -> String {
    let mut out = String::from("# x y z distance\n");
    for s in samples {
        let p = s.tag_position;
        let _ = writeln!(out, "{} {} {} {}", sci(p.x, digits), sci(p.y, digits), sci(p.z, digits), sci(s.distance, digits));
    }
    out
}

pub fn read_survey(path: &Path) -> Result<Vec<SurveySample>, CliError> {
    parse_survey(&read_text(path)?).map_err(|e| CliError::parse(path, e))
}

/// Map points as `id x y z`, keyed by their input point ids.
pub fn format_points(ids: &[usize], points: &[Vector3<f64>], digits: usize) -> String {
    let mut out = String::from("# id x y z\n");
    for (id, p) in ids.iter().zip(points) {
        let _ = writeln!(out, "{id} {} {} {}", sci(p.x, digits), sci(p.y, digits), sci(p.z, digits));
    }
    out
}

/// Contents of a scale estimate file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleRecord {
    pub alpha: f64,
    pub std_dev: f64,
    pub n_samples: usize,
    pub branch: String,
    pub rejected_mean: f64,
    pub rejected_std: f64,
    pub ambiguous: bool,
    pub skipped_unassociated: usize,
    pub skipped_degenerate_pose: usize,
    pub skipped_no_real_solution: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleFile {
    scale: ScaleRecord,
}

impl ScaleRecord {
    pub fn new(estimate: &ScaleEstimate, skipped: &SkipSummary) -> Self {
        Self {
            alpha: estimate.alpha,
            std_dev: estimate.std_dev,
            n_samples: estimate.n_samples,
            branch: estimate.branch.name().into(),
            rejected_mean: estimate.rejected_branch_mean,
            rejected_std: estimate.rejected_branch_std,
            ambiguous: estimate.ambiguous,
            skipped_unassociated: skipped.unassociated,
            skipped_degenerate_pose: skipped.degenerate_pose,
            skipped_no_real_solution: skipped.no_real_solution,
        }
    }

    pub fn format(&self, digits: usize) -> String {
        let mut out = String::from("[scale]\n");
        let _ = writeln!(out, "alpha = {}", toml_float(self.alpha, digits));
        let _ = writeln!(out, "std_dev = {}", toml_float(self.std_dev, digits));
        let _ = writeln!(out, "n_samples = {}", self.n_samples);
        let _ = writeln!(out, "branch = \"{}\"", self.branch);
        let _ = writeln!(out, "rejected_mean = {}", toml_float(self.rejected_mean, digits));
        let _ = writeln!(out, "rejected_std = {}", toml_float(self.rejected_std, digits));
        let _ = writeln!(out, "ambiguous = {}", self.ambiguous);
        let _ = writeln!(out, "skipped_unassociated = {}", self.skipped_unassociated);
        let _ = writeln!(out, "skipped_degenerate_pose = {}", self.skipped_degenerate_pose);
        let _ = writeln!(out, "skipped_no_real_solution = {}", self.skipped_no_real_solution);
        out
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let file: ScaleFile = read_toml(path)?;
        let s = file.scale;
        if !s.alpha.is_finite() || s.alpha == 0.0 {
            return Err(CliError::Data(format!("{}: scale must be finite and non-zero", path.display())));
        }
        Ok(s)
    }
}

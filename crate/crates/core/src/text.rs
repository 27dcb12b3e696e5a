//! Plain-text serialization of factor graphs and optimizer logs.
//!
//! Numbers are written in scientific notation with a caller-chosen count of
//! significant digits. At 17 digits every `f64` reads back bit-identically.
//!
//! Snapshot layout, one block per section with its entry count:
//!
//! ```text
//! INTRINSICS fx fy cx cy width height
//! RANGE_LOSS squared            (or: RANGE_LOSS huber <threshold>)
//! EXTRINSICS <n>
//! anchor_x anchor_y anchor_z lever_x lever_y lever_z
//! POSES <n>
//! fixed tx ty tz qx qy qz qw
//! POINTS <n>
//! fixed x y z
//! REPROJ <n>
//! pose point u v sigma_px
//! RANGE <n>
//! pose extrinsics measured sigma_m
//! ```
//!
//! Variables and factors are indexed by their order inside a block. `fixed`
//! is `0` or `1`. Blank lines and lines starting with `#` are ignored.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use core::str::FromStr;

#[cfg(not(feature = "std"))]
use nalgebra::ComplexField;
use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose, Rotation};
use crate::graph::{FactorGraph, GraphError, RangeFactor, RangeLoss, ReprojectionFactor, VariableId};
use crate::optimizer::{IterationRecord, LmReport};
use crate::ranging::RangingExtrinsics;

/// Significant digits needed for a lossless `f64` round trip.
pub const FULL_PRECISION: usize = 17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TextError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
}

fn parse_error(line: usize, reason: impl Into<String>) -> TextError {
    TextError::Parse { line, reason: reason.into() }
}

/// `value` in scientific notation with `digits` significant digits.
pub fn sci(value: f64, digits: usize) -> String {
    format!("{:.*e}", digits.max(1) - 1, value)
}

/// Formats like C's `%g`: fixed notation for moderate exponents, trailing
/// zeros removed.
pub fn general(value: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let s = format!("{:.*e}", digits - 1, value);
    let (mantissa, exp) = s.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        return format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_fraction(&format!("{value:.decimals$}")).into()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Whitespace-separated fields of one content line.
pub struct Fields<'a> {
    line: usize,
    parts: core::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    pub fn new(line: usize, text: &'a str) -> Self {
        Self { line, parts: text.split_whitespace() }
    }

    pub fn line(&self) -> usize {
        self.line
    }

    pub fn next_str(&mut self, what: &str) -> Result<&'a str, TextError> {
        self.parts.next().ok_or_else(|| parse_error(self.line, format!("missing {what}")))
    }

    pub fn next<T: FromStr>(&mut self, what: &str) -> Result<T, TextError> {
        let raw = self.next_str(what)?;
        raw.parse().map_err(|_| parse_error(self.line, format!("invalid {what} `{raw}`")))
    }

    pub fn next_f64(&mut self, what: &str) -> Result<f64, TextError> {
        let v: f64 = self.next(what)?;
        if !v.is_finite() {
            return Err(parse_error(self.line, format!("{what} must be finite")));
        }
        Ok(v)
    }

    pub fn next_vector3(&mut self, what: &str) -> Result<Vector3<f64>, TextError> {
        Ok(Vector3::new(self.next_f64(what)?, self.next_f64(what)?, self.next_f64(what)?))
    }

    /// Next field, if the line has one left.
    pub fn optional<T: FromStr>(&mut self, what: &str) -> Result<Option<T>, TextError> {
        match self.parts.next() {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| parse_error(self.line, format!("invalid {what} `{raw}`"))),
        }
    }

    pub fn finish(mut self) -> Result<(), TextError> {
        match self.parts.next() {
            None => Ok(()),
            Some(extra) => Err(parse_error(self.line, format!("unexpected trailing field `{extra}`"))),
        }
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
pub fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then_some((i + 1, l))
    })
}

/// Pose fields in `tx ty tz qx qy qz qw` order.
pub fn write_pose(out: &mut String, pose: &Pose, digits: usize) {
    let t = pose.translation;
    let q = pose.rotation.to_xyzw();
    let values = [t.x, t.y, t.z, q[0], q[1], q[2], q[3]];
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&sci(*v, digits));
    }
}

/// Reads `tx ty tz qx qy qz qw`. Returns the pose and the quaternion norm as
/// given, so callers can flag non-unit input.
pub fn read_pose(fields: &mut Fields<'_>) -> Result<(Pose, f64), TextError> {
    let t = fields.next_vector3("translation")?;
    let mut q = [0.0; 4];
    for c in &mut q {
        *c = fields.next_f64("quaternion component")?;
    }
    let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    let rotation = Rotation::from_xyzw(q[0], q[1], q[2], q[3])
        .map_err(|_| parse_error(fields.line(), "degenerate quaternion"))?;
    Ok((Pose::new(rotation, t), norm))
}

fn join(values: &[f64], digits: usize) -> String {
    let parts: Vec<String> = values.iter().map(|v| sci(*v, digits)).collect();
    parts.join(" ")
}

fn fixed_flag(graph: &FactorGraph, id: VariableId) -> u8 {
    u8::from(graph.is_fixed(id))
}

/// Serializes `graph` in the snapshot layout described at module level.
pub fn write_snapshot(graph: &FactorGraph, digits: usize) -> String {
    let mut out = String::new();
    let k = graph.intrinsics();
    let _ = writeln!(out, "# factor graph snapshot");
    let _ = writeln!(out, "INTRINSICS {} {} {}", join(&[k.fx, k.fy, k.cx, k.cy], digits), k.width, k.height);
    match graph.range_loss() {
        RangeLoss::Squared => {
            let _ = writeln!(out, "RANGE_LOSS squared");
        }
        RangeLoss::Huber { threshold } => {
            let _ = writeln!(out, "RANGE_LOSS huber {}", sci(threshold, digits));
        }
    }
    let _ = writeln!(out, "EXTRINSICS {}", graph.extrinsics().len());
    for e in graph.extrinsics() {
        let a = e.anchor_position;
        let l = e.tag_lever_arm;
        let _ = writeln!(out, "{}", join(&[a.x, a.y, a.z, l.x, l.y, l.z], digits));
    }
    let _ = writeln!(out, "POSES {}", graph.poses().len());
    for (i, p) in graph.poses().iter().enumerate() {
        let _ = write!(out, "{} ", fixed_flag(graph, VariableId::Pose(i)));
        write_pose(&mut out, p, digits);
        out.push('\n');
    }
    let _ = writeln!(out, "POINTS {}", graph.points().len());
    for (i, p) in graph.points().iter().enumerate() {
        let _ = writeln!(out, "{} {}", fixed_flag(graph, VariableId::Point(i)), join(p.as_slice(), digits));
    }
    let _ = writeln!(out, "REPROJ {}", graph.reprojection_factors().len());
    for f in graph.reprojection_factors() {
        let _ = writeln!(out, "{} {} {}", f.pose, f.point, join(&[f.observed.x, f.observed.y, f.sigma_px], digits));
    }
    let _ = writeln!(out, "RANGE {}", graph.range_factors().len());
    for f in graph.range_factors() {
        let _ = writeln!(out, "{} {} {}", f.pose, f.extrinsics, join(&[f.measured, f.sigma_m], digits));
    }
    out
}

struct Cursor<'a, I: Iterator<Item = (usize, &'a str)>> {
    lines: I,
    last_line: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Cursor<'a, I> {
    fn next(&mut self, what: &str) -> Result<Fields<'a>, TextError> {
        match self.lines.next() {
            Some((n, l)) => {
                self.last_line = n;
                Ok(Fields::new(n, l))
            }
            None => Err(parse_error(self.last_line + 1, format!("unexpected end of input, expected {what}"))),
        }
    }

    /// Reads a `KEYWORD <count>` header line.
    fn header(&mut self, keyword: &str) -> Result<usize, TextError> {
        let mut f = self.next(keyword)?;
        let found = f.next_str("section keyword")?;
        if found != keyword {
            return Err(parse_error(f.line(), format!("expected section {keyword}, found `{found}`")));
        }
        let n = f.next("entry count")?;
        f.finish()?;
        Ok(n)
    }
}

fn flag(fields: &mut Fields<'_>) -> Result<bool, TextError> {
    match fields.next_str("fixed flag")? {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(parse_error(fields.line(), format!("fixed flag must be 0 or 1, found `{other}`"))),
    }
}

/// Parses a snapshot produced by [`write_snapshot`].
pub fn read_snapshot(text: &str) -> Result<FactorGraph, TextError> {
    let mut cur = Cursor { lines: content_lines(text), last_line: 0 };

    let mut f = cur.next("INTRINSICS")?;
    if f.next_str("section keyword")? != "INTRINSICS" {
        return Err(parse_error(f.line(), "expected section INTRINSICS"));
    }
    let intrinsics = CameraIntrinsics::new(
        f.next_f64("fx")?,
        f.next_f64("fy")?,
        f.next_f64("cx")?,
        f.next_f64("cy")?,
        f.next("width")?,
        f.next("height")?,
    )
    .map_err(|e| parse_error(f.line(), format!("{e}")))?;
    f.finish()?;
    let mut graph = FactorGraph::new(intrinsics);

    let mut f = cur.next("RANGE_LOSS")?;
    if f.next_str("section keyword")? != "RANGE_LOSS" {
        return Err(parse_error(f.line(), "expected section RANGE_LOSS"));
    }
    let loss = match f.next_str("loss name")? {
        "squared" => RangeLoss::Squared,
        "huber" => RangeLoss::Huber { threshold: f.next_f64("huber threshold")? },
        other => return Err(parse_error(f.line(), format!("unknown range loss `{other}`"))),
    };
    f.finish()?;
    graph.set_range_loss(loss);

    for _ in 0..cur.header("EXTRINSICS")? {
        let mut f = cur.next("extrinsics entry")?;
        let anchor = f.next_vector3("anchor coordinate")?;
        let lever = f.next_vector3("lever-arm coordinate")?;
        f.finish()?;
        graph.add_extrinsics(RangingExtrinsics::new(anchor, lever));
    }

    for _ in 0..cur.header("POSES")? {
        let mut f = cur.next("pose entry")?;
        let line = f.line();
        let fixed = flag(&mut f)?;
        let (pose, _) = read_pose(&mut f)?;
        f.finish()?;
        let i = graph.add_pose(pose);
        if fixed {
            graph.fix(VariableId::Pose(i)).map_err(|source| TextError::Graph { line, source })?;
        }
    }

    for _ in 0..cur.header("POINTS")? {
        let mut f = cur.next("point entry")?;
        let line = f.line();
        let fixed = flag(&mut f)?;
        let p = f.next_vector3("point coordinate")?;
        f.finish()?;
        let i = graph.add_point(p);
        if fixed {
            graph.fix(VariableId::Point(i)).map_err(|source| TextError::Graph { line, source })?;
        }
    }

    for _ in 0..cur.header("REPROJ")? {
        let mut f = cur.next("re-projection entry")?;
        let line = f.line();
        let factor = ReprojectionFactor {
            pose: f.next("pose index")?,
            point: f.next("point index")?,
            observed: Vector2::new(f.next_f64("u")?, f.next_f64("v")?),
            sigma_px: f.next_f64("pixel sigma")?,
        };
        f.finish()?;
        graph.add_reprojection(factor).map_err(|source| TextError::Graph { line, source })?;
    }

    for _ in 0..cur.header("RANGE")? {
        let mut f = cur.next("range entry")?;
        let line = f.line();
        let factor = RangeFactor {
            pose: f.next("pose index")?,
            extrinsics: f.next("extrinsics index")?,
            measured: f.next_f64("distance")?,
            sigma_m: f.next_f64("range sigma")?,
        };
        f.finish()?;
        graph.add_range(factor).map_err(|source| TextError::Graph { line, source })?;
    }

    if let Some((n, _)) = cur.lines.next() {
        return Err(parse_error(n, "content after the RANGE section"));
    }
    Ok(graph)
}

fn loss_label(loss: RangeLoss, digits: usize) -> String {
    match loss {
        RangeLoss::Squared => "squared".into(),
        RangeLoss::Huber { threshold } => format!("huber {}", sci(threshold, digits)),
    }
}

/// Line-oriented optimizer log: commented summary lines followed by one
/// `iter cost lambda step_norm accepted` row per trial step.
pub fn write_lm_log(report: &LmReport, digits: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# range_loss {}", loss_label(report.range_loss, digits));
    let _ = writeln!(out, "# initial_cost {}", sci(report.initial_cost, digits));
    let _ = writeln!(out, "# final_cost {}", sci(report.final_cost, digits));
    let _ = writeln!(out, "# iterations {}", report.iterations);
    let _ = writeln!(out, "# termination {}", report.termination.as_str());
    let _ = writeln!(out, "# iter cost lambda step_norm accepted");
    for r in &report.records {
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            r.iteration,
            sci(r.cost, digits),
            sci(r.lambda, digits),
            sci(r.step_norm, digits),
            u8::from(r.accepted)
        );
    }
    out
}

/// Trial records of an optimizer log, plus its initial cost when present.
#[derive(Debug, Clone, PartialEq)]
pub struct LmLog {
    pub initial_cost: Option<f64>,
    pub records: Vec<IterationRecord>,
}

pub fn read_lm_log(text: &str) -> Result<LmLog, TextError> {
    let mut initial_cost = None;
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if let Some(rest) = l.strip_prefix("# initial_cost") {
            let v: f64 = rest
                .trim()
                .parse()
                .map_err(|_| parse_error(line, format!("invalid initial cost `{}`", rest.trim())))?;
            initial_cost = Some(v);
            continue;
        }
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut f = Fields::new(line, l);
        let iteration = f.next("iteration")?;
        let cost = f.next("cost")?;
        let lambda = f.next("lambda")?;
        let step_norm = f.next("step norm")?;
        let accepted = match f.next_str("accepted flag")? {
            "0" => false,
            "1" => true,
            other => return Err(parse_error(line, format!("accepted flag must be 0 or 1, found `{other}`"))),
        };
        f.finish()?;
        records.push(IterationRecord { iteration, cost, lambda, step_norm, accepted });
    }
    Ok(LmLog { initial_cost, records })
}

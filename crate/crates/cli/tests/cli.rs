use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use monorange::formats::{self, ScaleRecord};
use monorange_core::geometry::{Pose, Rotation};
use monorange_core::text::{read_lm_log, read_snapshot, write_snapshot, FULL_PRECISION};
use monorange_core::trajectory::StampedPose;
use nalgebra::Vector3;
use proptest::prelude::*;
use tempfile::TempDir;

fn monorange(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monorange")).args(args).output().expect("spawn monorange")
}

fn refs(a: &[String]) -> Vec<&str> {
    a.iter().map(String::as_str).collect()
}

fn ok(args: &[&str]) -> String {
    let out = monorange(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    _dir: TempDir,
    root: PathBuf,
}

impl Run {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn arg(&self, rel: &str) -> String {
        self.path(rel).to_str().unwrap().to_string()
    }

    fn simulate(config_name: &str, extra: &[&str]) -> Run {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let run = Run { _dir: dir, root };
        let mut args: Vec<String> = extra.iter().map(|a| a.to_string()).collect();
        args.extend(["simulate".into(), config(config_name), "-o".into(), run.arg("sim")]);
        ok(&refs(&args));
        run
    }

    fn estimate_scale(&self) -> String {
        ok(&[
            "estimate-scale",
            "--trajectory",
            &self.arg("sim/vo_trajectory.txt"),
            "--ranges",
            &self.arg("sim/ranges.txt"),
            "--extrinsics",
            &self.arg("sim/extrinsics.toml"),
            "-o",
            &self.arg("scale.toml"),
        ])
    }

    fn optimize_args(&self, out_dir: &str) -> Vec<String> {
        [
            "optimize",
            "--trajectory",
            &self.arg("sim/vo_trajectory.txt"),
            "--observations",
            &self.arg("sim/observations.txt"),
            "--ranges",
            &self.arg("sim/ranges.txt"),
            "--extrinsics",
            &self.arg("sim/extrinsics.toml"),
            "--scale",
            &self.arg("scale.toml"),
            "-o",
            &self.arg(out_dir),
        ]
        .iter()
        .map(|a| a.to_string())
        .collect()
    }

    fn optimize(&self, out_dir: &str, extra: &[&str]) -> String {
        let mut args = self.optimize_args(out_dir);
        args.extend(extra.iter().map(|a| a.to_string()));
        ok(&refs(&args))
    }

    fn rmse(&self, estimate: &str) -> f64 {
        let report = ok(&["evaluate", "--estimate", &self.arg(estimate), "--ground-truth", &self.arg("sim/ground_truth.txt")]);
        report_value(&report, "rmse")
    }
}

fn report_value(report: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    report
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
        .parse()
        .unwrap()
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn simulate_writes_five_files() {
    let run = Run::simulate("noiseless.toml", &[]);
    assert_eq!(
        file_names(&run.path("sim")),
        ["extrinsics.toml", "ground_truth.txt", "observations.txt", "ranges.txt", "vo_trajectory.txt"]
    );
    let gt = formats::read_trajectory(&run.path("sim/ground_truth.txt")).unwrap();
    assert_eq!(gt.len(), 100);
    assert_eq!(gt[0].pose, Pose::identity());
}

#[test]
fn survey_section_adds_survey_file() {
    let run = Run::simulate("benchmark.toml", &[]);
    assert!(run.path("sim/survey.txt").exists());
    let ext = formats::read_extrinsics(&run.path("sim/extrinsics.toml")).unwrap();
    let out = ok(&["trilaterate", &run.arg("sim/survey.txt"), "-o", &run.arg("anchor.toml"), "--lever-arm", "0", "-0.2", "0"]);
    assert!(out.contains("anchor"));
    let found = formats::read_extrinsics(&run.path("anchor.toml")).unwrap();
    assert!((found.anchor_position - ext.anchor_position).norm() < 0.2);
    assert_eq!(found.tag_lever_arm, Vector3::new(0.0, -0.2, 0.0));
}

#[test]
fn missing_key_names_it_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let text = fs::read_to_string(config("noiseless.toml")).unwrap().replace("n_map_points = 500\n", "");
    fs::write(&cfg, text).unwrap();
    let out = monorange(&["simulate", s(&cfg), "-o", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_map_points"));
}

#[test]
fn config_errors_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let text = fs::read_to_string(config("noiseless.toml")).unwrap() + "bogus_key = 1\n";
    fs::write(&cfg, &text).unwrap();
    let out = monorange(&["simulate", s(&cfg), "-o", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().count();
    assert!(err.contains("bogus_key") && err.contains(&format!("line {line}")), "{err}");
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let a = Run::simulate("benchmark.toml", &["--seed", "3"]);
    let b = Run::simulate("benchmark.toml", &["--seed", "3"]);
    let c = Run::simulate("benchmark.toml", &["--seed", "4"]);
    for name in file_names(&a.path("sim")) {
        let fa = fs::read(a.path("sim").join(&name)).unwrap();
        assert!(fa == fs::read(b.path("sim").join(&name)).unwrap(), "{name} differs between reruns");
        if !["extrinsics.toml", "ground_truth.txt"].contains(&name.as_str()) {
            assert!(fa != fs::read(c.path("sim").join(&name)).unwrap(), "{name} ignores the seed");
        }
    }
}

#[test]
fn noiseless_pipeline_is_exact() {
    let run = Run::simulate("noiseless.toml", &[]);
    let table = run.estimate_scale();
    assert!(table.contains("alpha_minus") && table.contains("alpha_plus"));
    assert!(table.lines().any(|l| l.starts_with("alpha_plus") && l.contains(" 4.6 ")), "{table}");
    let scale = ScaleRecord::read(&run.path("scale.toml")).unwrap();
    assert!((scale.alpha - 4.6).abs() <= 1e-8);
    assert!(scale.std_dev < 1e-8 && scale.rejected_std > 1.0);
    assert_eq!(scale.branch, "alpha_plus");

    run.optimize("opt", &[]);
    let log = read_lm_log(&fs::read_to_string(run.path("opt/lm_log.txt")).unwrap()).unwrap();
    let last = log.records.iter().filter(|r| r.accepted).map(|r| r.cost).next_back().unwrap_or(log.initial_cost.unwrap());
    assert!(last < 1e-10, "final cost {last:e}");
    assert!(run.rmse("opt/refined_trajectory.txt") < 1e-6);
}

#[test]
fn refinement_beats_scale_only_on_noisy_data() {
    let run = Run::simulate("benchmark.toml", &["--seed", "5"]);
    run.estimate_scale();
    run.optimize("opt", &[]);
    let scaled = run.rmse("opt/scaled_trajectory.txt");
    let refined = run.rmse("opt/refined_trajectory.txt");
    assert!(refined < scaled, "refined {refined} vs scaled {scaled}");
}

#[test]
fn table_prints_six_significant_digits() {
    let run = Run::simulate("benchmark.toml", &["--seed", "2"]);
    let table = run.estimate_scale();
    let scale = ScaleRecord::read(&run.path("scale.toml")).unwrap();
    let row = table.lines().find(|l| l.starts_with(&scale.branch)).unwrap();
    let printed: Vec<&str> = row.split_whitespace().collect();
    let mean: f64 = printed[1].parse().unwrap();
    let digits = printed[1].trim_start_matches('-').replace('.', "").trim_start_matches('0').len();
    assert_eq!(digits, 6, "{row}");
    assert!((mean - scale.alpha).abs() <= 5e-6 * scale.alpha.abs());
}

#[test]
fn robust_range_changes_log_header() {
    let run = Run::simulate("benchmark.toml", &["--seed", "1"]);
    run.estimate_scale();
    run.optimize("plain", &[]);
    run.optimize("robust", &["--robust-range"]);
    let plain = fs::read_to_string(run.path("plain/lm_log.txt")).unwrap();
    let robust = fs::read_to_string(run.path("robust/lm_log.txt")).unwrap();
    assert_eq!(plain.lines().next(), Some("# range_loss squared"));
    assert!(robust.lines().next().unwrap().starts_with("# range_loss huber 3.0"));
}

#[test]
fn dense_solver_gives_the_same_answer() {
    let run = Run::simulate("noiseless.toml", &[]);
    run.estimate_scale();
    run.optimize("schur", &[]);
    run.optimize("dense", &["--dense"]);
    let a = formats::read_trajectory(&run.path("schur/refined_trajectory.txt")).unwrap();
    let b = formats::read_trajectory(&run.path("dense/refined_trajectory.txt")).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.pose.translation - y.pose.translation).norm() < 1e-9);
    }
}

#[test]
fn snapshot_round_trips_bit_identically() {
    let run = Run::simulate("benchmark.toml", &["--seed", "6"]);
    run.estimate_scale();
    run.optimize("opt", &["--snapshot", &run.arg("graph.txt")]);
    let text = fs::read_to_string(run.path("graph.txt")).unwrap();
    let graph = read_snapshot(&text).unwrap();
    assert_eq!(write_snapshot(&graph, FULL_PRECISION), text);
    assert_eq!(read_snapshot(&write_snapshot(&graph, FULL_PRECISION)).unwrap(), graph);
}

#[test]
fn plot_data_writes_four_csvs() {
    let run = Run::simulate("noiseless.toml", &[]);
    run.estimate_scale();
    run.optimize("opt", &[]);
    ok(&[
        "plot-data",
        "--ground-truth",
        &run.arg("sim/ground_truth.txt"),
        "--vo",
        &run.arg("sim/vo_trajectory.txt"),
        "--ranges",
        &run.arg("sim/ranges.txt"),
        "--extrinsics",
        &run.arg("sim/extrinsics.toml"),
        "--lm-log",
        &run.arg("opt/lm_log.txt"),
        "--scale",
        &run.arg("scale.toml"),
        "--refined",
        &run.arg("opt/refined_trajectory.txt"),
        "-o",
        &run.arg("plot"),
    ]);
    assert_eq!(file_names(&run.path("plot")), ["duplets.csv", "lm_cost.csv", "range_error.csv", "trajectories.csv"]);
    let read = |name: &str| fs::read_to_string(run.path("plot").join(name)).unwrap();

    let errors = read("range_error.csv");
    assert_eq!(errors.lines().next(), Some("timestamp,measured,true_distance,abs_error"));
    let values: Vec<f64> = errors.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 100);
    assert!(values.iter().all(|v| *v == 0.0));

    // One duplet column is the constant true scale, the other wanders.
    let duplets = read("duplets.csv");
    assert_eq!(duplets.lines().next(), Some("timestamp,alpha_minus,alpha_plus"));
    let column = |i: usize| -> Vec<f64> {
        duplets.lines().skip(1).map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect()
    };
    let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread(&column(2)) < 1e-8);
    assert!(spread(&column(1)) > 1.0);

    let traj = read("trajectories.csv");
    assert_eq!(traj.lines().next(), Some("source,timestamp,x,z"));
    for source in ["ground_truth", "vo_true_scale", "vo_estimated_scale", "refined"] {
        assert_eq!(traj.lines().filter(|l| l.starts_with(&format!("{source},"))).count(), 100, "{source}");
    }
    assert_eq!(read("lm_cost.csv").lines().next(), Some("iteration,cost,lambda,step_norm,accepted"));
}

#[test]
fn empty_range_log_is_insufficient() {
    let run = Run::simulate("noiseless.toml", &[]);
    fs::write(run.path("empty.txt"), "# nothing\n").unwrap();
    let out = monorange(&[
        "estimate-scale",
        "--trajectory",
        &run.arg("sim/vo_trajectory.txt"),
        "--ranges",
        &run.arg("empty.txt"),
        "--extrinsics",
        &run.arg("sim/extrinsics.toml"),
        "-o",
        &run.arg("scale.toml"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient samples"));
    assert!(!run.path("scale.toml").exists());
}

fn rewrite_trajectory(run: &Run, f: impl Fn(&StampedPose) -> StampedPose) {
    let path = run.path("sim/vo_trajectory.txt");
    let traj: Vec<StampedPose> = formats::read_trajectory(&path).unwrap().iter().map(f).collect();
    fs::write(&path, formats::format_trajectory(&traj, FULL_PRECISION)).unwrap();
}

#[test]
fn stationary_camera_is_reported_as_degenerate() {
    let run = Run::simulate("noiseless.toml", &[]);
    rewrite_trajectory(&run, |s| StampedPose::new(s.timestamp, Pose::new(s.pose.rotation, Vector3::zeros())));
    let out = monorange(&[
        "estimate-scale",
        "--trajectory",
        &run.arg("sim/vo_trajectory.txt"),
        "--ranges",
        &run.arg("sim/ranges.txt"),
        "--extrinsics",
        &run.arg("sim/extrinsics.toml"),
        "-o",
        &run.arg("scale.toml"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("without camera translation"));
}

#[test]
fn negative_scale_needs_explicit_permission() {
    // Mirroring the VO translations flips the sign of the consistent root.
    let run = Run::simulate("noiseless.toml", &[]);
    rewrite_trajectory(&run, |s| StampedPose::new(s.timestamp, Pose::new(s.pose.rotation, -s.pose.translation)));
    let mut args = vec![
        "estimate-scale".to_string(),
        "--trajectory".into(),
        run.arg("sim/vo_trajectory.txt"),
        "--ranges".into(),
        run.arg("sim/ranges.txt"),
        "--extrinsics".into(),
        run.arg("sim/extrinsics.toml"),
        "-o".into(),
        run.arg("scale.toml"),
    ];
    let out = monorange(&refs(&args));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("negative"));
    args.push("--allow-negative-scale".into());
    ok(&refs(&args));
    let scale = ScaleRecord::read(&run.path("scale.toml")).unwrap();
    assert!((scale.alpha + 4.6).abs() < 1e-8, "{}", scale.alpha);
}

#[test]
fn bad_observation_index_fails_before_optimizing() {
    let run = Run::simulate("noiseless.toml", &[]);
    run.estimate_scale();
    let path = run.path("sim/observations.txt");
    let text = fs::read_to_string(&path).unwrap() + "obs 999 0 10 10 1\n";
    fs::write(&path, text).unwrap();
    let args = run.optimize_args("opt");
    let out = monorange(&refs(&args));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pose 999"));
    assert!(!run.path("opt/lm_log.txt").exists());
}

#[test]
fn evaluate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, points: &[[f64; 3]]| -> String {
        let traj: Vec<StampedPose> = points
            .iter()
            .enumerate()
            .map(|(i, p)| StampedPose::new(i as f64, Pose::from_translation(Vector3::from(*p))))
            .collect();
        let path = dir.path().join(name);
        fs::write(&path, formats::format_trajectory(&traj, FULL_PRECISION)).unwrap();
        path.to_str().unwrap().to_string()
    };
    let gt = write("gt.txt", &[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]);
    let shifted = write("shift.txt", &[[0.3, 0.4, 0.0], [1.3, 1.4, 1.0], [2.3, 2.4, 2.0]]);
    let fixture = write("fix.txt", &[[1.0, 0.0, 0.0], [1.0, 3.0, 1.0], [2.0, 2.0, 4.0]]);
    let single = write("one.txt", &[[0.0, 0.0, 0.0]]);

    let report = ok(&["evaluate", "--estimate", &gt, "--ground-truth", &gt]);
    assert_eq!(report_value(&report, "rmse"), 0.0);
    let report = ok(&["evaluate", "--estimate", &shifted, "--ground-truth", &gt]);
    assert!((report_value(&report, "rmse") - 0.5).abs() < 1e-12);
    let aligned = ok(&["evaluate", "--estimate", &shifted, "--ground-truth", &gt, "--align"]);
    assert!(report_value(&aligned, "rmse") < 1e-9);

    let out_file = dir.path().join("report.toml");
    let report = ok(&["evaluate", "--estimate", &fixture, "--ground-truth", &gt, "-o", s(&out_file)]);
    assert!((report_value(&report, "rmse") - 3f64.sqrt()).abs() < 1e-12);
    assert_eq!(report_value(&report, "max_error"), 2.0);
    assert!(report_value(&report, "rmse") <= report_value(&report, "max_error"));
    assert_eq!(fs::read_to_string(&out_file).unwrap(), report);

    let out = monorange(&["evaluate", "--estimate", &single, "--ground-truth", &gt]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(monorange(&["--help"]).status.code(), Some(0));
    assert_eq!(monorange(&["--version"]).status.code(), Some(0));
    assert_eq!(monorange(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(monorange(&["--precision", "40", "evaluate", "--estimate", "a", "--ground-truth", "b"]).status.code(), Some(1));
    assert_eq!(monorange(&["evaluate", "--estimate", "/nonexistent/a", "--ground-truth", "/nonexistent/b"]).status.code(), Some(2));

    // Coplanar survey: the anchor height is unobservable.
    let dir = tempfile::tempdir().unwrap();
    let survey = dir.path().join("survey.txt");
    let lines: String = (0..8)
        .map(|i| {
            let (x, y) = ((i % 3) as f64 * 4.0, (i / 3) as f64 * 5.0);
            let d = ((x - 1.0f64).powi(2) + (y - 2.0f64).powi(2) + 9.0).sqrt();
            format!("{x} {y} 0 {d}\n")
        })
        .collect();
    fs::write(&survey, lines).unwrap();
    assert_eq!(monorange(&["trilaterate", s(&survey)]).status.code(), Some(3));
}

#[test]
fn precision_flag_controls_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    ok(&["--precision", "6", "simulate", &config("noiseless.toml"), "-o", s(&out)]);
    let text = fs::read_to_string(out.join("ranges.txt")).unwrap();
    let first = text.lines().nth(2).unwrap().split_whitespace().nth(1).unwrap();
    assert_eq!(first.split('e').next().unwrap().len(), 7, "{first}");
}

fn quaternion() -> impl Strategy<Value = Rotation> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z, w)| x * x + y * y + z * z + w * w > 1e-3)
        .prop_map(|(x, y, z, w)| Rotation::from_xyzw(x, y, z, w).unwrap())
}

proptest! {
    #[test]
    fn trajectory_files_round_trip(
        steps in prop::collection::vec((1e-6f64..10.0, -1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3, quaternion()), 1..30),
        start in -1e6f64..1e6,
    ) {
        let mut t = start;
        let traj: Vec<StampedPose> = steps
            .iter()
            .map(|(dt, x, y, z, q)| {
                t += dt;
                StampedPose::new(t, Pose::new(*q, Vector3::new(*x, *y, *z)))
            })
            .collect();
        let text = formats::format_trajectory(&traj, FULL_PRECISION);
        let back = formats::parse_trajectory(&text).unwrap();
        prop_assert_eq!(&back, &traj);
        prop_assert_eq!(formats::format_trajectory(&back, FULL_PRECISION), text);
    }
}

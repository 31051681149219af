use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use vlfuse::calibration::{load_hand_eye, load_planes, solve_eye_in_hand, solve_point_to_plane};
use vlfuse::detection_io::{
    load_detections, load_poses, load_scans, write_tracked, ClassId, DetectionSource, Subject, CLASS_PERSON,
};
use vlfuse::evaluation::{
    error_csv, filter_reference, pair_frames, pair_sweep_with_tracking, parse_error_csv, parse_pr_csv, position_errors,
    pr_csv, pr_sweep, render_conf_table, render_error_table, render_iou_table, ErrorTable, Grid, PositionEstimate,
    PrValues, DEFAULT_GATE_M, REFERENCE_MIN_CONFIDENCE,
};
use vlfuse::geometry::{CalibrationSet, TransformRecord};
use vlfuse::pipeline::{self, PipelineParams};
use vlfuse::simulator::{simulate, AgentConfig, Body, SceneConfig};
use vlfuse::sort2d::SortParams;
use vlfuse::track3d::{parse_records, write_records};
use vlfuse::Execution;

use crate::config::FileConfig;
use crate::{
    CalibrateArgs, CalibrationMode, CliError, Eval3dArgs, EvalPrArgs, GlobalArgs, RunArgs, SimulateArgs, TableKind,
    CALIBRATION_RESULT_FILE, ERRORS_CSV_FILE, PR_CSV_FILE, TRACKS_2D_FILE, TRACKS_3D_FILE,
};

/// Global settings after merging defaults, config file and flags.
struct Context {
    file: FileConfig,
    source: Option<DetectionSource>,
    seed: Option<u64>,
    out: PathBuf,
    no_timestamp: bool,
    raw_3d: bool,
}

impl Context {
    fn new(g: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &g.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(Self {
            source: g.source.or(file.source),
            seed: g.seed.or(file.seed),
            out: g
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            no_timestamp: g.no_timestamp || file.no_timestamp.unwrap_or(false),
            raw_3d: g.raw_3d || file.raw_3d.unwrap_or(false),
            file,
        })
    }

    fn source(&self) -> DetectionSource {
        self.source.unwrap_or(DetectionSource::Rgb)
    }

    /// Comment line recording when an output was generated.
    fn header(&self) -> String {
        if self.no_timestamp {
            return String::new();
        }
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format!("# generated at unix time {secs}\n")
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::Config(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        std::fs::write(&path, format!("{}{body}", self.header()))
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    fn print(&self, stdout: &mut dyn Write, tables: &str) -> Result<(), CliError> {
        write!(stdout, "{}{tables}", self.header()).map_err(|e| CliError::Config(format!("stdout: {e}")))
    }
}

fn finish(result: Result<(), CliError>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("vlfuse: {e}");
            e.exit_code()
        }
    }
}

fn require(what: &str, path: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let path = path.ok_or_else(|| CliError::Config(format!("no {what} given (flag --{what} or config file)")))?;
    if !path.is_file() {
        return Err(CliError::Config(format!("{what} file not found: {}", path.display())));
    }
    Ok(path)
}

fn data<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(data(path))
}

fn load_calibration(path: &Path) -> Result<CalibrationSet, CliError> {
    CalibrationSet::load(path).map_err(|e| CliError::Data(e.to_string()))
}

fn source_label(source: DetectionSource) -> &'static str {
    match source {
        DetectionSource::Rgb => "RGB",
        DetectionSource::Event => "Event",
    }
}

/// Two-column key/value table.
fn summary_table(title: &str, rows: &[(&str, String)]) -> String {
    let kw = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    let vw = rows.iter().map(|(_, v)| v.chars().count()).max().unwrap_or(0);
    let width = (kw + 2 + vw).max(title.chars().count());
    let mut out = format!("{title}\n{}\n", "-".repeat(width));
    for (k, v) in rows {
        out.push_str(&format!("{k:<kw$}  {v:>w$}\n", w = width - kw - 2));
    }
    out.push_str(&"-".repeat(width));
    out.push('\n');
    out
}

pub fn cmd_run(g: &GlobalArgs, args: &RunArgs, stdout: &mut dyn Write) -> i32 {
    finish(run_impl(g, args, stdout))
}

fn run_impl(g: &GlobalArgs, args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context::new(g)?;
    let f = &ctx.file.run;
    let det_path = require("detections", args.detections.clone().or_else(|| f.detections.clone()))?;
    let scan_path = require("scans", args.scans.clone().or_else(|| f.scans.clone()))?;
    let calib_path = require(
        "calibration",
        args.calibration.clone().or_else(|| f.calibration.clone()),
    )?;
    let source = ctx.source();
    let params = PipelineParams {
        sort: f.sort.apply(SortParams::for_source(source)),
        fusion: f.fusion.apply(Default::default()),
        filter3d: f.filter3d.apply(Default::default()),
        source,
        raw_3d: ctx.raw_3d,
        frame_period: args.frame_period.or(f.frame_period),
        exec: Execution::default(),
    };
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let dets = load_detections(&det_path).map_err(data(&det_path))?;
    let scans = load_scans(&scan_path).map_err(data(&scan_path))?;
    let calib = load_calibration(&calib_path)?;
    let mismatched = dets.iter().filter(|d| d.source != source).count();
    if mismatched > 0 {
        log::warn!("{mismatched} detections are not from the {} source", source.as_str());
    }
    log::info!("{} detections, {} scans", dets.len(), scans.len());

    let out = pipeline::run(&dets, &scans, &calib, &params).map_err(|e| CliError::Data(e.to_string()))?;
    ctx.write(TRACKS_2D_FILE, &write_tracked(&out.tracks_2d))?;
    ctx.write(TRACKS_3D_FILE, &write_records(&out.tracks_3d))?;

    let mut ids: Vec<u64> = out.tracks_2d.iter().map(|t| t.track_id).collect();
    ids.sort_unstable();
    ids.dedup();
    let table = summary_table(
        &format!("Pipeline run ({} detection)", source_label(source)),
        &[
            ("Detections", dets.len().to_string()),
            ("LiDAR scans", scans.len().to_string()),
            ("2D tracks", ids.len().to_string()),
            ("2D track records", out.tracks_2d.len().to_string()),
            ("3D track records", out.tracks_3d.len().to_string()),
            (
                "3D output",
                if params.raw_3d { "raw LiDAR" } else { "CVKF" }.to_string(),
            ),
        ],
    );
    ctx.print(stdout, &table)
}

pub fn cmd_eval_pr(g: &GlobalArgs, args: &EvalPrArgs, stdout: &mut dyn Write) -> i32 {
    finish(eval_pr_impl(g, args, stdout))
}

fn check_unit(name: &str, v: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn eval_pr_impl(g: &GlobalArgs, args: &EvalPrArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context::new(g)?;
    let f = &ctx.file.eval_pr;
    let source = ctx.source.unwrap_or(DetectionSource::Event);
    let kind = match (args.table, f.table.as_deref()) {
        (Some(k), _) => k,
        (None, None | Some("both")) => TableKind::Both,
        (None, Some("iou")) => TableKind::Iou,
        (None, Some("conf")) => TableKind::Conf,
        (None, Some(other)) => return Err(CliError::Config(format!("unknown table {other:?} (iou, conf or both)"))),
    };
    let iou_conf = check_unit(
        "iou_table_confidence",
        args.iou_table_confidence.or(f.iou_table_confidence).unwrap_or(0.3),
    )?;
    let conf_iou = check_unit(
        "confidence_table_iou",
        args.confidence_table_iou.or(f.confidence_table_iou).unwrap_or(0.5),
    )?;

    let values = match args.from_csv.clone().or_else(|| f.from_csv.clone()) {
        Some(csv) => {
            let csv = require("from-csv", Some(csv))?;
            parse_pr_csv(&read_text(&csv)?).map_err(data(&csv))?
        }
        None => {
            let ref_path = require("reference", args.reference.clone().or_else(|| f.reference.clone()))?;
            let cand_path = require("candidate", args.candidate.clone().or_else(|| f.candidate.clone()))?;
            let tolerance = args.tolerance.or(f.tolerance).unwrap_or(0.025);
            if !(tolerance >= 0.0) {
                return Err(CliError::Config(format!(
                    "tolerance must be non-negative, got {tolerance}"
                )));
            }
            let mut grid = Grid::standard();
            if let Some(v) = &f.iou_thresholds {
                grid.iou = v.clone();
            }
            if let Some(v) = &f.confidence_thresholds {
                grid.confidence = v.clone();
            }
            for &v in grid.iou.iter().chain(&grid.confidence) {
                check_unit("threshold", v)?;
            }
            for v in [iou_conf, conf_iou] {
                if !grid.confidence.iter().chain(&grid.iou).any(|&x| (x - v).abs() < 1e-9) {
                    log::warn!("table threshold {v} is not on the sweep grid");
                }
            }
            let reference = load_detections(&ref_path).map_err(data(&ref_path))?;
            let candidate = load_detections(&cand_path).map_err(data(&cand_path))?;
            let frames = pair_frames(
                &filter_reference(&reference, REFERENCE_MIN_CONFIDENCE),
                &candidate,
                tolerance,
            );
            let tracking = !args.no_tracking && f.tracking.unwrap_or(true);
            let exec = Execution::default();
            let values = if tracking {
                let params = f.sort.apply(SortParams::for_source(source));
                params.validate().map_err(|e| CliError::Config(e.to_string()))?;
                let (pure, tracked) = pair_sweep_with_tracking(&frames, &params, &grid, exec)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                PrValues::from_tables(&pure, Some(&tracked))
            } else {
                PrValues::from_tables(&pr_sweep(&frames, &grid, exec), None)
            };
            ctx.write(PR_CSV_FILE, &pr_csv(&values))?;
            values
        }
    };

    let mut tables = Vec::new();
    if matches!(kind, TableKind::Iou | TableKind::Both) {
        tables.push(render_iou_table(&values, source, iou_conf));
    }
    if matches!(kind, TableKind::Conf | TableKind::Both) {
        tables.push(render_conf_table(&values, source, conf_iou));
    }
    ctx.print(stdout, &tables.join("\n"))
}

pub fn cmd_eval3d(g: &GlobalArgs, args: &Eval3dArgs, stdout: &mut dyn Write) -> i32 {
    finish(eval3d_impl(g, args, stdout))
}

fn parse_subjects(pairs: impl Iterator<Item = (String, String)>) -> Result<BTreeMap<ClassId, Subject>, CliError> {
    pairs
        .map(|(c, s)| {
            let class: ClassId = c
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("subject mapping: bad class id {c:?}")))?;
            let subject: Subject = s.trim().parse().map_err(CliError::Config)?;
            if !subject.is_person() {
                return Err(CliError::Config(format!("subject mapping: {subject} is not a person")));
            }
            Ok((class, subject))
        })
        .collect()
}

fn eval3d_impl(g: &GlobalArgs, args: &Eval3dArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context::new(g)?;
    let f = &ctx.file.eval_3d;
    if let Some(csv) = args.from_csv.clone().or_else(|| f.from_csv.clone()) {
        let csv = require("from-csv", Some(csv))?;
        let table = parse_error_csv(&read_text(&csv)?).map_err(data(&csv))?;
        return ctx.print(stdout, &render_error_table(&table));
    }

    let default_group = if ctx.raw_3d {
        "Filtering only"
    } else {
        "Filtering and CVKF"
    };
    let inputs: Vec<(PathBuf, String)> = if !args.tracks.is_empty() {
        if !args.group.is_empty() && args.group.len() != args.tracks.len() {
            return Err(CliError::Config(format!(
                "{} --group labels for {} --tracks files",
                args.group.len(),
                args.tracks.len()
            )));
        }
        args.tracks
            .iter()
            .enumerate()
            .map(|(i, p)| {
                (
                    p.clone(),
                    args.group.get(i).cloned().unwrap_or_else(|| default_group.into()),
                )
            })
            .collect()
    } else {
        f.tracks
            .iter()
            .map(|t| (t.path.clone(), t.group.clone().unwrap_or_else(|| default_group.into())))
            .collect()
    };
    if inputs.is_empty() {
        return Err(CliError::Config(
            "no tracks given (flag --tracks or config file)".into(),
        ));
    }
    let inputs = inputs
        .into_iter()
        .map(|(p, grp)| Ok((require("tracks", Some(p))?, grp)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let poses_path = require("poses", args.poses.clone().or_else(|| f.poses.clone()))?;
    let calib_path = require(
        "calibration",
        args.calibration.clone().or_else(|| f.calibration.clone()),
    )?;
    let gate = args.gate.or(f.gate).unwrap_or(DEFAULT_GATE_M);
    if !(gate > 0.0) {
        return Err(CliError::Config(format!("gate must be positive, got {gate}")));
    }
    let mut subjects = parse_subjects(f.subjects.clone().into_iter())?;
    let flagged = args
        .subjects
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| CliError::Config(format!("--subject expects CLASS=SUBJECT, got {s:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    subjects.extend(parse_subjects(flagged.into_iter())?);

    let poses = load_poses(&poses_path).map_err(data(&poses_path))?;
    let calib = load_calibration(&calib_path)?;
    let source = source_label(ctx.source());
    let mut table = ErrorTable::default();
    for (path, group) in &inputs {
        let records = parse_records(&read_text(path)?).map_err(data(path))?;
        let estimates: Vec<PositionEstimate> = records.iter().map(PositionEstimate::from).collect();
        let summary = position_errors(&estimates, &poses, &calib, &subjects, gate).map_err(data(path))?;
        if summary.out_of_span > 0 {
            log::warn!(
                "{}: {} estimates outside the ground-truth span",
                path.display(),
                summary.out_of_span
            );
        }
        if summary.report.count == 0 && !estimates.is_empty() {
            return Err(CliError::Data(format!(
                "{}: no estimate could be associated with ground truth",
                path.display()
            )));
        }
        table.insert(group, source, summary.report);
    }
    ctx.write(ERRORS_CSV_FILE, &error_csv(&table))?;
    ctx.print(stdout, &render_error_table(&table))
}

/// Scene used when no scene file is given: one person crossing the view
/// six metres ahead, with mild detector and LiDAR noise.
pub fn demo_scene(seed: u64) -> SceneConfig {
    let mut cfg = SceneConfig::new(seed, 6.0);
    cfg.agents.push(AgentConfig {
        class_id: CLASS_PERSON,
        subject: Some("helmet_1".into()),
        body: Body::Cylinder {
            radius: 0.25,
            height: 1.75,
        },
        waypoints: vec![[0.0, 6.0, -2.0, 0.0], [6.0, 6.0, 2.0, 0.0]],
    });
    cfg.detector.jitter_px = 1.0;
    cfg.detector.miss_prob = 0.05;
    cfg.detector.fp_rate = 0.05;
    cfg.lidar.range_noise = 0.02;
    cfg
}

pub fn cmd_simulate(g: &GlobalArgs, args: &SimulateArgs, stdout: &mut dyn Write) -> i32 {
    finish(simulate_impl(g, args, stdout))
}

fn simulate_impl(g: &GlobalArgs, args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context::new(g)?;
    let mut scene = match args.scene.clone().or_else(|| ctx.file.simulate.scene.clone()) {
        Some(p) => {
            let p = require("scene", Some(p))?;
            SceneConfig::from_toml_str(&read_text(&p)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => demo_scene(0),
    };
    if let Some(seed) = ctx.seed {
        scene.seed = seed;
    }
    if let Some(source) = ctx.source {
        scene.source = source;
    }
    let sim = simulate(&scene, Execution::default()).map_err(|e| CliError::Config(e.to_string()))?;
    sim.write_to(&ctx.out, &scene, &ctx.header())
        .map_err(|e| CliError::Config(e.to_string()))?;
    log::info!("wrote simulation to {}", ctx.out.display());
    let points: usize = sim.scans.iter().map(|s| s.points.len()).sum();
    let table = summary_table(
        &format!("Simulation (seed {})", scene.seed),
        &[
            ("Duration (s)", scene.duration.to_string()),
            ("Agents", scene.agents.len().to_string()),
            ("Detections", sim.detections.len().to_string()),
            ("Reference detections", sim.reference_detections.len().to_string()),
            ("LiDAR scans", sim.scans.len().to_string()),
            ("LiDAR points", points.to_string()),
            ("Pose samples", sim.poses.records().len().to_string()),
        ],
    );
    ctx.print(stdout, &table)
}

pub fn cmd_calibrate(g: &GlobalArgs, args: &CalibrateArgs, stdout: &mut dyn Write) -> i32 {
    finish(calibrate_impl(g, args, stdout))
}

#[derive(serde::Serialize)]
struct CalibrationResult {
    mode: &'static str,
    residuals: BTreeMap<&'static str, f64>,
    transform: TransformRecord,
}

fn calibrate_impl(g: &GlobalArgs, args: &CalibrateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context::new(g)?;
    let f = &ctx.file.calibrate;
    let mode = match (args.mode, f.mode.as_deref()) {
        (Some(m), _) => m,
        (None, Some("hand-eye")) => CalibrationMode::HandEye,
        (None, Some("point-to-plane")) => CalibrationMode::PointToPlane,
        (None, Some(other)) => {
            return Err(CliError::Config(format!(
                "unknown calibration mode {other:?} (hand-eye or point-to-plane)"
            )))
        }
        (None, None) => {
            return Err(CliError::Config(
                "no calibration mode given (flag --mode or config file)".into(),
            ))
        }
    };
    let input = require("input", args.input.clone().or_else(|| f.input.clone()))?;
    let existing = match args.calibration.clone().or_else(|| f.calibration.clone()) {
        Some(p) => Some(load_calibration(&require("calibration", Some(p))?)?),
        None => None,
    };

    let (name, transform, residuals, rows) = match mode {
        CalibrationMode::HandEye => {
            let samples = load_hand_eye(&input).map_err(data(&input))?;
            let s = solve_eye_in_hand(&samples).map_err(data(&input))?;
            let rot_deg = s.mean_rotation_residual.to_degrees();
            let rows = vec![
                ("Samples", samples.len().to_string()),
                ("Mean rotation residual (deg)", format!("{rot_deg:.3e}")),
                (
                    "Mean translation residual (m)",
                    format!("{:.3e}", s.mean_translation_residual),
                ),
            ];
            let residuals = BTreeMap::from([
                ("mean_rotation_deg", rot_deg),
                ("mean_translation_m", s.mean_translation_residual),
            ]);
            ("hand-eye", s.t_c_ms, residuals, rows)
        }
        CalibrationMode::PointToPlane => {
            let (obs, initial) = load_planes(&input).map_err(data(&input))?;
            let s = solve_point_to_plane(&obs, &initial).map_err(data(&input))?;
            let rows = vec![
                ("Planes", obs.len().to_string()),
                (
                    "Points",
                    obs.iter().map(|o| o.lidar_points.len()).sum::<usize>().to_string(),
                ),
                ("Iterations", s.iterations.to_string()),
                ("RMS point-to-plane residual (m)", format!("{:.3e}", s.rms_residual)),
                ("Cost (m^2)", format!("{:.3e}", s.cost)),
            ];
            let residuals = BTreeMap::from([("rms_m", s.rms_residual), ("cost_m2", s.cost)]);
            ("point-to-plane", s.t_c_l, residuals, rows)
        }
    };
    let t = transform.translation();
    let q = transform.quat_wxyz();
    let mut rows = rows;
    rows.push(("Translation (m)", format!("{:.6} {:.6} {:.6}", t.x, t.y, t.z)));
    rows.push((
        "Rotation (w x y z)",
        format!("{:.6} {:.6} {:.6} {:.6}", q[0], q[1], q[2], q[3]),
    ));

    let result = CalibrationResult {
        mode: name,
        residuals,
        transform: TransformRecord::from_transform(&transform),
    };
    ctx.write(
        CALIBRATION_RESULT_FILE,
        &toml::to_string(&result).expect("calibration result serializes"),
    )?;
    if let Some(mut calib) = existing {
        match mode {
            CalibrationMode::HandEye => calib.t_c_ms = transform.clone(),
            CalibrationMode::PointToPlane => calib.t_c_l = transform.clone(),
        }
        ctx.write("calibration.toml", &calib.to_toml_string())?;
    }
    let title = format!("Calibration: {name} ({}<-{})", transform.parent(), transform.child());
    ctx.print(stdout, &summary_table(&title, &rows))
}

use std::path::Path;
use std::process::{Command, Output};

use vlfuse_cli::{EXIT_CONFIG, EXIT_DATA};

fn vlfuse(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vlfuse"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Simulated inputs in `dir/sim`.
fn simulated(dir: &Path) -> Output {
    let o = vlfuse(&["simulate", "--seed", "3", "--out", "sim", "--no-timestamp"], dir);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    o
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = vlfuse(&["bogus"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn missing_input_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    let o = vlfuse(
        &[
            "run",
            "--detections",
            "sim/detections.txt",
            "--scans",
            "sim/nowhere.bin",
            "--calibration",
            "sim/calibration.toml",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&o).contains("sim/nowhere.bin"), "{}", stderr(&o));
}

#[test]
fn malformed_detections_are_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    std::fs::write(dir.path().join("bad.txt"), "0.0 0 0.9 10 10 20\n").unwrap();
    let o = vlfuse(
        &[
            "run",
            "--detections",
            "bad.txt",
            "--scans",
            "sim/scans.bin",
            "--calibration",
            "sim/calibration.toml",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(EXIT_DATA));
    assert!(stderr(&o).contains("bad.txt"), "{}", stderr(&o));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "seed = \"three\"\n").unwrap();
    let o = vlfuse(&["simulate", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn empty_detections_give_empty_tracks() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    std::fs::write(dir.path().join("empty.txt"), "").unwrap();
    let o = vlfuse(
        &[
            "run",
            "--detections",
            "empty.txt",
            "--scans",
            "sim/scans.bin",
            "--calibration",
            "sim/calibration.toml",
            "--out",
            "res",
            "--no-timestamp",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["tracks_2d.txt", "tracks_3d.txt"] {
        let text = std::fs::read_to_string(dir.path().join("res").join(f)).unwrap();
        assert!(
            text.lines().all(|l| l.trim().is_empty() || l.starts_with('#')),
            "{f}: {text}"
        );
    }
}

#[test]
fn identical_streams_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path());
    let o = vlfuse(
        &[
            "eval-pr",
            "--reference",
            "sim/reference_detections.txt",
            "--candidate",
            "sim/reference_detections.txt",
            "--out",
            "pr",
            "--no-timestamp",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("pr/pr.csv")).unwrap();
    let pure: Vec<&str> = csv.lines().skip(1).filter(|l| l.starts_with("pure,")).collect();
    assert_eq!(pure.len(), 9 * 13);
    for line in pure {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[4], "0", "{line}");
        assert_eq!(cells[5], "0", "{line}");
        assert_eq!(&cells[6..], ["1", "1"], "{line}");
    }
}

#[test]
fn tables_go_to_stdout_and_logs_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let o = simulated(dir.path());
    let out = stdout(&o);
    assert!(out.starts_with("Simulation (seed 3)"), "{out}");
    assert!(!out.contains("wrote"));
    assert!(stderr(&o).contains("wrote"));
}

#[test]
fn timestamp_header_is_optional() {
    let dir = tempfile::tempdir().unwrap();
    let o = vlfuse(&["simulate", "--out", "a"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("# generated at unix time "));
    let det = std::fs::read_to_string(dir.path().join("a/detections.txt")).unwrap();
    assert!(det.starts_with("# generated at unix time "));

    let o = vlfuse(&["simulate", "--out", "b", "--no-timestamp"], dir.path());
    assert!(!stdout(&o).contains("generated"));
    let det = std::fs::read_to_string(dir.path().join("b/detections.txt")).unwrap();
    assert!(!det.contains("generated"));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "seed = 11\nout = \"from_config\"\nno_timestamp = true\n",
    )
    .unwrap();
    let o = vlfuse(&["simulate", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("Simulation (seed 11)"));
    assert!(dir.path().join("from_config/detections.txt").is_file());

    let o = vlfuse(
        &["simulate", "--config", "c.toml", "--seed", "12", "--out", "from_flag"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("Simulation (seed 12)"));
    assert!(dir.path().join("from_flag/detections.txt").is_file());
}

#[test]
fn point_to_plane_calibration_fits_noiseless_boards() {
    let dir = tempfile::tempdir().unwrap();
    // LiDAR frame equals the camera frame shifted by (0, -0.1, 0); four
    // boards with spanning normals, all facing the camera
    let mut text = String::from("[initial]\ntranslation = [0.05, 0.0, 0.1]\nrotation_wxyz = [0.995, 0.05, 0.0, 0.0]\n");
    let boards: [([f64; 3], f64); 4] = [
        ([0.0, 0.0, -1.0], -4.0),
        ([-0.6, 0.0, -0.8], -3.0),
        ([0.0, -0.6, -0.8], -3.5),
        ([0.6, 0.6, -0.529_150_262_212_918], -2.5),
    ];
    for (n, d) in boards {
        // points on n·x = d in the camera frame, then shifted into LiDAR
        let nn = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let n = [n[0] / nn, n[1] / nn, n[2] / nn];
        let d = d / nn;
        let mut pts = Vec::new();
        for (a, b) in [(-0.4, -0.3), (0.4, -0.3), (0.0, 0.5), (0.3, 0.3), (-0.2, 0.1)] {
            // any x, y; solve for z
            let (x, y) = (a + 0.1, b);
            let z = (d - n[0] * x - n[1] * y) / n[2];
            pts.push(format!("[{x}, {}, {z}]", y + 0.1));
        }
        text.push_str(&format!(
            "\n[[plane]]\nnormal = [{}, {}, {}]\nd = {d}\npoints = [{}]\n",
            n[0],
            n[1],
            n[2],
            pts.join(", ")
        ));
    }
    std::fs::write(dir.path().join("planes.toml"), text).unwrap();
    let o = vlfuse(
        &[
            "calibrate",
            "--mode",
            "point-to-plane",
            "--input",
            "planes.toml",
            "--out",
            "cal",
            "--no-timestamp",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let result: toml::Table =
        toml::from_str(&std::fs::read_to_string(dir.path().join("cal/calibration_result.toml")).unwrap()).unwrap();
    let rms = result["residuals"]["rms_m"].as_float().unwrap();
    assert!(rms < 1e-6, "rms {rms}");
    let t = result["transform"]["translation"].as_array().unwrap();
    let t: Vec<f64> = t.iter().map(|v| v.as_float().unwrap()).collect();
    assert!(
        (t[0]).abs() < 1e-6 && (t[1] + 0.1).abs() < 1e-6 && t[2].abs() < 1e-6,
        "{t:?}"
    );
}

#[test]
fn example_files_are_valid() {
    let examples = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples");
    let cfg = vlfuse_cli::config::FileConfig::load(&examples.join("vlfuse.toml")).unwrap();
    assert_eq!(
        cfg.simulate.scene.as_deref(),
        Some(examples.join("scene.toml").as_path())
    );

    let dir = tempfile::tempdir().unwrap();
    let scene = examples.join("scene.toml");
    let o = vlfuse(
        &[
            "simulate",
            "--scene",
            scene.to_str().unwrap(),
            "--out",
            "s",
            "--no-timestamp",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Agents"));
}

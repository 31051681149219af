//! Deterministic synthetic scenes: a sensor rig watching cylinders (people)
//! and boxes (vehicles) move along waypoints over a ground plane.
//!
//! Randomness comes from ChaCha8 streams. Each noise source gets its own
//! stream per frame, keyed by `(seed, source, frame)`, so turning one noise
//! source on or off never shifts the draws of another, and a frame's noise
//! does not depend on what happened in earlier frames.
//!
//! Detections are boxes in raw (distorted) pixel coordinates, like the
//! output of a detector run on unrectified images. The reference stream is
//! the same scene without detector noise, misses or false positives, at
//! confidence 1.

mod config;
mod lidar;
mod silhouette;

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

pub use config::{
    waypoint_position, AgentConfig, Body, DetectorConfig, Extrinsics, LidarConfig, PlaneConfig, PoseConfig, RigConfig,
    SceneConfig, Waypoint,
};
pub use silhouette::{body_bbox, visible_bbox, NotVisible, NEAR_PLANE_M};

use crate::bbox::BBox;
use crate::detection_io::{
    write_detections, write_poses, write_scans, Detection2D, DetectionSource, GroundTruthPose, LidarPoint, LidarScan,
    PoseStream, Subject,
};
use crate::exec::{self, Execution};
use crate::geometry::{CalibrationSet, RigidTransform, FRAME_RIG_MARKERS, FRAME_WORLD};
use lidar::Ray;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scene config: {0}")]
    Config(String),
    #[error("agent {0} is not visible")]
    NotVisible(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Output file names inside the simulation directory.
pub const DETECTIONS_FILE: &str = "detections.txt";
pub const REFERENCE_FILE: &str = "reference_detections.txt";
pub const SCANS_FILE: &str = "scans.bin";
pub const POSES_FILE: &str = "poses.txt";
pub const CALIBRATION_FILE: &str = "calibration.toml";
pub const SCENE_FILE: &str = "scene.toml";

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Miss = 1,
    Jitter = 2,
    Confidence = 3,
    FalsePositive = 4,
    Lidar = 5,
}

fn rng(seed: u64, stream: Stream, frame: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((stream as u64) << 40) | frame);
    r
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub detections: Vec<Detection2D>,
    pub reference_detections: Vec<Detection2D>,
    pub scans: Vec<LidarScan>,
    pub poses: PoseStream,
    pub calibration: CalibrationSet,
}

impl SimOutput {
    /// Writes every output in the `detection_io` formats; creates `dir`.
    /// `header` (comment lines, may be empty) is prepended to the text files.
    pub fn write_to(&self, dir: &Path, config: &SceneConfig, header: &str) -> Result<(), SimError> {
        let io = |path: &Path, source| SimError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let text = |body: String| format!("{header}{body}").into_bytes();
        let files: [(&str, Vec<u8>); 6] = [
            (DETECTIONS_FILE, text(write_detections(&self.detections))),
            (REFERENCE_FILE, text(write_detections(&self.reference_detections))),
            (SCANS_FILE, write_scans(&self.scans)),
            (POSES_FILE, text(write_poses(self.poses.records()))),
            (CALIBRATION_FILE, text(self.calibration.to_toml_string())),
            (SCENE_FILE, text(config.to_toml_string())),
        ];
        for (name, bytes) in files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

/// Precomputed scene geometry shared by all generators.
struct Scene<'a> {
    cfg: &'a SceneConfig,
    calib: CalibrationSet,
    rig_rotation: nalgebra::UnitQuaternion<f64>,
}

impl<'a> Scene<'a> {
    fn new(cfg: &'a SceneConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            calib: cfg.calibration()?,
            rig_rotation: cfg.rig.to_rotation()?,
        })
    }

    /// `T_W^{MS}(t)`.
    fn rig_pose(&self, t: f64) -> RigidTransform {
        RigidTransform::from_parts(
            FRAME_WORLD,
            FRAME_RIG_MARKERS,
            self.rig_rotation,
            waypoint_position(&self.cfg.rig.waypoints, t),
        )
    }

    /// `T_C^W(t)`.
    fn camera_from_world(&self, t: f64) -> RigidTransform {
        self.calib
            .t_c_ms
            .compose(&self.rig_pose(t).inverse())
            .expect("frames chain C<-MS<-W")
    }

    /// `T_W^L(t)`.
    fn world_from_lidar(&self, t: f64) -> RigidTransform {
        self.rig_pose(t)
            .compose(&self.calib.t_c_ms.inverse())
            .and_then(|w_c| w_c.compose(&self.calib.t_c_l))
            .expect("frames chain W<-MS<-C<-L")
    }

    fn agent_base(&self, i: usize, t: f64) -> Vector3<f64> {
        waypoint_position(&self.cfg.agents[i].waypoints, t)
    }

    /// Noiseless clipped box of every agent at `t`, after depth-order
    /// occlusion suppression.
    fn visible_boxes(&self, t: f64) -> Vec<Option<BBox>> {
        let t_c_w = self.camera_from_world(t);
        let k = &self.calib.intrinsics;
        let boxes: Vec<(Option<BBox>, f64)> = self
            .cfg
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let base = self.agent_base(i, t);
                let centre = base + Vector3::new(0.0, 0.0, a.body.height() / 2.0);
                let depth = t_c_w.transform_point(&centre).z;
                (visible_bbox(k, &t_c_w, &base, &a.body).ok(), depth)
            })
            .collect();
        let frac = self.cfg.detector.occlusion_fraction;
        boxes
            .iter()
            .enumerate()
            .map(|(i, (b, depth))| {
                let b = (*b)?;
                let hidden = boxes.iter().enumerate().any(|(j, (o, dj))| {
                    j != i && *dj < *depth && o.is_some_and(|o| b.intersection_area(&o) >= frac * b.area())
                });
                (!hidden).then_some(b)
            })
            .collect()
    }
}

/// Noiseless image box of agent `agent` at `t`, clipped to the image.
pub fn expected_bbox(config: &SceneConfig, agent: usize, t: f64) -> Result<BBox, SimError> {
    let scene = Scene::new(config)?;
    if agent >= config.agents.len() {
        return Err(SimError::Config(format!("no agent {agent}")));
    }
    let t_c_w = scene.camera_from_world(t);
    visible_bbox(
        &scene.calib.intrinsics,
        &t_c_w,
        &scene.agent_base(agent, t),
        &config.agents[agent].body,
    )
    .map_err(|_| SimError::NotVisible(agent))
}

fn camera_times(cfg: &SceneConfig) -> Vec<f64> {
    (0u64..)
        .map(|k| k as f64 / cfg.camera_rate)
        .take_while(|&t| t < cfg.duration)
        .collect()
}

fn detector_frame(scene: &Scene, frame: u64, t: f64) -> (Vec<Detection2D>, Vec<Detection2D>) {
    let cfg = scene.cfg;
    let d = &cfg.detector;
    let k = &scene.calib.intrinsics;
    let (w, h) = (k.width as f64, k.height as f64);
    let mut miss = rng(cfg.seed, Stream::Miss, frame);
    let mut jitter = rng(cfg.seed, Stream::Jitter, frame);
    let mut conf = rng(cfg.seed, Stream::Confidence, frame);
    let noise = Normal::new(0.0, d.jitter_px).expect("validated jitter");
    let draw_conf = |r: &mut ChaCha8Rng| {
        let [c0, c1] = d.confidence;
        let u: f64 = r.random();
        c0 + (c1 - c0) * u
    };

    let mut reference = Vec::new();
    let mut detections = Vec::new();
    for (agent, bbox) in cfg.agents.iter().zip(scene.visible_boxes(t)) {
        // draw unconditionally so every agent consumes the same stream slots
        let missed = miss.random::<f64>() < d.miss_prob;
        let offsets: [f64; 4] = std::array::from_fn(|_| noise.sample(&mut jitter));
        let c = draw_conf(&mut conf);
        let Some(b) = bbox else { continue };
        reference.push(Detection2D {
            t,
            bbox: b,
            class_id: agent.class_id,
            confidence: 1.0,
            source: DetectionSource::Rgb,
        });
        if missed {
            continue;
        }
        let [x1, y1, x2, y2] = b.corners();
        let (x1, x2) = (x1 + offsets[0], x2 + offsets[2]);
        let (y1, y2) = (y1 + offsets[1], y2 + offsets[3]);
        let noisy = BBox::new(x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2))
            .ok()
            .and_then(|b| b.clip_to_image(w, h));
        if let Some(bbox) = noisy {
            detections.push(Detection2D {
                t,
                bbox,
                class_id: agent.class_id,
                confidence: c,
                source: cfg.source,
            });
        }
    }

    if d.fp_rate > 0.0 {
        let mut fp = rng(cfg.seed, Stream::FalsePositive, frame);
        let n = Poisson::new(d.fp_rate).expect("validated rate").sample(&mut fp) as usize;
        for _ in 0..n {
            let [s0, s1] = d.fp_size;
            let (cx, cy) = (fp.random::<f64>() * w, fp.random::<f64>() * h);
            let bw = s0 + (s1 - s0) * fp.random::<f64>();
            let bh = s0 + (s1 - s0) * fp.random::<f64>();
            let c = draw_conf(&mut fp);
            let bbox = BBox::from_center(cx, cy, bw, bh)
                .ok()
                .and_then(|b| b.clip_to_image(w, h));
            if let Some(bbox) = bbox {
                detections.push(Detection2D {
                    t,
                    bbox,
                    class_id: d.fp_class,
                    confidence: c,
                    source: cfg.source,
                });
            }
        }
    }
    (detections, reference)
}

fn scan(scene: &Scene, k: u64) -> LidarScan {
    let cfg = scene.cfg;
    let l = &cfg.lidar;
    let period = 1.0 / l.rate_hz;
    let start = k as f64 * period;
    let (h_fov, v_fov) = (l.h_fov_deg.to_radians(), l.v_fov_deg.to_radians());
    let ang = Normal::new(0.0, l.angular_noise_deg.to_radians()).expect("validated noise");
    let rng_noise = Normal::new(0.0, l.range_noise).expect("validated noise");
    let mut r = rng(cfg.seed, Stream::Lidar, k);
    let mut points = Vec::new();
    for c in 0..l.columns {
        let t = start + (c as f64 + 0.5) * period / l.columns as f64;
        let w_l = scene.world_from_lidar(t);
        let bases: Vec<_> = (0..cfg.agents.len()).map(|i| scene.agent_base(i, t)).collect();
        let az = lidar::column_azimuth(c, l.columns, h_fov);
        for row in 0..l.rows {
            let el = lidar::row_elevation(row, l.rows, v_fov);
            let (da, de, dr) = (ang.sample(&mut r), ang.sample(&mut r), rng_noise.sample(&mut r));
            let ray = Ray {
                origin: *w_l.translation(),
                dir: w_l.transform_vector(&lidar::beam_direction(az + da, el + de)),
            };
            let hit = cfg
                .agents
                .iter()
                .zip(&bases)
                .filter_map(|(a, b)| lidar::hit_body(&ray, b, &a.body))
                .chain(l.planes.iter().filter_map(|p| lidar::hit_plane(&ray, p)))
                .fold(f64::INFINITY, f64::min);
            if hit > l.max_range {
                continue;
            }
            // the sensor reports the nominal beam direction
            let p = lidar::beam_direction(az, el) * (hit + dr);
            points.push(LidarPoint {
                x: p.x as f32,
                y: p.y as f32,
                z: p.z as f32,
                t,
            });
        }
    }
    LidarScan {
        scan_t: start + period / 2.0,
        points,
    }
}

fn ground_truth(scene: &Scene) -> Result<PoseStream, SimError> {
    let cfg = scene.cfg;
    let subjects: Vec<(usize, Subject)> = cfg
        .agents
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.subject().transpose().map(|s| s.map(|s| (i, s))))
        .collect::<Result<_, _>>()?;
    let n = (cfg.duration * cfg.pose_rate).ceil() as u64;
    let mut records = Vec::new();
    for j in 0..=n {
        let t = j as f64 / cfg.pose_rate;
        records.push(GroundTruthPose {
            t,
            subject: Subject::SensorRig,
            pose: scene.rig_pose(t),
        });
        for &(i, subject) in &subjects {
            // helmet marker on top of the body
            let top = scene.agent_base(i, t) + Vector3::new(0.0, 0.0, cfg.agents[i].body.height());
            records.push(GroundTruthPose {
                t,
                subject,
                pose: RigidTransform::from_parts(FRAME_WORLD, subject.frame(), Default::default(), top),
            });
        }
    }
    PoseStream::new(records).map_err(SimError::Config)
}

/// Generates every sensor stream of `config`. Scans are independent and may
/// be ray-cast in parallel; the result does not depend on `exec`.
pub fn simulate(config: &SceneConfig, exec: Execution) -> Result<SimOutput, SimError> {
    let scene = Scene::new(config)?;
    let mut detections = Vec::new();
    let mut reference_detections = Vec::new();
    for (frame, t) in camera_times(config).into_iter().enumerate() {
        let (d, r) = detector_frame(&scene, frame as u64, t);
        detections.extend(d);
        reference_detections.extend(r);
    }
    let period = 1.0 / config.lidar.rate_hz;
    let scan_ids: Vec<u64> = (0u64..)
        .take_while(|&k| (k as f64 + 0.5) * period < config.duration)
        .collect();
    let scans = exec::map(exec, &scan_ids, |&k| scan(&scene, k));
    Ok(SimOutput {
        detections,
        reference_detections,
        scans,
        poses: ground_truth(&scene)?,
        calibration: scene.calib.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection_io::CLASS_PERSON;

    fn one_agent(seed: u64) -> SceneConfig {
        let mut cfg = SceneConfig::new(seed, 2.0);
        cfg.agents.push(AgentConfig {
            class_id: CLASS_PERSON,
            subject: Some("helmet_1".into()),
            body: Body::Cylinder {
                radius: 0.3,
                height: 1.7,
            },
            waypoints: vec![[0.0, 6.0, 0.0, 0.0]],
        });
        cfg
    }

    #[test]
    fn noiseless_boxes_equal_expected_bbox() {
        let cfg = one_agent(1);
        let out = simulate(&cfg, Execution::Sequential).unwrap();
        assert_eq!(out.detections.len(), 40);
        let want = expected_bbox(&cfg, 0, 0.0).unwrap();
        for d in out.detections.iter().chain(&out.reference_detections) {
            for (a, b) in d.bbox.corners().iter().zip(want.corners()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        // agent centred ahead: box centred on the principal column
        assert!((want.center().0 - 320.0).abs() < 1e-6);
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut cfg = one_agent(7);
        cfg.detector.jitter_px = 2.0;
        cfg.detector.miss_prob = 0.2;
        cfg.detector.fp_rate = 0.5;
        cfg.lidar.range_noise = 0.05;
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            simulate(&cfg, Execution::Parallel)
                .unwrap()
                .write_to(d.path(), &cfg, "")
                .unwrap();
        }
        for f in [
            DETECTIONS_FILE,
            REFERENCE_FILE,
            SCANS_FILE,
            POSES_FILE,
            CALIBRATION_FILE,
        ] {
            let a = std::fs::read(dirs[0].path().join(f)).unwrap();
            let b = std::fs::read(dirs[1].path().join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
        let seq = simulate(&cfg, Execution::Sequential).unwrap();
        let par = simulate(&cfg, Execution::Parallel).unwrap();
        assert_eq!(seq.scans, par.scans);
    }

    #[test]
    fn noise_sources_do_not_interfere() {
        let mut a = one_agent(3);
        a.detector.jitter_px = 2.0;
        let mut b = a.clone();
        b.detector.fp_rate = 1.0;
        b.detector.fp_class = 2;
        b.lidar.range_noise = 0.1;
        let (a, b) = (
            simulate(&a, Execution::Sequential).unwrap(),
            simulate(&b, Execution::Sequential).unwrap(),
        );
        let agent_boxes = |o: &SimOutput| -> Vec<BBox> {
            o.detections
                .iter()
                .filter(|d| d.class_id == CLASS_PERSON)
                .map(|d| d.bbox)
                .collect()
        };
        assert_eq!(agent_boxes(&a).len(), 40);
        assert_eq!(agent_boxes(&b), agent_boxes(&a));
        assert!(b.detections.len() > a.detections.len());
    }

    #[test]
    fn certain_misses_leave_scans() {
        let mut cfg = one_agent(5);
        cfg.detector.miss_prob = 1.0;
        let out = simulate(&cfg, Execution::Sequential).unwrap();
        assert!(out.detections.is_empty());
        assert_eq!(out.reference_detections.len(), 40);
        assert_eq!(out.scans.len(), 20);
        assert!(out.scans.iter().all(|s| !s.points.is_empty()));
        for (i, s) in out.scans.iter().enumerate() {
            s.validate(i).unwrap();
        }
    }

    #[test]
    fn lidar_sees_the_agent_in_its_box() {
        let cfg = one_agent(9);
        let out = simulate(&cfg, Execution::Sequential).unwrap();
        let want = expected_bbox(&cfg, 0, 0.0).unwrap();
        let k = &out.calibration.intrinsics;
        let on_agent: Vec<_> = out.scans[0]
            .points
            .iter()
            .filter_map(|p| {
                let c = out.calibration.t_c_l.transform_point(&p.position());
                let px = k.project(&c, true).ok()?;
                want.contains_strict(px.x, px.y).then_some(c)
            })
            .filter(|c| (c.z - 5.95).abs() < 0.5)
            .collect();
        assert!(on_agent.len() > 20, "{}", on_agent.len());
        // front surface of a 0.3 m cylinder whose axis is 5.95 m ahead of the camera
        assert!(on_agent.iter().all(|c| c.z > 5.64 && c.z < 5.95));
    }

    #[test]
    fn helmet_pose_tracks_agent_top() {
        let mut cfg = one_agent(2);
        cfg.agents[0].waypoints = vec![[0.0, 6.0, -1.0, 0.0], [2.0, 6.0, 1.0, 0.0]];
        let out = simulate(&cfg, Execution::Sequential).unwrap();
        let p = out.poses.interpolate(Subject::Helmet1, 1.0).unwrap();
        assert!((p.translation() - Vector3::new(6.0, 0.0, 1.7)).norm() < 1e-12);
        assert_eq!(out.poses.span(Subject::SensorRig), Some((0.0, 2.0)));
    }

    #[test]
    fn occluded_agent_is_suppressed() {
        let mut cfg = one_agent(4);
        cfg.agents.push(AgentConfig {
            class_id: CLASS_PERSON,
            subject: None,
            body: Body::Cylinder {
                radius: 0.3,
                height: 1.7,
            },
            waypoints: vec![[0.0, 9.0, 0.0, 0.0]],
        });
        let out = simulate(&cfg, Execution::Sequential).unwrap();
        assert_eq!(out.reference_detections.len(), 40);
        cfg.detector.occlusion_fraction = 1.0;
        cfg.agents[1].waypoints = vec![[0.0, 9.0, 3.0, 0.0]];
        let out = simulate(&cfg, Execution::Sequential).unwrap();
        assert_eq!(out.reference_detections.len(), 80);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = one_agent(1);
        cfg.detector.miss_prob = 1.5;
        assert!(matches!(
            simulate(&cfg, Execution::Sequential),
            Err(SimError::Config(_))
        ));
        let mut cfg = one_agent(1);
        cfg.agents[0].waypoints = vec![[0.0, -5.0, 0.0, 0.0]];
        assert!(matches!(expected_bbox(&cfg, 0, 0.0), Err(SimError::NotVisible(0))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = one_agent(11);
        cfg.agents.push(AgentConfig {
            class_id: 2,
            subject: None,
            body: Body::Box { size: [4.0, 1.8, 1.5] },
            waypoints: vec![[0.0, 12.0, 4.0, 0.0], [2.0, 12.0, -4.0, 0.0]],
        });
        let back = SceneConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }
}

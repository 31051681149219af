//! The full chain: SORT over camera frames, LiDAR point selection per
//! tracked box, then one 3D filter per 2D track.
//!
//! Each LiDAR scan is fused once, against the camera frame closest to the
//! scan timestamp; the 3D observation carries the median firing time of its
//! points.

use thiserror::Error;

use crate::detection_io::{group_frames, Detection2D, DetectionSource, LidarScan, TrackedDetection};
use crate::exec::Execution;
use crate::geometry::CalibrationSet;
use crate::lidar_fusion::{fuse_bbox, select_scan, FusionParams};
use crate::sort2d::{SortError, SortParams, SortTracker};
use crate::track3d::{Filter3dParams, FusedInput, Track3dError, Track3dRecord, Tracker3D};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error(transparent)]
    Track3d(#[from] Track3dError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineParams {
    pub sort: SortParams,
    pub fusion: FusionParams,
    pub filter3d: Filter3dParams,
    pub source: DetectionSource,
    /// Report the fused LiDAR median instead of the filtered position.
    pub raw_3d: bool,
    /// Camera frame period, used to insert frames that produced no
    /// detections; inferred from the detection timestamps when `None`.
    pub frame_period: Option<f64>,
    pub exec: Execution,
}

impl PipelineParams {
    pub fn for_source(source: DetectionSource) -> Self {
        Self {
            sort: SortParams::for_source(source),
            fusion: FusionParams::default(),
            filter3d: Filter3dParams::default(),
            source,
            raw_3d: false,
            frame_period: None,
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.sort.validate()?;
        self.fusion.validate().map_err(PipelineError::InvalidParams)?;
        self.filter3d.validate().map_err(PipelineError::InvalidParams)?;
        if let Some(p) = self.frame_period {
            if !(p > 0.0 && p.is_finite()) {
                return Err(PipelineError::InvalidParams(format!(
                    "frame period must be positive, got {p}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub tracks_2d: Vec<TrackedDetection>,
    pub tracks_3d: Vec<Track3dRecord>,
}

/// Median spacing of distinct detection timestamps.
pub fn infer_frame_period(dets: &[Detection2D]) -> Option<f64> {
    let mut gaps: Vec<f64> = dets.windows(2).map(|w| w[1].t - w[0].t).filter(|&g| g > 0.0).collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    Some(gaps[(gaps.len() - 1) / 2])
}

/// Runs the pipeline over a time-ordered detection stream and time-ordered
/// scans.
pub fn run(
    dets: &[Detection2D],
    scans: &[LidarScan],
    calib: &CalibrationSet,
    params: &PipelineParams,
) -> Result<PipelineOutput, PipelineError> {
    params.validate()?;
    let period = params.frame_period.or_else(|| infer_frame_period(dets));
    let frames = group_frames(dets, period);

    // the camera frame nearest to each scan (earlier frame on ties)
    let mut fusing_frame: Vec<Option<usize>> = vec![None; scans.len()];
    for (fi, f) in frames.iter().enumerate() {
        if let Some(si) = select_scan(scans, f.t, params.fusion.scan_time_tolerance) {
            let closer = fusing_frame[si]
                .is_none_or(|prev| (f.t - scans[si].scan_t).abs() < (frames[prev].t - scans[si].scan_t).abs());
            if closer {
                fusing_frame[si] = Some(fi);
            }
        }
    }
    let mut scan_of_frame: Vec<Option<usize>> = vec![None; frames.len()];
    for (si, fi) in fusing_frame.iter().enumerate() {
        if let Some(fi) = fi {
            scan_of_frame[*fi] = Some(si);
        }
    }

    let mut sort = SortTracker::new(params.sort)?;
    let mut tracker = Tracker3D::new(params.filter3d);
    let mut out = PipelineOutput::default();
    for (fi, frame) in frames.iter().enumerate() {
        let step = sort.step(frame.t, &frame.detections)?;
        tracker.remove_dead(&step.deleted);
        for o in &step.emitted {
            out.tracks_2d.push(TrackedDetection {
                detection: Detection2D {
                    t: frame.t,
                    bbox: o.bbox,
                    class_id: o.class_id,
                    confidence: o.confidence,
                    source: params.source,
                },
                track_id: o.track_id,
            });
        }
        let Some(si) = scan_of_frame[fi] else { continue };
        // coasted boxes are predictions, not evidence
        let fused: Vec<FusedInput> = step
            .emitted
            .iter()
            .filter(|o| !o.coasted)
            .filter_map(|o| {
                let f = fuse_bbox(&scans[si], calib, &o.bbox, &params.fusion, params.exec).ok()?;
                Some(FusedInput {
                    track_id: o.track_id,
                    class_id: o.class_id,
                    position: f.position,
                    t: f.t,
                })
            })
            .collect();
        let mut records = tracker.manage(&fused)?;
        if params.raw_3d {
            for (r, f) in records.iter_mut().zip(&fused) {
                r.position = f.position;
            }
        }
        out.tracks_3d.extend(records);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection_io::CLASS_PERSON;
    use crate::simulator::{simulate, AgentConfig, Body, SceneConfig};

    fn walking_scene() -> SceneConfig {
        let mut cfg = SceneConfig::new(21, 4.0);
        cfg.agents.push(AgentConfig {
            class_id: CLASS_PERSON,
            subject: Some("helmet_1".into()),
            body: Body::Cylinder {
                radius: 0.05,
                height: 1.7,
            },
            waypoints: vec![[0.0, 6.0, -1.5, 0.0], [4.0, 6.0, 1.5, 0.0]],
        });
        cfg
    }

    #[test]
    fn frame_period_is_the_median_gap() {
        let d = |t: f64| Detection2D {
            t,
            bbox: crate::BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            class_id: 0,
            confidence: 1.0,
            source: DetectionSource::Rgb,
        };
        let dets: Vec<_> = [0.0, 0.0, 0.05, 0.1, 0.3, 0.35].into_iter().map(d).collect();
        assert!((infer_frame_period(&dets).unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(infer_frame_period(&dets[..2]), None);
    }

    #[test]
    fn empty_detections_give_empty_tracks() {
        let cfg = walking_scene();
        let sim = simulate(&cfg, Execution::Sequential).unwrap();
        let out = run(
            &[],
            &sim.scans,
            &sim.calibration,
            &PipelineParams::for_source(DetectionSource::Rgb),
        )
        .unwrap();
        assert_eq!(out, PipelineOutput::default());
    }

    #[test]
    fn tracks_walking_agent_in_3d() {
        let cfg = walking_scene();
        let sim = simulate(&cfg, Execution::Sequential).unwrap();
        let params = PipelineParams::for_source(DetectionSource::Rgb);
        let out = run(&sim.detections, &sim.scans, &sim.calibration, &params).unwrap();
        assert!(out.tracks_2d.iter().all(|t| t.track_id == out.tracks_2d[0].track_id));
        assert!(out.tracks_3d.len() >= 30, "{}", out.tracks_3d.len());
        // agent moves along world +y (camera −x) at 0.75 m/s
        let last = out.tracks_3d.last().unwrap();
        assert!((last.velocity.x + 0.75).abs() < 0.15, "{:?}", last.velocity);
        // sequential and parallel point selection agree
        let par = run(
            &sim.detections,
            &sim.scans,
            &sim.calibration,
            &PipelineParams {
                exec: Execution::Parallel,
                ..params
            },
        )
        .unwrap();
        assert_eq!(par, out);
    }

    #[test]
    fn raw_mode_reports_fused_medians() {
        let cfg = walking_scene();
        let sim = simulate(&cfg, Execution::Sequential).unwrap();
        let mut params = PipelineParams::for_source(DetectionSource::Rgb);
        let filtered = run(&sim.detections, &sim.scans, &sim.calibration, &params).unwrap();
        params.raw_3d = true;
        let raw = run(&sim.detections, &sim.scans, &sim.calibration, &params).unwrap();
        assert_eq!(raw.tracks_3d.len(), filtered.tracks_3d.len());
        // the first record of a track is its first observation in both modes
        assert_eq!(raw.tracks_3d[0].position, filtered.tracks_3d[0].position);
        assert!(raw
            .tracks_3d
            .iter()
            .zip(&filtered.tracks_3d)
            .any(|(a, b)| a.position != b.position));
        for (a, b) in raw.tracks_3d.iter().zip(&filtered.tracks_3d) {
            assert_eq!(a.velocity, b.velocity);
        }
    }

    fn xz_mae(cfg: &SceneConfig) -> f64 {
        use crate::evaluation::{position_errors, PositionEstimate, DEFAULT_GATE_M};
        let sim = simulate(cfg, Execution::Sequential).unwrap();
        let out = run(
            &sim.detections,
            &sim.scans,
            &sim.calibration,
            &PipelineParams::for_source(DetectionSource::Rgb),
        )
        .unwrap();
        let est: Vec<PositionEstimate> = out.tracks_3d.iter().map(PositionEstimate::from).collect();
        let s = position_errors(&est, &sim.poses, &sim.calibration, &Default::default(), DEFAULT_GATE_M).unwrap();
        assert_eq!(s.unassociated, 0);
        assert!(s.report.count >= 30);
        s.report.xz.mae
    }

    // The LiDAR sees the near surface while the helmet sits on the body
    // axis, so the XZ error carries a bias of about one body radius.
    #[test]
    fn walking_agent_xz_error() {
        let mut cfg = walking_scene();
        cfg.lidar.columns = 320;
        cfg.agents[0].body = Body::Cylinder {
            radius: 0.04,
            height: 1.7,
        };
        assert!(xz_mae(&cfg) <= 0.05);
        cfg.agents[0].body = Body::Cylinder {
            radius: 0.2,
            height: 1.7,
        };
        cfg.detector.jitter_px = 2.0;
        cfg.lidar.range_noise = 0.05;
        assert!(xz_mae(&cfg) <= 0.25);
    }
}

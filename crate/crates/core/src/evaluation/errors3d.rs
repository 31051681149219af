use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::EvalError;
use crate::detection_io::{ClassId, PoseStream, Subject};
use crate::geometry::CalibrationSet;
use crate::track3d::Track3dRecord;

/// Nearest-neighbour association gate for estimates without a class label, metres.
pub const DEFAULT_GATE_M: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub t: f64,
    pub track_id: u64,
    pub class_id: ClassId,
    /// Camera frame, metres.
    pub position: Vector3<f64>,
}

impl From<&Track3dRecord> for PositionEstimate {
    fn from(r: &Track3dRecord) -> Self {
        Self {
            t: r.t,
            track_id: r.track_id,
            class_id: r.class_id,
            position: r.position,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AxisError {
    pub mae: f64,
    pub rmse: f64,
}

/// Per-axis and planar (XZ) position errors.
///
/// Y is the gravity axis; the reference is the helmet (head) while the
/// LiDAR points concentrate around the torso, so Y mostly measures that
/// offset rather than pipeline error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorReport {
    pub x: AxisError,
    pub y: AxisError,
    pub z: AxisError,
    pub xz: AxisError,
    pub count: usize,
}

impl ErrorReport {
    /// `(label, axis)` in table order.
    pub fn rows(&self) -> [(&'static str, AxisError); 4] {
        [("X", self.x), ("Y", self.y), ("Z", self.z), ("XZ", self.xz)]
    }
}

#[derive(Debug, Clone, Default)]
pub struct ErrorAccumulator {
    n: usize,
    abs: [f64; 3],
    sq: [f64; 3],
    xz_abs: f64,
    xz_sq: f64,
}

impl ErrorAccumulator {
    pub fn push(&mut self, err: &Vector3<f64>) {
        self.n += 1;
        for k in 0..3 {
            self.abs[k] += err[k].abs();
            self.sq[k] += err[k] * err[k];
        }
        let xz2 = err.x * err.x + err.z * err.z;
        self.xz_abs += xz2.sqrt();
        self.xz_sq += xz2;
    }

    pub fn report(&self) -> ErrorReport {
        if self.n == 0 {
            return ErrorReport::default();
        }
        let n = self.n as f64;
        let axis = |abs: f64, sq: f64| AxisError {
            mae: abs / n,
            rmse: (sq / n).sqrt(),
        };
        ErrorReport {
            x: axis(self.abs[0], self.sq[0]),
            y: axis(self.abs[1], self.sq[1]),
            z: axis(self.abs[2], self.sq[2]),
            xz: axis(self.xz_abs, self.xz_sq),
            count: self.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub report: ErrorReport,
    /// Estimates outside the recorded pose span.
    pub out_of_span: usize,
    /// Estimates with no person within the gate.
    pub unassociated: usize,
}

/// Errors of camera-frame estimates against motion-capture ground truth,
/// `p_C = T_C^{MS} ∘ (T_W^{MS}(t))⁻¹ ∘ T_W^{M_i}(t) · 0`.
///
/// An estimate is compared with the subject its class maps to in
/// `subject_classes`; otherwise with the nearest person within `gate` metres.
pub fn position_errors(
    estimates: &[PositionEstimate],
    poses: &PoseStream,
    calib: &CalibrationSet,
    subject_classes: &BTreeMap<ClassId, Subject>,
    gate: f64,
) -> Result<ErrorSummary, EvalError> {
    let persons: Vec<Subject> = poses.subjects().filter(|s| s.is_person()).collect();
    let mut acc = ErrorAccumulator::default();
    let (mut out_of_span, mut unassociated) = (0, 0);
    for e in estimates {
        let Ok(rig) = poses.interpolate(Subject::SensorRig, e.t) else {
            out_of_span += 1;
            continue;
        };
        let mut truth = Vec::new();
        for &s in &persons {
            if let Ok(m) = poses.interpolate(s, e.t) {
                truth.push((s, calib.marker_in_camera(&rig, &m)?));
            }
        }
        if truth.is_empty() {
            out_of_span += 1;
            continue;
        }
        let target = match subject_classes.get(&e.class_id) {
            Some(s) => truth.iter().find(|(x, _)| x == s).map(|(_, p)| *p),
            None => truth
                .iter()
                .map(|(_, p)| (p, (p - e.position).norm()))
                .filter(|(_, d)| *d <= gate)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(p, _)| *p),
        };
        match target {
            Some(p) => acc.push(&(e.position - p)),
            None => unassociated += 1,
        }
    }
    if !estimates.is_empty() && out_of_span == estimates.len() {
        return Err(EvalError::NoOverlap);
    }
    if unassociated > 0 {
        log::warn!("{unassociated} estimates had no ground-truth person within {gate} m");
    }
    Ok(ErrorSummary {
        report: acc.report(),
        out_of_span,
        unassociated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection_io::GroundTruthPose;
    use crate::geometry::{
        CameraIntrinsics, Distortion, RigidTransform, FRAME_CAMERA, FRAME_IMU, FRAME_LIDAR, FRAME_RIG_MARKERS,
        FRAME_WORLD,
    };

    fn calib() -> CalibrationSet {
        CalibrationSet::new(
            RigidTransform::identity(FRAME_CAMERA).with_frames(FRAME_CAMERA, FRAME_LIDAR),
            RigidTransform::from_translation(FRAME_CAMERA, FRAME_RIG_MARKERS, Vector3::new(0.0, 0.1, 0.0)),
            RigidTransform::identity(FRAME_CAMERA).with_frames(FRAME_CAMERA, FRAME_IMU),
            CameraIntrinsics::new(400.0, 400.0, 320.0, 240.0, Distortion::default(), 640, 480).unwrap(),
        )
        .unwrap()
    }

    fn stream() -> PoseStream {
        let mut recs = Vec::new();
        for k in 0..=100 {
            let t = k as f64 * 0.01;
            recs.push(GroundTruthPose {
                t,
                subject: Subject::SensorRig,
                pose: RigidTransform::from_translation(FRAME_WORLD, FRAME_RIG_MARKERS, Vector3::new(0.0, 0.0, 0.0)),
            });
            recs.push(GroundTruthPose {
                t,
                subject: Subject::Helmet1,
                pose: RigidTransform::from_translation(FRAME_WORLD, "M1", Vector3::new(t, 0.0, 4.0)),
            });
            recs.push(GroundTruthPose {
                t,
                subject: Subject::Helmet2,
                pose: RigidTransform::from_translation(FRAME_WORLD, "M2", Vector3::new(-2.0, 0.0, 6.0)),
            });
        }
        PoseStream::new(recs).unwrap()
    }

    fn truth1(t: f64) -> Vector3<f64> {
        Vector3::new(t, 0.1, 4.0)
    }

    fn est(t: f64, p: Vector3<f64>) -> PositionEstimate {
        PositionEstimate {
            t,
            track_id: 1,
            class_id: 0,
            position: p,
        }
    }

    fn run(e: &[PositionEstimate]) -> ErrorSummary {
        position_errors(e, &stream(), &calib(), &BTreeMap::new(), DEFAULT_GATE_M).unwrap()
    }

    #[test]
    fn exact_estimates_have_zero_error() {
        let e: Vec<_> = (0..50)
            .map(|k| est(k as f64 * 0.02 + 0.005, truth1(k as f64 * 0.02 + 0.005)))
            .collect();
        let r = run(&e).report;
        assert_eq!(r.count, 50);
        for (_, a) in r.rows() {
            assert!(a.mae < 1e-12 && a.rmse < 1e-12);
        }
    }

    #[test]
    fn constant_z_offset() {
        let e: Vec<_> = (0..10)
            .map(|k| est(k as f64 * 0.1, truth1(k as f64 * 0.1) + Vector3::new(0.0, 0.0, 1.0)))
            .collect();
        let r = run(&e).report;
        assert!((r.z.mae - 1.0).abs() < 1e-12 && (r.z.rmse - 1.0).abs() < 1e-12);
        assert!(r.x.mae < 1e-12 && r.y.mae < 1e-12);
        assert!((r.xz.mae - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_x_errors_match_formula() {
        let errs = [0.1, 0.2, 0.7];
        let e: Vec<_> = errs
            .iter()
            .enumerate()
            .map(|(k, dx)| est(k as f64 * 0.1, truth1(k as f64 * 0.1) + Vector3::new(*dx, 0.0, 0.0)))
            .collect();
        let r = run(&e).report;
        let mae = errs.iter().sum::<f64>() / 3.0;
        let rmse = (errs.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
        assert!((r.x.mae - mae).abs() < 1e-12 && (mae - 0.333_333).abs() < 1e-6);
        assert!((r.x.rmse - rmse).abs() < 1e-12 && (rmse - 0.424_264).abs() < 1e-6);
        assert!(r.x.rmse >= r.x.mae);
    }

    #[test]
    fn class_mapping_overrides_nearest_neighbour() {
        let p = truth1(0.5);
        let mut map = BTreeMap::new();
        map.insert(5, Subject::Helmet2);
        let e = [PositionEstimate {
            class_id: 5,
            ..est(0.5, p)
        }];
        let s = position_errors(&e, &stream(), &calib(), &map, DEFAULT_GATE_M).unwrap();
        // helmet 2 is at (-2, 0.1, 6) in the camera frame
        assert!((s.report.x.mae - (0.5 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn gating_and_span() {
        let s = run(&[est(0.5, Vector3::new(30.0, 0.0, 0.0)), est(0.5, truth1(0.5))]);
        assert_eq!((s.report.count, s.unassociated), (1, 1));
        assert!(matches!(
            position_errors(&[est(5.0, truth1(0.0))], &stream(), &calib(), &BTreeMap::new(), 2.0),
            Err(EvalError::NoOverlap)
        ));
    }
}

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::detection_io::{ClassId, DetectionSource, Subject, CLASS_PERSON};
use crate::geometry::{
    CalibrationSet, CameraIntrinsics, Distortion, RigidTransform, FRAME_CAMERA, FRAME_IMU, FRAME_LIDAR,
    FRAME_RIG_MARKERS,
};

use super::SimError;

/// `(t, x, y, z)`: time in seconds, world position in metres.
pub type Waypoint = [f64; 4];

/// A rigid pose without frame labels, as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub translation: [f64; 3],
    pub rotation_wxyz: [f64; 4],
}

impl PoseConfig {
    fn from_matrix(r: Matrix3<f64>, t: [f64; 3]) -> Self {
        let q = UnitQuaternion::from_matrix(&r);
        let q = q.quaternion();
        Self {
            translation: t,
            rotation_wxyz: [q.w, q.i, q.j, q.k],
        }
    }

    pub fn to_transform(&self, parent: &str, child: &str) -> Result<RigidTransform, SimError> {
        RigidTransform::new(parent, child, self.rotation_wxyz, self.translation)
            .map_err(|e| SimError::Config(format!("{parent}<-{child}: {e}")))
    }
}

/// Camera axes (x right, y down, z forward) expressed in a body frame with
/// x forward, y left, z up.
fn camera_in_body() -> Matrix3<f64> {
    Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extrinsics {
    pub t_c_l: PoseConfig,
    pub t_c_ms: PoseConfig,
    pub t_c_i: PoseConfig,
}

impl Default for Extrinsics {
    fn default() -> Self {
        // marker body and LiDAR share the forward-left-up convention; the
        // LiDAR sits 10 cm above the camera, the marker body 5 cm behind it
        let c_from_body = camera_in_body().transpose();
        Self {
            t_c_l: PoseConfig::from_matrix(c_from_body, [0.0, -0.1, 0.0]),
            t_c_ms: PoseConfig::from_matrix(c_from_body, [0.0, 0.0, -0.05]),
            t_c_i: PoseConfig::from_matrix(Matrix3::identity(), [0.01, 0.0, 0.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    /// Orientation of the marker body in the world.
    pub rotation_wxyz: [f64; 4],
    /// Marker-body position over time; a single waypoint keeps the rig static.
    pub waypoints: Vec<Waypoint>,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            rotation_wxyz: [1.0, 0.0, 0.0, 0.0],
            waypoints: vec![[0.0, 0.0, 0.0, 1.2]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Body {
    /// Vertical cylinder standing on its base point.
    Cylinder { radius: f64, height: f64 },
    /// World-axis-aligned box standing on its base point; `size` is x, y, z extent.
    Box { size: [f64; 3] },
}

impl Body {
    pub fn height(&self) -> f64 {
        match self {
            Body::Cylinder { height, .. } => *height,
            Body::Box { size } => size[2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(default)]
    pub class_id: ClassId,
    /// Motion-capture subject whose marker sits on top of the body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub body: Body,
    /// Base-point trajectory, piecewise constant velocity.
    pub waypoints: Vec<Waypoint>,
}

impl AgentConfig {
    pub fn subject(&self) -> Result<Option<Subject>, SimError> {
        self.subject
            .as_deref()
            .map(|s| s.parse::<Subject>().map_err(SimError::Config))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    /// Per-corner Gaussian jitter, pixels.
    pub jitter_px: f64,
    pub miss_prob: f64,
    /// Mean number of false positives per frame (Poisson).
    pub fp_rate: f64,
    /// Uniform confidence bounds of detector outputs.
    pub confidence: [f64; 2],
    pub fp_class: ClassId,
    /// False-positive box side range, pixels.
    pub fp_size: [f64; 2],
    /// Boxes covered by a nearer agent's box beyond this fraction are suppressed.
    pub occlusion_fraction: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            jitter_px: 0.0,
            miss_prob: 0.0,
            fp_rate: 0.0,
            confidence: [0.3, 1.0],
            fp_class: CLASS_PERSON,
            fp_size: [20.0, 120.0],
            occlusion_fraction: 0.8,
        }
    }
}

/// World plane `normal·x = d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub normal: [f64; 3],
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarConfig {
    pub rate_hz: f64,
    /// Azimuth columns swept left to right over one scan period.
    pub columns: u32,
    pub rows: u32,
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub angular_noise_deg: f64,
    pub range_noise: f64,
    pub max_range: f64,
    pub planes: Vec<PlaneConfig>,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            rate_hz: 10.0,
            columns: 160,
            rows: 48,
            h_fov_deg: 72.0,
            v_fov_deg: 30.0,
            angular_noise_deg: 0.0,
            range_noise: 0.0,
            max_range: 40.0,
            planes: vec![
                PlaneConfig {
                    normal: [0.0, 0.0, 1.0],
                    d: 0.0,
                },
                PlaneConfig {
                    normal: [-1.0, 0.0, 0.0],
                    d: -15.0,
                },
            ],
        }
    }
}

fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 400.0,
        fy: 400.0,
        cx: 320.0,
        cy: 240.0,
        distortion: Distortion::default(),
        width: 640,
        height: 480,
    }
}

/// Scene description. The world frame is z-up; the default rig looks along
/// world +x from 1.2 m height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub duration: f64,
    #[serde(default = "default_camera_rate")]
    pub camera_rate: f64,
    #[serde(default = "default_source")]
    pub source: DetectionSource,
    #[serde(default = "default_intrinsics")]
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub extrinsics: Extrinsics,
    #[serde(default)]
    pub rig: RigConfig,
    #[serde(default)]
    pub agents: Vec<AgentConfig>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub lidar: LidarConfig,
    /// Ground-truth pose rate, Hz.
    #[serde(default = "default_pose_rate")]
    pub pose_rate: f64,
}

fn default_camera_rate() -> f64 {
    20.0
}

fn default_pose_rate() -> f64 {
    100.0
}

fn default_source() -> DetectionSource {
    DetectionSource::Rgb
}

impl SceneConfig {
    /// Empty scene with default sensors.
    pub fn new(seed: u64, duration: f64) -> Self {
        Self {
            seed,
            duration,
            camera_rate: default_camera_rate(),
            source: default_source(),
            intrinsics: default_intrinsics(),
            extrinsics: Extrinsics::default(),
            rig: RigConfig::default(),
            agents: Vec::new(),
            detector: DetectorConfig::default(),
            lidar: LidarConfig::default(),
            pose_rate: default_pose_rate(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    pub fn calibration(&self) -> Result<CalibrationSet, SimError> {
        let e = &self.extrinsics;
        CalibrationSet::new(
            e.t_c_l.to_transform(FRAME_CAMERA, FRAME_LIDAR)?,
            e.t_c_ms.to_transform(FRAME_CAMERA, FRAME_RIG_MARKERS)?,
            e.t_c_i.to_transform(FRAME_CAMERA, FRAME_IMU)?,
            self.intrinsics,
        )
        .map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        for (name, v) in [
            ("camera_rate", self.camera_rate),
            ("pose_rate", self.pose_rate),
            ("lidar.rate_hz", self.lidar.rate_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let d = &self.detector;
        for (name, v) in [
            ("detector.jitter_px", d.jitter_px),
            ("detector.fp_rate", d.fp_rate),
            ("lidar.angular_noise_deg", self.lidar.angular_noise_deg),
            ("lidar.range_noise", self.lidar.range_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("detector.miss_prob", d.miss_prob),
            ("detector.occlusion_fraction", d.occlusion_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        let [c0, c1] = d.confidence;
        if !(0.0 <= c0 && c0 <= c1 && c1 <= 1.0) {
            return bad(format!("detector.confidence bounds invalid: [{c0}, {c1}]"));
        }
        let [s0, s1] = d.fp_size;
        if !(0.0 < s0 && s0 <= s1) {
            return bad(format!("detector.fp_size bounds invalid: [{s0}, {s1}]"));
        }
        let l = &self.lidar;
        if l.columns == 0 || l.rows == 0 || !(l.max_range > 0.0) {
            return bad("lidar needs at least one column and row and a positive range".into());
        }
        if !(l.h_fov_deg > 0.0 && l.h_fov_deg < 180.0 && l.v_fov_deg > 0.0 && l.v_fov_deg < 180.0) {
            return bad("lidar fields of view must lie in (0, 180) degrees".into());
        }
        for p in &l.planes {
            if (Vector3::from(p.normal).norm() - 1.0).abs() > 1e-9 {
                return bad(format!("background plane normal {:?} is not unit length", p.normal));
            }
        }
        self.intrinsics
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.calibration()?;
        self.rig.to_rotation()?;
        check_waypoints("rig", &self.rig.waypoints)?;
        for (i, a) in self.agents.iter().enumerate() {
            check_waypoints(&format!("agent {i}"), &a.waypoints)?;
            let ok = match a.body {
                Body::Cylinder { radius, height } => radius > 0.0 && height > 0.0,
                Body::Box { size } => size.iter().all(|&s| s > 0.0),
            };
            if !ok {
                return bad(format!("agent {i}: body dimensions must be positive"));
            }
            a.subject()?;
        }
        let mut subjects: Vec<_> = self.agents.iter().filter_map(|a| a.subject.clone()).collect();
        subjects.sort();
        if subjects.windows(2).any(|w| w[0] == w[1]) || subjects.iter().any(|s| s == "sensor_rig") {
            return bad("each helmet subject may be attached to one agent only".into());
        }
        Ok(())
    }
}

impl RigConfig {
    pub fn to_rotation(&self) -> Result<UnitQuaternion<f64>, SimError> {
        let t = PoseConfig {
            translation: [0.0; 3],
            rotation_wxyz: self.rotation_wxyz,
        };
        Ok(*t.to_transform("W", "MS")?.rotation())
    }
}

fn check_waypoints(name: &str, w: &[Waypoint]) -> Result<(), SimError> {
    if w.is_empty() {
        return Err(SimError::Config(format!("{name}: at least one waypoint required")));
    }
    if w.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SimError::Config(format!("{name}: non-finite waypoint")));
    }
    if w.windows(2).any(|p| !(p[1][0] > p[0][0])) {
        return Err(SimError::Config(format!("{name}: waypoint times must increase")));
    }
    Ok(())
}

/// Position along piecewise-linear waypoints, held constant outside them.
pub fn waypoint_position(w: &[Waypoint], t: f64) -> Vector3<f64> {
    let p = |k: usize| Vector3::new(w[k][1], w[k][2], w[k][3]);
    if t <= w[0][0] {
        return p(0);
    }
    let hi = w.partition_point(|x| x[0] <= t);
    if hi == w.len() {
        return p(w.len() - 1);
    }
    let s = (t - w[hi - 1][0]) / (w[hi][0] - w[hi - 1][0]);
    p(hi - 1).lerp(&p(hi), s)
}

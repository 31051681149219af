//! Rigid transforms between named frames and the pinhole camera model.
//!
//! Convention: a transform `T_a^b` (parent `a`, child `b`) maps a point
//! expressed in frame `b` into frame `a`, so `compose(T_a^b, T_b^c) = T_a^c`.
//!
//! Frame labels used throughout the crate:
//!
//! | label | frame                         |
//! |-------|-------------------------------|
//! | `C`   | camera (z forward, y down)    |
//! | `L`   | LiDAR                         |
//! | `I`   | IMU                           |
//! | `MS`  | marker body on the sensor rig |
//! | `W`   | motion-capture world          |
//! | `M1`  | helmet marker body, person 1  |
//! | `M2`  | helmet marker body, person 2  |

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_CAMERA: &str = "C";
pub const FRAME_LIDAR: &str = "L";
pub const FRAME_IMU: &str = "I";
pub const FRAME_RIG_MARKERS: &str = "MS";
pub const FRAME_WORLD: &str = "W";
pub const FRAME_HELMET_1: &str = "M1";
pub const FRAME_HELMET_2: &str = "M2";

/// Tolerance on the quaternion norm accepted without renormalizing.
const UNIT_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("frame mismatch: cannot compose {left_parent}<-{left_child} with {right_parent}<-{right_child}")]
    FrameMismatch {
        left_parent: String,
        left_child: String,
        right_parent: String,
        right_child: String,
    },
    #[error("invalid quaternion ({0:?}): zero or non-finite")]
    InvalidQuaternion([f64; 4]),
    #[error("non-finite translation")]
    NonFiniteTranslation,
    #[error("point behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("undistortion did not converge after {0} iterations")]
    UndistortNonConvergence(usize),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("calibration file {path}: {message}")]
    CalibrationFile { path: String, message: String },
}

/// A 6-DoF rigid transform `T_parent^child`.
#[derive(Clone, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
    parent: String,
    child: String,
}

impl fmt::Debug for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.rotation.quaternion();
        write!(
            f,
            "T[{}<-{}] t=({}, {}, {}) q=(w {}, x {}, y {}, z {})",
            self.parent, self.child, self.translation.x, self.translation.y, self.translation.z, q.w, q.i, q.j, q.k
        )
    }
}

fn normalize_quaternion(q: Quaternion<f64>) -> Result<UnitQuaternion<f64>, GeometryError> {
    let raw = [q.w, q.i, q.j, q.k];
    let n = q.norm();
    if !n.is_finite() || n == 0.0 {
        return Err(GeometryError::InvalidQuaternion(raw));
    }
    if (n - 1.0).abs() <= UNIT_NORM_EPS {
        // already unit: keep the exact bits so that text round-trips are stable
        Ok(UnitQuaternion::new_unchecked(q))
    } else {
        Ok(UnitQuaternion::new_normalize(q))
    }
}

impl RigidTransform {
    /// Builds a transform from a `(w, x, y, z)` quaternion and a translation in metres.
    pub fn new(
        parent: impl Into<String>,
        child: impl Into<String>,
        quat_wxyz: [f64; 4],
        translation: [f64; 3],
    ) -> Result<Self, GeometryError> {
        let [w, x, y, z] = quat_wxyz;
        let rotation = normalize_quaternion(Quaternion::new(w, x, y, z))?;
        let translation = Vector3::from(translation);
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFiniteTranslation);
        }
        Ok(Self {
            rotation,
            translation,
            parent: parent.into(),
            child: child.into(),
        })
    }

    pub fn from_parts(
        parent: impl Into<String>,
        child: impl Into<String>,
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
    ) -> Self {
        Self {
            rotation: UnitQuaternion::new_normalize(rotation.into_inner()),
            translation,
            parent: parent.into(),
            child: child.into(),
        }
    }

    /// Identity transform from `frame` to itself.
    pub fn identity(frame: impl Into<String>) -> Self {
        let frame = frame.into();
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            parent: frame.clone(),
            child: frame,
        }
    }

    pub fn from_translation(parent: impl Into<String>, child: impl Into<String>, translation: Vector3<f64>) -> Self {
        Self::from_parts(parent, child, UnitQuaternion::identity(), translation)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Quaternion as `(w, x, y, z)`.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn parent(&self) -> &str {
        &self.parent
    }

    pub fn child(&self) -> &str {
        &self.child
    }

    pub fn with_frames(mut self, parent: impl Into<String>, child: impl Into<String>) -> Self {
        self.parent = parent.into();
        self.child = child.into();
        self
    }

    /// 4×4 homogeneous matrix of this transform.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self ∘ other`: requires `self.child == other.parent`.
    pub fn compose(&self, other: &RigidTransform) -> Result<RigidTransform, GeometryError> {
        if self.child != other.parent {
            return Err(GeometryError::FrameMismatch {
                left_parent: self.parent.clone(),
                left_child: self.child.clone(),
                right_parent: other.parent.clone(),
                right_child: other.child.clone(),
            });
        }
        Ok(self.compose_unchecked(other, self.parent.clone(), other.child.clone()))
    }

    fn compose_unchecked(&self, other: &RigidTransform, parent: String, child: String) -> Self {
        let rotation = UnitQuaternion::new_normalize((self.rotation * other.rotation).into_inner());
        let translation = self.rotation * other.translation + self.translation;
        Self {
            rotation,
            translation,
            parent,
            child,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rotation = self.rotation.inverse();
        let translation = -(rotation * self.translation);
        Self {
            rotation,
            translation,
            parent: self.child.clone(),
            child: self.parent.clone(),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotation angle (rad) and translation distance between two transforms,
    /// ignoring frame labels.
    pub fn distance_to(&self, other: &RigidTransform) -> (f64, f64) {
        let angle = self.rotation.angle_to(&other.rotation);
        let dist = (self.translation - other.translation).norm();
        (angle, dist)
    }
}

/// Free-function form of [`RigidTransform::compose`].
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> Result<RigidTransform, GeometryError> {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

pub fn transform_point(t: &RigidTransform, p: &Vector3<f64>) -> Vector3<f64> {
    t.transform_point(p)
}

/// Brown–Conrady distortion coefficients (3 radial, 2 tangential).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Distortion {
    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    /// Applies the distortion to normalized image coordinates.
    pub fn apply(&self, n: Vector2<f64>) -> Vector2<f64> {
        let (x, y) = (n.x, n.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let dx = 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let dy = self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        Vector2::new(x * radial + dx, y * radial + dy)
    }
}

pub type Pixel = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub distortion: Distortion,
    pub width: u32,
    pub height: u32,
}

const UNDISTORT_TOL: f64 = 1e-8;
const UNDISTORT_MAX_ITERS: usize = 20;

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        distortion: Distortion,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            distortion,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside [0, height)");
        }
        let d = &self.distortion;
        if ![d.k1, d.k2, d.k3, d.p1, d.p2].iter().all(|v| v.is_finite()) {
            return bad("non-finite distortion coefficient");
        }
        Ok(())
    }

    pub fn image_area(&self) -> f64 {
        self.width as f64 * self.height as f64
    }

    fn normalized_to_pixel(&self, n: Vector2<f64>) -> Pixel {
        Pixel::new(self.fx * n.x + self.cx, self.fy * n.y + self.cy)
    }

    fn pixel_to_normalized(&self, p: Pixel) -> Vector2<f64> {
        Vector2::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy)
    }

    /// Pinhole projection of a camera-frame point; distortion optional.
    pub fn project(&self, p_cam: &Vector3<f64>, apply_distortion: bool) -> Result<Pixel, GeometryError> {
        if !(p_cam.z > 0.0) {
            return Err(GeometryError::BehindCamera(p_cam.z));
        }
        let n = Vector2::new(p_cam.x / p_cam.z, p_cam.y / p_cam.z);
        let n = if apply_distortion { self.distortion.apply(n) } else { n };
        Ok(self.normalized_to_pixel(n))
    }

    /// Maps an ideal (undistorted) pixel to where the lens images it.
    pub fn distort_pixel(&self, p: Pixel) -> Pixel {
        let n = self.pixel_to_normalized(p);
        self.normalized_to_pixel(self.distortion.apply(n))
    }

    /// Inverts the distortion model by fixed-point iteration.
    pub fn undistort_pixel(&self, p: Pixel) -> Result<Pixel, GeometryError> {
        if self.distortion.is_zero() {
            return Ok(p);
        }
        let target = self.pixel_to_normalized(p);
        let d = &self.distortion;
        let mut n = target;
        for _ in 0..UNDISTORT_MAX_ITERS {
            let (x, y) = (n.x, n.y);
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
            let dx = 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
            let dy = d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
            let next = Vector2::new((target.x - dx) / radial, (target.y - dy) / radial);
            let step = (next - n).norm();
            n = next;
            if step < UNDISTORT_TOL {
                return Ok(self.normalized_to_pixel(n));
            }
        }
        Err(GeometryError::UndistortNonConvergence(UNDISTORT_MAX_ITERS))
    }

    /// Camera-frame point at `depth` along the ray through an undistorted pixel.
    pub fn back_project(&self, p: Pixel, depth: f64) -> Vector3<f64> {
        let n = self.pixel_to_normalized(p);
        Vector3::new(n.x * depth, n.y * depth, depth)
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

/// Static calibration of the sensor rig.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    /// `T_C^L`: LiDAR into camera.
    pub t_c_l: RigidTransform,
    /// `T_C^{MS}`: rig marker body into camera.
    pub t_c_ms: RigidTransform,
    /// `T_C^I`: IMU into camera.
    pub t_c_i: RigidTransform,
    pub intrinsics: CameraIntrinsics,
}

fn expect_frames(t: &RigidTransform, name: &str, parent: &str, child: &str) -> Result<(), String> {
    if t.parent() != parent || t.child() != child {
        return Err(format!(
            "{name}: expected frames {parent}<-{child}, found {}<-{}",
            t.parent(),
            t.child()
        ));
    }
    Ok(())
}

impl CalibrationSet {
    pub fn new(
        t_c_l: RigidTransform,
        t_c_ms: RigidTransform,
        t_c_i: RigidTransform,
        intrinsics: CameraIntrinsics,
    ) -> Result<Self, GeometryError> {
        let set = Self {
            t_c_l,
            t_c_ms,
            t_c_i,
            intrinsics,
        };
        set.validate().map_err(|message| GeometryError::CalibrationFile {
            path: "<memory>".into(),
            message,
        })?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), String> {
        expect_frames(&self.t_c_l, "T_C_L", FRAME_CAMERA, FRAME_LIDAR)?;
        expect_frames(&self.t_c_ms, "T_C_MS", FRAME_CAMERA, FRAME_RIG_MARKERS)?;
        expect_frames(&self.t_c_i, "T_C_I", FRAME_CAMERA, FRAME_IMU)?;
        self.intrinsics.validate().map_err(|e| e.to_string())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let file: CalibrationFile = toml::from_str(text).map_err(|e| e.to_string())?;
        let set = Self {
            t_c_l: file.transforms.t_c_l.to_transform()?,
            t_c_ms: file.transforms.t_c_ms.to_transform()?,
            t_c_i: file.transforms.t_c_i.to_transform()?,
            intrinsics: file.intrinsics,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn to_toml_string(&self) -> String {
        let file = CalibrationFile {
            intrinsics: self.intrinsics,
            transforms: CalibrationTransforms {
                t_c_l: TransformRecord::from_transform(&self.t_c_l),
                t_c_ms: TransformRecord::from_transform(&self.t_c_ms),
                t_c_i: TransformRecord::from_transform(&self.t_c_i),
            },
        };
        toml::to_string(&file).expect("calibration serializes")
    }

    pub fn load(path: &Path) -> Result<Self, GeometryError> {
        let err = |message: String| GeometryError::CalibrationFile {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_toml_str(&text).map_err(err)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_toml_string())
    }

    /// Position of a marker body's origin in the camera frame:
    /// `T_C^{MS} ∘ (T_W^{MS})⁻¹ ∘ T_W^{M}` applied to the origin.
    pub fn marker_in_camera(
        &self,
        t_w_ms: &RigidTransform,
        t_w_marker: &RigidTransform,
    ) -> Result<Vector3<f64>, GeometryError> {
        let chain = self.t_c_ms.compose(&t_w_ms.inverse())?.compose(t_w_marker)?;
        Ok(*chain.translation())
    }
}

/// On-disk form of one transform in the calibration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformRecord {
    pub parent: String,
    pub child: String,
    /// metres
    pub translation: [f64; 3],
    pub rotation_wxyz: [f64; 4],
}

impl TransformRecord {
    pub fn from_transform(t: &RigidTransform) -> Self {
        let tr = t.translation();
        Self {
            parent: t.parent().to_string(),
            child: t.child().to_string(),
            translation: [tr.x, tr.y, tr.z],
            rotation_wxyz: t.quat_wxyz(),
        }
    }

    pub fn to_transform(&self) -> Result<RigidTransform, String> {
        RigidTransform::new(
            self.parent.clone(),
            self.child.clone(),
            self.rotation_wxyz,
            self.translation,
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationTransforms {
    #[serde(rename = "T_C_L")]
    t_c_l: TransformRecord,
    #[serde(rename = "T_C_MS")]
    t_c_ms: TransformRecord,
    #[serde(rename = "T_C_I")]
    t_c_i: TransformRecord,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    intrinsics: CameraIntrinsics,
    transforms: CalibrationTransforms,
}

/// Rotation of `angle` radians about `axis` (normalized internally).
pub fn rotation_about(axis: Vector3<f64>, angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
}

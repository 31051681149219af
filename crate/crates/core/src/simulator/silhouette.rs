//! Image-space bounding boxes of agent bodies.
//!
//! The convex hull of a cylinder is the hull of its two end circles, and a
//! perspective projection of geometry in front of the camera preserves
//! convexity, so the box of a cylinder is the union of the boxes of its
//! projected end circles. Along one image axis a circle point projects to
//! `(n0 + n1 cosθ + n2 sinθ) / (d0 + d1 cosθ + d2 sinθ)`; setting the
//! derivative to zero gives
//!
//! ```text
//! (n0 d1 − n1 d0) sinθ + (n2 d0 − n0 d2) cosθ + (n2 d1 − n1 d2) = 0
//! ```
//!
//! whose two roots are the extremes. Boxes use their eight corners. With
//! lens distortion, straight edges bend and the extremes are found by dense
//! sampling instead.

use nalgebra::Vector3;

use super::config::Body;
use crate::bbox::BBox;
use crate::geometry::{CameraIntrinsics, RigidTransform};

/// Bodies closer to the image plane than this are treated as not visible.
pub const NEAR_PLANE_M: f64 = 0.05;

const SAMPLES_THETA: usize = 2048;
const SAMPLES_HEIGHT: usize = 33;
const SAMPLES_EDGE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("body not visible")]
pub struct NotVisible;

/// Extremes of `(a·P) / P.z` over the circle `P = c + r(cosθ e1 + sinθ e2)`.
fn circle_extremes(a: Vector3<f64>, c: Vector3<f64>, e1: Vector3<f64>, e2: Vector3<f64>, r: f64) -> (f64, f64) {
    let (n0, n1, n2) = (a.dot(&c), r * a.dot(&e1), r * a.dot(&e2));
    let (d0, d1, d2) = (c.z, r * e1.z, r * e2.z);
    let alpha = n0 * d1 - n1 * d0;
    let beta = n2 * d0 - n0 * d2;
    let gamma = n2 * d1 - n1 * d2;
    let f = |th: f64| (n0 + n1 * th.cos() + n2 * th.sin()) / (d0 + d1 * th.cos() + d2 * th.sin());
    let rr = alpha.hypot(beta);
    if rr < 1e-300 {
        let v = f(0.0);
        return (v, v);
    }
    let phi = beta.atan2(alpha);
    let s = (-gamma / rr).clamp(-1.0, 1.0).asin();
    let (a1, a2) = (f(s - phi), f(std::f64::consts::PI - s - phi));
    (a1.min(a2), a1.max(a2))
}

fn perpendicular_basis(axis: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

fn bbox_of(points: impl Iterator<Item = (f64, f64)>) -> Result<BBox, NotVisible> {
    let (mut x1, mut y1, mut x2, mut y2) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (u, v) in points {
        x1 = x1.min(u);
        y1 = y1.min(v);
        x2 = x2.max(u);
        y2 = y2.max(v);
    }
    BBox::new(x1, y1, x2, y2).map_err(|_| NotVisible)
}

/// Camera-frame points sampled over the body surface outline, used when
/// distortion rules out the closed forms and by tests as an oracle.
pub fn surface_samples(
    t_c_w: &RigidTransform,
    base_w: &Vector3<f64>,
    body: &Body,
    n_theta: usize,
    n_h: usize,
) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    match *body {
        Body::Cylinder { radius, height } => {
            for i in 0..n_h {
                let h = height * i as f64 / (n_h - 1).max(1) as f64;
                for j in 0..n_theta {
                    let th = std::f64::consts::TAU * j as f64 / n_theta as f64;
                    let p = base_w + Vector3::new(radius * th.cos(), radius * th.sin(), h);
                    out.push(t_c_w.transform_point(&p));
                }
            }
        }
        Body::Box { size } => {
            let c = box_corners(base_w, size);
            for a in 0..8usize {
                for b in (a + 1)..8 {
                    // edges join corners differing in exactly one coordinate
                    if (a ^ b).count_ones() != 1 {
                        continue;
                    }
                    for k in 0..=n_theta {
                        let s = k as f64 / n_theta as f64;
                        out.push(t_c_w.transform_point(&c[a].lerp(&c[b], s)));
                    }
                }
            }
        }
    }
    out
}

fn box_corners(base_w: &Vector3<f64>, size: [f64; 3]) -> [Vector3<f64>; 8] {
    std::array::from_fn(|i| {
        let sx = if i & 1 == 0 { -0.5 } else { 0.5 };
        let sy = if i & 2 == 0 { -0.5 } else { 0.5 };
        let sz = if i & 4 == 0 { 0.0 } else { 1.0 };
        base_w + Vector3::new(sx * size[0], sy * size[1], sz * size[2])
    })
}

/// Unclipped image box of `body` standing at `base_w` (world), seen by a
/// camera with pose `t_c_w` (`C ← W`).
pub fn body_bbox(
    k: &CameraIntrinsics,
    t_c_w: &RigidTransform,
    base_w: &Vector3<f64>,
    body: &Body,
) -> Result<BBox, NotVisible> {
    let distorted = !k.distortion.is_zero();
    match *body {
        Body::Cylinder { radius, height } => {
            let axis = t_c_w.transform_vector(&Vector3::z());
            let (e1, e2) = perpendicular_basis(axis);
            let reach = radius * (e1.z * e1.z + e2.z * e2.z).sqrt();
            let centres = [
                t_c_w.transform_point(base_w),
                t_c_w.transform_point(&(base_w + Vector3::new(0.0, 0.0, height))),
            ];
            if centres.iter().any(|c| c.z - reach <= NEAR_PLANE_M) {
                return Err(NotVisible);
            }
            if distorted {
                return sampled_bbox(k, &surface_samples(t_c_w, base_w, body, SAMPLES_THETA, SAMPLES_HEIGHT));
            }
            let row_u = Vector3::new(k.fx, 0.0, k.cx);
            let row_v = Vector3::new(0.0, k.fy, k.cy);
            let mut pts = Vec::with_capacity(4);
            for c in centres {
                let (u0, u1) = circle_extremes(row_u, c, e1, e2, radius);
                let (v0, v1) = circle_extremes(row_v, c, e1, e2, radius);
                pts.push((u0, v0));
                pts.push((u1, v1));
            }
            bbox_of(pts.into_iter())
        }
        Body::Box { size } => {
            let corners = box_corners(base_w, size).map(|c| t_c_w.transform_point(&c));
            if corners.iter().any(|c| c.z <= NEAR_PLANE_M) {
                return Err(NotVisible);
            }
            if distorted {
                return sampled_bbox(k, &surface_samples(t_c_w, base_w, body, SAMPLES_EDGE, 0));
            }
            bbox_of(corners.iter().map(|c| {
                let p = k.project(c, false).expect("in front of camera");
                (p.x, p.y)
            }))
        }
    }
}

fn sampled_bbox(k: &CameraIntrinsics, pts: &[Vector3<f64>]) -> Result<BBox, NotVisible> {
    bbox_of(pts.iter().map(|c| {
        let p = k.project(c, true).expect("in front of camera");
        (p.x, p.y)
    }))
}

/// [`body_bbox`] clipped to the image.
pub fn visible_bbox(
    k: &CameraIntrinsics,
    t_c_w: &RigidTransform,
    base_w: &Vector3<f64>,
    body: &Body,
) -> Result<BBox, NotVisible> {
    body_bbox(k, t_c_w, base_w, body)?
        .clip_to_image(k.width as f64, k.height as f64)
        .ok_or(NotVisible)
}

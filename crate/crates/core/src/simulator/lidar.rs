//! Ray casting for the simulated scanning LiDAR.
//!
//! One scan sweeps `columns` azimuth columns left to right over the scan
//! period; each column fires `rows` beams spread over the vertical field of
//! view. Every beam sees the scene at its own firing time.

use nalgebra::Vector3;

use super::config::{Body, PlaneConfig};

/// World-frame ray `origin + s·dir`, `dir` unit length.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub dir: Vector3<f64>,
}

const EPS: f64 = 1e-9;

/// Nearest positive hit distance on a vertical cylinder (side and caps).
pub fn hit_cylinder(ray: &Ray, base: &Vector3<f64>, radius: f64, height: f64) -> Option<f64> {
    let (ox, oy) = (ray.origin.x - base.x, ray.origin.y - base.y);
    let (dx, dy) = (ray.dir.x, ray.dir.y);
    let mut best: Option<f64> = None;
    let mut consider = |s: f64| {
        if s > EPS && best.is_none_or(|b| s < b) {
            best = Some(s);
        }
    };
    let a = dx * dx + dy * dy;
    if a > 0.0 {
        let b = 2.0 * (ox * dx + oy * dy);
        let c = ox * ox + oy * oy - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for s in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = ray.origin.z + s * ray.dir.z - base.z;
                if (0.0..=height).contains(&z) {
                    consider(s);
                }
            }
        }
    }
    if ray.dir.z.abs() > 0.0 {
        for zc in [base.z, base.z + height] {
            let s = (zc - ray.origin.z) / ray.dir.z;
            let (px, py) = (ox + s * dx, oy + s * dy);
            if px * px + py * py <= radius * radius {
                consider(s);
            }
        }
    }
    best
}

/// Slab test against a world-axis-aligned box standing on `base`.
pub fn hit_box(ray: &Ray, base: &Vector3<f64>, size: [f64; 3]) -> Option<f64> {
    let lo = Vector3::new(base.x - size[0] / 2.0, base.y - size[1] / 2.0, base.z);
    let hi = Vector3::new(base.x + size[0] / 2.0, base.y + size[1] / 2.0, base.z + size[2]);
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        let (o, d) = (ray.origin[k], ray.dir[k]);
        if d.abs() < 1e-15 {
            if o < lo[k] || o > hi[k] {
                return None;
            }
            continue;
        }
        let (a, b) = ((lo[k] - o) / d, (hi[k] - o) / d);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t0 > t1 || t1 <= EPS {
        return None;
    }
    Some(if t0 > EPS { t0 } else { t1 })
}

pub fn hit_plane(ray: &Ray, plane: &PlaneConfig) -> Option<f64> {
    let n = Vector3::from(plane.normal);
    let denom = n.dot(&ray.dir);
    if denom.abs() < 1e-12 {
        return None;
    }
    let s = (plane.d - n.dot(&ray.origin)) / denom;
    (s > EPS).then_some(s)
}

pub fn hit_body(ray: &Ray, base: &Vector3<f64>, body: &Body) -> Option<f64> {
    match *body {
        Body::Cylinder { radius, height } => hit_cylinder(ray, base, radius, height),
        Body::Box { size } => hit_box(ray, base, size),
    }
}

/// Unit beam direction in the sensor frame (x forward, y left, z up).
pub fn beam_direction(azimuth: f64, elevation: f64) -> Vector3<f64> {
    Vector3::new(
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    )
}

/// Azimuth of column `c`: sweeps from +h_fov/2 (left) to −h_fov/2 (right).
pub fn column_azimuth(c: u32, columns: u32, h_fov: f64) -> f64 {
    if columns == 1 {
        return 0.0;
    }
    h_fov / 2.0 - h_fov * c as f64 / (columns - 1) as f64
}

pub fn row_elevation(r: u32, rows: u32, v_fov: f64) -> f64 {
    if rows == 1 {
        return 0.0;
    }
    v_fov / 2.0 - v_fov * r as f64 / (rows - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ray(o: [f64; 3], d: [f64; 3]) -> Ray {
        Ray {
            origin: o.into(),
            dir: Vector3::from(d).normalize(),
        }
    }

    #[test]
    fn cylinder_front_surface() {
        let base = Vector3::new(5.0, 0.0, 0.0);
        let s = hit_cylinder(&ray([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]), &base, 0.3, 1.7).unwrap();
        assert!((s - 4.7).abs() < 1e-12);
        assert!(hit_cylinder(&ray([0.0, 0.0, 2.0], [1.0, 0.0, 0.0]), &base, 0.3, 1.7).is_none());
        assert!(hit_cylinder(&ray([0.0, 0.0, 1.0], [-1.0, 0.0, 0.0]), &base, 0.3, 1.7).is_none());
        // top cap seen from above
        let s = hit_cylinder(&ray([5.0, 0.0, 3.0], [0.0, 0.0, -1.0]), &base, 0.3, 1.7).unwrap();
        assert!((s - 1.3).abs() < 1e-12);
    }

    #[test]
    fn box_and_plane() {
        let base = Vector3::new(10.0, 0.0, 0.0);
        let s = hit_box(&ray([0.0, 0.0, 0.5], [1.0, 0.0, 0.0]), &base, [2.0, 2.0, 1.0]).unwrap();
        assert!((s - 9.0).abs() < 1e-12);
        assert!(hit_box(&ray([0.0, 5.0, 0.5], [1.0, 0.0, 0.0]), &base, [2.0, 2.0, 1.0]).is_none());
        let ground = PlaneConfig {
            normal: [0.0, 0.0, 1.0],
            d: 0.0,
        };
        let s = hit_plane(&ray([0.0, 0.0, 1.0], [1.0, 0.0, -1.0]), &ground).unwrap();
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
        assert!(hit_plane(&ray([0.0, 0.0, 1.0], [1.0, 0.0, 1.0]), &ground).is_none());
    }

    #[test]
    fn beam_grid() {
        assert_eq!(column_azimuth(0, 3, 1.0), 0.5);
        assert_eq!(column_azimuth(2, 3, 1.0), -0.5);
        assert_eq!(row_elevation(1, 3, 1.0), 0.0);
        assert!((beam_direction(0.3, -0.2).norm() - 1.0).abs() < 1e-15);
    }
}

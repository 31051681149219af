//! LiDAR points inside a tracked box, reduced to one representative point.
//!
//! Points are moved into the camera frame with `T_C^L`, projected through
//! the distorted pinhole model and kept when they land strictly inside the
//! box. Only points inside a centred square are then used; the square's
//! share of the box area grows linearly as the box shrinks relative to the
//! image:
//!
//! ```text
//! ρ = area(box) / (width · height)
//! k = clamp(k_min + (k_max − k_min)(1 − ρ), k_min, k_max)
//! side = sqrt(k · area(box))
//! ```
//!
//! The component-wise median of the remaining points is the observation for
//! the 3D tracker.

use nalgebra::Vector3;

use crate::bbox::BBox;
use crate::detection_io::LidarScan;
use crate::exec::{self, Execution};
use crate::geometry::{CalibrationSet, Pixel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub k_min: f64,
    pub k_max: f64,
    pub min_points: usize,
    /// Largest accepted |scan_t − t|, seconds (half the 7.9 Hz scan period).
    pub scan_time_tolerance: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            k_min: 0.25,
            k_max: 1.0,
            min_points: 3,
            scan_time_tolerance: 0.063,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.k_min && self.k_min <= self.k_max && self.k_max <= 1.0) {
            return Err(format!(
                "square ratio bounds must satisfy 0 < k_min <= k_max <= 1 (got {}, {})",
                self.k_min, self.k_max
            ));
        }
        if self.min_points == 0 {
            return Err("min_points must be at least 1".into());
        }
        if !(self.scan_time_tolerance >= 0.0) {
            return Err("scan_time_tolerance must be non-negative".into());
        }
        Ok(())
    }

    /// Square-to-box area ratio for a box covering `rho` of the image.
    pub fn square_ratio(&self, rho: f64) -> f64 {
        (self.k_min + (self.k_max - self.k_min) * (1.0 - rho)).clamp(self.k_min, self.k_max)
    }
}

/// A scan point that projects into the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    /// Camera frame, metres.
    pub position: Vector3<f64>,
    pub pixel: Pixel,
    pub t: f64,
}

pub fn points_in_bbox(scan: &LidarScan, calib: &CalibrationSet, bbox: &BBox) -> Vec<ProjectedPoint> {
    points_in_bbox_with(Execution::default(), scan, calib, bbox)
}

pub fn points_in_bbox_with(
    exec: Execution,
    scan: &LidarScan,
    calib: &CalibrationSet,
    bbox: &BBox,
) -> Vec<ProjectedPoint> {
    let k = &calib.intrinsics;
    exec::filter_map(exec, &scan.points, |p| {
        let position = calib.t_c_l.transform_point(&p.position());
        let pixel = k.project(&position, true).ok()?;
        bbox.contains_strict(pixel.x, pixel.y).then_some(ProjectedPoint {
            position,
            pixel,
            t: p.t,
        })
    })
}

/// The filtering square for `bbox`, clipped to the box.
pub fn central_square(bbox: &BBox, image_width: u32, image_height: u32, params: &FusionParams) -> BBox {
    let rho = bbox.area() / (image_width as f64 * image_height as f64);
    let k = params.square_ratio(rho);
    let side = (k * bbox.area()).sqrt();
    let (cx, cy) = bbox.center();
    let square = BBox::from_center(cx, cy, side, side).expect("positive square side");
    square.intersect(bbox).expect("square centred in box")
}

pub fn central_square_filter(
    points: &[ProjectedPoint],
    bbox: &BBox,
    image_width: u32,
    image_height: u32,
    params: &FusionParams,
) -> Vec<ProjectedPoint> {
    let sq = central_square(bbox, image_width, image_height, params);
    points
        .iter()
        .filter(|p| p.pixel.x >= sq.x1() && p.pixel.x <= sq.x2() && p.pixel.y >= sq.y1() && p.pixel.y <= sq.y2())
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("{found} points, {required} required")]
pub struct TooFewPoints {
    pub found: usize,
    pub required: usize,
}

fn lower_median(values: &mut [f64]) -> f64 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Component-wise median (lower median for even counts).
pub fn median_point(points: &[Vector3<f64>], min_points: usize) -> Result<Vector3<f64>, TooFewPoints> {
    if points.len() < min_points.max(1) {
        return Err(TooFewPoints {
            found: points.len(),
            required: min_points.max(1),
        });
    }
    let mut axis = vec![0.0; points.len()];
    let mut out = Vector3::zeros();
    for k in 0..3 {
        for (a, p) in axis.iter_mut().zip(points) {
            *a = p[k];
        }
        out[k] = lower_median(&mut axis);
    }
    Ok(out)
}

/// Lower median of the point timestamps.
pub fn median_time(points: &[ProjectedPoint]) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let mut ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    Some(lower_median(&mut ts))
}

/// Index of the scan nearest in time to `t`, if within `tolerance`.
/// Equidistant scans resolve to the earlier one.
pub fn select_scan(scans: &[LidarScan], t: f64, tolerance: f64) -> Option<usize> {
    let hi = scans.partition_point(|s| s.scan_t < t);
    let candidates = [hi.checked_sub(1), (hi < scans.len()).then_some(hi)];
    let mut best: Option<(f64, usize)> = None;
    for i in candidates.into_iter().flatten() {
        let d = (scans[i].scan_t - t).abs();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.filter(|(d, _)| *d <= tolerance).map(|(_, i)| i)
}

/// A representative 3D point for one tracked box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedObservation {
    pub position: Vector3<f64>,
    /// Median timestamp of the contributing points.
    pub t: f64,
    pub support: usize,
}

/// Full selection chain for one box: in-box points, central square, median.
pub fn fuse_bbox(
    scan: &LidarScan,
    calib: &CalibrationSet,
    bbox: &BBox,
    params: &FusionParams,
    exec: Execution,
) -> Result<FusedObservation, TooFewPoints> {
    let inside = points_in_bbox_with(exec, scan, calib, bbox);
    let k = &calib.intrinsics;
    let square = central_square_filter(&inside, bbox, k.width, k.height, params);
    let positions: Vec<Vector3<f64>> = square.iter().map(|p| p.position).collect();
    let position = median_point(&positions, params.min_points)?;
    Ok(FusedObservation {
        position,
        t: median_time(&square).expect("non-empty after median"),
        support: square.len(),
    })
}

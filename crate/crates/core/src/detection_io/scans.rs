use std::path::Path;

use nalgebra::Vector3;

use super::IoError;

const SCAN_HEADER_LEN: usize = 12;
const POINT_LEN: usize = 20;

/// One LiDAR return in the sensor frame. Coordinates are stored as `f32`
/// on disk and widened on load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub t: f64,
}

impl LidarPoint {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x as f64, self.y as f64, self.z as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub scan_t: f64,
    pub points: Vec<LidarPoint>,
}

impl LidarScan {
    pub fn validate(&self, index: usize) -> Result<(), IoError> {
        let err = |message: String| IoError::Scan { scan: index, message };
        if !self.scan_t.is_finite() {
            return Err(err("non-finite scan timestamp".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite() && p.t.is_finite()) {
                return Err(err(format!("point {i}: non-finite value")));
            }
            if p.t < prev {
                return Err(err(format!(
                    "point {i}: timestamp {} precedes previous point at {prev}",
                    p.t
                )));
            }
            prev = p.t;
        }
        Ok(())
    }
}

pub fn write_scans(scans: &[LidarScan]) -> Vec<u8> {
    let total: usize = scans.iter().map(|s| SCAN_HEADER_LEN + POINT_LEN * s.points.len()).sum();
    let mut out = Vec::with_capacity(total);
    for s in scans {
        out.extend_from_slice(&s.scan_t.to_le_bytes());
        out.extend_from_slice(&(s.points.len() as u32).to_le_bytes());
        for p in &s.points {
            out.extend_from_slice(&p.x.to_le_bytes());
            out.extend_from_slice(&p.y.to_le_bytes());
            out.extend_from_slice(&p.z.to_le_bytes());
            out.extend_from_slice(&p.t.to_le_bytes());
        }
    }
    out
}

/// Decodes a scan file; scans must be in non-decreasing `scan_t` order and
/// point timestamps non-decreasing within each scan.
pub fn read_scans(bytes: &[u8]) -> Result<Vec<LidarScan>, IoError> {
    let mut scans = Vec::new();
    let mut pos = 0usize;
    let mut prev_t = f64::NEG_INFINITY;
    while pos < bytes.len() {
        let index = scans.len();
        let err = |message: String| IoError::Scan { scan: index, message };
        if bytes.len() - pos < SCAN_HEADER_LEN {
            return Err(err("truncated scan header".into()));
        }
        let scan_t = f64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("8 bytes"));
        let count = u32::from_le_bytes(bytes[pos + 8..pos + 12].try_into().expect("4 bytes")) as usize;
        pos += SCAN_HEADER_LEN;
        let need = count
            .checked_mul(POINT_LEN)
            .ok_or_else(|| err("point count overflow".into()))?;
        if bytes.len() - pos < need {
            return Err(err(format!("truncated: {count} points declared")));
        }
        let points = bytes[pos..pos + need]
            .chunks_exact(POINT_LEN)
            .map(|r| LidarPoint {
                x: f32::from_le_bytes(r[0..4].try_into().expect("4 bytes")),
                y: f32::from_le_bytes(r[4..8].try_into().expect("4 bytes")),
                z: f32::from_le_bytes(r[8..12].try_into().expect("4 bytes")),
                t: f64::from_le_bytes(r[12..20].try_into().expect("8 bytes")),
            })
            .collect();
        pos += need;
        let scan = LidarScan { scan_t, points };
        scan.validate(index)?;
        if scan_t < prev_t {
            return Err(err(format!("scan time {scan_t} precedes previous scan at {prev_t}")));
        }
        prev_t = scan_t;
        scans.push(scan);
    }
    Ok(scans)
}

pub fn load_scans(path: &Path) -> Result<Vec<LidarScan>, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    read_scans(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(t: f64, n: usize) -> LidarScan {
        LidarScan {
            scan_t: t,
            points: (0..n)
                .map(|i| LidarPoint {
                    x: i as f32 * 0.5,
                    y: -(i as f32),
                    z: 1.25,
                    t: t + i as f64 * 1e-4,
                })
                .collect(),
        }
    }

    #[test]
    fn empty_file() {
        assert!(read_scans(&[]).unwrap().is_empty());
    }

    #[test]
    fn two_scans_roundtrip() {
        let scans = vec![scan(0.0, 100), scan(0.127, 100)];
        let bytes = write_scans(&scans);
        assert_eq!(bytes.len(), 2 * (12 + 100 * 20));
        let back = read_scans(&bytes).unwrap();
        assert_eq!(back, scans);
        assert_eq!(write_scans(&back), bytes);
    }

    #[test]
    fn non_monotone_points_rejected() {
        let mut s = scan(0.0, 10);
        s.points[5].t = -1.0;
        let bytes = write_scans(&[s]);
        assert!(matches!(read_scans(&bytes), Err(IoError::Scan { scan: 0, .. })));
    }

    #[test]
    fn out_of_order_scans_and_truncation_rejected() {
        let bytes = write_scans(&[scan(1.0, 2), scan(0.5, 2)]);
        assert!(matches!(read_scans(&bytes), Err(IoError::Scan { scan: 1, .. })));
        let bytes = write_scans(&[scan(1.0, 2)]);
        assert!(read_scans(&bytes[..bytes.len() - 3]).is_err());
    }
}

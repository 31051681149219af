//! Per-object constant-velocity Kalman filter in the camera frame.
//!
//! State `[x, y, z, ẋ, ẏ, ż]`, propagated over the real time elapsed
//! between observations (LiDAR and camera run at different rates) with a
//! piecewise-constant white-acceleration process model:
//!
//! ```text
//! Q = σa² · [dt⁴/4·I  dt³/2·I]
//!           [dt³/2·I  dt²·I  ]
//! ```

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};
use thiserror::Error;

use crate::detection_io::ClassId;

#[derive(Debug, Error, PartialEq)]
pub enum Track3dError {
    #[error("track {id}: time {t} precedes last update at {last}")]
    NegativeDt { id: u64, t: f64, last: f64 },
    #[error("non-finite observation")]
    NonFiniteObservation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filter3dParams {
    /// Per-axis white-acceleration standard deviation, m/s².
    pub accel_std: f64,
    /// Per-axis observation standard deviation, m.
    pub obs_std: f64,
    /// Initial velocity variance, m²/s².
    pub init_velocity_var: f64,
}

impl Default for Filter3dParams {
    fn default() -> Self {
        Self {
            accel_std: 2.0,
            obs_std: 0.2,
            init_velocity_var: 100.0,
        }
    }
}

impl Filter3dParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.accel_std >= 0.0 && self.obs_std >= 0.0 && self.init_velocity_var > 0.0) {
            return Err("3D filter noise must be non-negative (initial velocity variance positive)".into());
        }
        Ok(())
    }
}

pub fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    f
}

pub fn process_noise(dt: f64, accel_std: f64) -> Matrix6<f64> {
    let q = accel_std * accel_std;
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        m[(i, i)] = q * dt.powi(4) / 4.0;
        m[(i, i + 3)] = q * dt.powi(3) / 2.0;
        m[(i + 3, i)] = q * dt.powi(3) / 2.0;
        m[(i + 3, i + 3)] = q * dt * dt;
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState3D {
    pub mean: Vector6<f64>,
    pub covariance: Matrix6<f64>,
    pub track_id: u64,
    pub class_id: ClassId,
    pub last_update_t: f64,
}

impl TrackState3D {
    /// New filter at `position` with zero velocity.
    pub fn new(track_id: u64, class_id: ClassId, position: Vector3<f64>, t: f64, params: &Filter3dParams) -> Self {
        let mut mean = Vector6::zeros();
        mean.fixed_rows_mut::<3>(0).copy_from(&position);
        let pv = params.obs_std * params.obs_std;
        let vv = params.init_velocity_var;
        Self {
            mean,
            covariance: Matrix6::from_diagonal(&Vector6::new(pv, pv, pv, vv, vv, vv)),
            track_id,
            class_id,
            last_update_t: t,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(3).into_owned()
    }

    /// Propagates to time `t`.
    pub fn predict(&mut self, t: f64, params: &Filter3dParams) -> Result<(), Track3dError> {
        let dt = t - self.last_update_t;
        if dt < 0.0 {
            return Err(Track3dError::NegativeDt {
                id: self.track_id,
                t,
                last: self.last_update_t,
            });
        }
        if dt == 0.0 {
            return Ok(());
        }
        let f = transition(dt);
        self.mean = f * self.mean;
        self.covariance = f * self.covariance * f.transpose() + process_noise(dt, params.accel_std);
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;
        self.last_update_t = t;
        Ok(())
    }

    /// Predicts to `t`, then applies a position-only measurement.
    pub fn update(&mut self, obs: &Vector3<f64>, t: f64, params: &Filter3dParams) -> Result<(), Track3dError> {
        if !obs.iter().all(|v| v.is_finite()) {
            return Err(Track3dError::NonFiniteObservation);
        }
        self.predict(t, params)?;
        let mut h = Matrix3x6::<f64>::zeros();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        let r = Matrix3::identity() * (params.obs_std * params.obs_std);
        let s = h * self.covariance * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            log::warn!("track {}: singular innovation covariance", self.track_id);
            return Ok(());
        };
        let gain = self.covariance * h.transpose() * s_inv;
        self.mean += gain * (obs - h * self.mean);
        let ikh = Matrix6::identity() - gain * h;
        self.covariance = ikh * self.covariance * ikh.transpose() + gain * r * gain.transpose();
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;
        Ok(())
    }
}

/// One fused observation for a 2D track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedInput {
    pub track_id: u64,
    pub class_id: ClassId,
    pub position: Vector3<f64>,
    pub t: f64,
}

/// State snapshot written to the 3D track file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Track3dRecord {
    pub t: f64,
    pub track_id: u64,
    pub class_id: ClassId,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

/// Independent filters keyed by 2D track id.
#[derive(Debug, Clone, Default)]
pub struct Tracker3D {
    params: Filter3dParams,
    tracks: BTreeMap<u64, TrackState3D>,
}

impl Tracker3D {
    pub fn new(params: Filter3dParams) -> Self {
        Self {
            params,
            tracks: BTreeMap::new(),
        }
    }

    pub fn get(&self, id: u64) -> Option<&TrackState3D> {
        self.tracks.get(&id)
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Creates or updates the filters named in `fused`; returns their
    /// posterior snapshots in input order.
    pub fn manage(&mut self, fused: &[FusedInput]) -> Result<Vec<Track3dRecord>, Track3dError> {
        let mut out = Vec::with_capacity(fused.len());
        for f in fused {
            let state = match self.tracks.get_mut(&f.track_id) {
                Some(s) => {
                    s.update(&f.position, f.t, &self.params)?;
                    s
                }
                None => self
                    .tracks
                    .entry(f.track_id)
                    .or_insert_with(|| TrackState3D::new(f.track_id, f.class_id, f.position, f.t, &self.params)),
            };
            out.push(Track3dRecord {
                t: f.t,
                track_id: f.track_id,
                class_id: state.class_id,
                position: state.position(),
                velocity: state.velocity(),
            });
        }
        Ok(out)
    }

    /// Drops the filters of 2D tracks that died.
    pub fn remove_dead(&mut self, dead: &[u64]) {
        for id in dead {
            self.tracks.remove(id);
        }
    }

    /// Predicted state of a track at `t` without modifying it.
    pub fn query(&self, id: u64, t: f64) -> Result<Option<TrackState3D>, Track3dError> {
        let Some(s) = self.tracks.get(&id) else {
            return Ok(None);
        };
        let mut s = s.clone();
        s.predict(t, &self.params)?;
        Ok(Some(s))
    }
}

pub fn write_records(records: &[Track3dRecord]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for r in records {
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            r.t,
            r.track_id,
            r.class_id,
            r.position.x,
            r.position.y,
            r.position.z,
            r.velocity.x,
            r.velocity.y,
            r.velocity.z
        )
        .expect("write to string");
    }
    out
}

pub fn parse_records(text: &str) -> Result<Vec<Track3dRecord>, crate::detection_io::IoError> {
    use crate::detection_io::IoError;
    let mut out = Vec::new();
    for (line, content) in crate::detection_io::data_lines(text) {
        let f: Vec<&str> = content.split_whitespace().collect();
        if f.len() != 9 {
            return Err(IoError::parse(line, format!("expected 9 fields, found {}", f.len())));
        }
        let num = |i: usize, name: &str| crate::detection_io::parse_f64(line, name, f[i]);
        let track_id = f[1]
            .parse()
            .map_err(|_| IoError::parse(line, format!("track_id: cannot parse {:?}", f[1])))?;
        let class_id = f[2]
            .parse()
            .map_err(|_| IoError::parse(line, format!("class_id: cannot parse {:?}", f[2])))?;
        out.push(Track3dRecord {
            t: num(0, "t")?,
            track_id,
            class_id,
            position: Vector3::new(num(3, "x")?, num(4, "y")?, num(5, "z")?),
            velocity: Vector3::new(num(6, "vx")?, num(7, "vy")?, num(8, "vz")?),
        });
    }
    Ok(out)
}

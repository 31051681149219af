//! SORT: constant-velocity Kalman filtering of image boxes with Hungarian
//! IoU association.
//!
//! Track lifecycle per frame: predict every track, associate, update the
//! matched tracks, start a track per unmatched detection, drop tracks unseen
//! for more than `max_age` frames. Output rules:
//!
//! * a track matched this frame is emitted once it has `min_hits` associations;
//! * an unmatched track coasts (its prediction is emitted) while it has at
//!   least `min_assoc_for_prediction` associations and has missed at most
//!   `max_unmatched_predictions` consecutive frames.

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use crate::assignment::{self, ScoreMatrix};
use crate::bbox::{iou, BBox, DegenerateBox};
use crate::detection_io::{ClassId, Detection2D, DetectionSource};

type State = SVector<f64, 7>;
type StateCov = SMatrix<f64, 7, 7>;
type Obs = SVector<f64, 4>;
type ObsCov = SMatrix<f64, 4, 4>;
type ObsModel = SMatrix<f64, 4, 7>;

#[derive(Debug, Error, PartialEq)]
pub enum SortError {
    #[error(transparent)]
    DegenerateBox(#[from] DegenerateBox),
    #[error("observation requires s > 0 and r > 0 (s = {s}, r = {r})")]
    NonPositiveScale { s: f64, r: f64 },
    #[error("frame at t={t} is not after the previous frame at t={prev}")]
    OutOfOrder { t: f64, prev: f64 },
    #[error("invalid tracker parameters: {0}")]
    InvalidParams(String),
}

/// `[u, v, s, r]`: centre, area and aspect ratio (w/h).
pub fn bbox_to_obs(b: &BBox) -> Result<[f64; 4], SortError> {
    let (w, h) = (b.width(), b.height());
    if !(w > 0.0 && h > 0.0) {
        return Err(DegenerateBox {
            x1: b.x1(),
            y1: b.y1(),
            x2: b.x2(),
            y2: b.y2(),
        }
        .into());
    }
    let (u, v) = b.center();
    Ok([u, v, w * h, w / h])
}

pub fn obs_to_bbox(z: [f64; 4]) -> Result<BBox, SortError> {
    let [u, v, s, r] = z;
    if !(s > 0.0 && r > 0.0) {
        return Err(SortError::NonPositiveScale { s, r });
    }
    let w = (s * r).sqrt();
    let h = s / w;
    Ok(BBox::from_center(u, v, w, h)?)
}

/// Kalman noise for the box filter (diagonals).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxNoise {
    /// `[u, v, s, r]`
    pub observation: [f64; 4],
    /// `[u, v, s, r, u̇, v̇, ṡ]`
    pub process: [f64; 7],
    /// Initial variance of the observed components.
    pub initial_position_var: f64,
    /// Initial velocity variance as a multiple of `initial_position_var`.
    pub initial_velocity_factor: f64,
}

impl Default for BoxNoise {
    fn default() -> Self {
        Self {
            observation: [1.0, 1.0, 10.0, 0.01],
            process: [1.0, 1.0, 1.0, 0.0001, 0.01, 0.01, 0.0001],
            initial_position_var: 10.0,
            initial_velocity_factor: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SortParams {
    /// Frames a track survives without an association.
    pub max_age: u32,
    /// Consecutive frames a track's prediction may be emitted while unmatched.
    pub max_unmatched_predictions: u32,
    /// Associations required before a matched track is emitted.
    pub min_hits: u32,
    /// Associations required before an unmatched track's prediction is emitted.
    pub min_assoc_for_prediction: u32,
    pub iou_threshold: f64,
    pub noise: BoxNoise,
}

impl SortParams {
    /// Parameters used with the RGB detector.
    pub fn rgb() -> Self {
        Self {
            max_age: 10,
            max_unmatched_predictions: 5,
            min_hits: 3,
            min_assoc_for_prediction: 10,
            iou_threshold: 0.3,
            noise: BoxNoise::default(),
        }
    }

    /// Parameters used with the event-based detector.
    pub fn event() -> Self {
        Self {
            max_age: 10,
            max_unmatched_predictions: 3,
            min_hits: 1,
            min_assoc_for_prediction: 1,
            iou_threshold: 0.3,
            noise: BoxNoise::default(),
        }
    }

    pub fn for_source(source: DetectionSource) -> Self {
        match source {
            DetectionSource::Rgb => Self::rgb(),
            DetectionSource::Event => Self::event(),
        }
    }

    pub fn validate(&self) -> Result<(), SortError> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(SortError::InvalidParams(format!(
                "iou_threshold {} outside [0, 1]",
                self.iou_threshold
            )));
        }
        let n = &self.noise;
        if n.observation.iter().chain(&n.process).any(|v| !(*v >= 0.0))
            || !(n.initial_position_var > 0.0)
            || !(n.initial_velocity_factor > 0.0)
        {
            return Err(SortError::InvalidParams("noise variances must be non-negative".into()));
        }
        Ok(())
    }
}

/// Mean and covariance of `[u, v, s, r, u̇, v̇, ṡ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState2D {
    pub mean: State,
    pub covariance: StateCov,
}

fn transition() -> StateCov {
    let mut f = StateCov::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation_model() -> ObsModel {
    let mut h = ObsModel::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize<const N: usize>(m: &mut SMatrix<f64, N, N>) {
    *m = (*m + m.transpose()) * 0.5;
}

impl TrackState2D {
    pub fn from_observation(z: [f64; 4], noise: &BoxNoise) -> Self {
        let mut mean = State::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&Obs::from(z));
        let p = noise.initial_position_var;
        let pv = p * noise.initial_velocity_factor;
        let covariance = StateCov::from_diagonal(&State::from([p, p, p, p, pv, pv, pv]));
        Self { mean, covariance }
    }

    /// One constant-velocity step. A step that would make the area
    /// non-positive zeroes the area rate first.
    pub fn predict(&mut self, noise: &BoxNoise) {
        if self.mean[2] + self.mean[6] <= 0.0 {
            self.mean[6] = 0.0;
        }
        let f = transition();
        self.mean = f * self.mean;
        self.covariance = f * self.covariance * f.transpose() + StateCov::from_diagonal(&State::from(noise.process));
        symmetrize(&mut self.covariance);
    }

    pub fn update(&mut self, z: [f64; 4], noise: &BoxNoise) {
        let h = observation_model();
        let r = ObsCov::from_diagonal(&Obs::from(noise.observation));
        let innovation = Obs::from(z) - h * self.mean;
        let s = h * self.covariance * h.transpose() + r;
        let Some(s_inv) = s.try_inverse() else {
            log::warn!("singular innovation covariance; update skipped");
            return;
        };
        let gain = self.covariance * h.transpose() * s_inv;
        self.mean += gain * innovation;
        // Joseph form keeps the covariance symmetric PSD
        let ikh = StateCov::identity() - gain * h;
        self.covariance = ikh * self.covariance * ikh.transpose() + gain * r * gain.transpose();
        symmetrize(&mut self.covariance);
    }

    pub fn bbox(&self) -> Option<BBox> {
        obs_to_bbox([self.mean[0], self.mean[1], self.mean[2], self.mean[3]]).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track2D {
    pub id: u64,
    pub state: TrackState2D,
    pub class_id: ClassId,
    /// Confidence of the latest associated detection.
    pub confidence: f64,
    pub source: DetectionSource,
    pub hits: u32,
    pub hit_streak: u32,
    pub age: u32,
    pub time_since_update: u32,
    last_bbox: BBox,
}

impl Track2D {
    fn new(id: u64, det: &Detection2D, noise: &BoxNoise) -> Result<Self, SortError> {
        let z = bbox_to_obs(&det.bbox)?;
        Ok(Self {
            id,
            state: TrackState2D::from_observation(z, noise),
            class_id: det.class_id,
            confidence: det.confidence,
            source: det.source,
            hits: 1,
            hit_streak: 1,
            age: 0,
            time_since_update: 0,
            last_bbox: det.bbox,
        })
    }

    /// Predicts one frame ahead and returns the predicted box.
    pub fn predict(&mut self, noise: &BoxNoise) -> BBox {
        self.state.predict(noise);
        self.age += 1;
        if self.time_since_update > 0 {
            self.hit_streak = 0;
        }
        self.time_since_update += 1;
        if let Some(b) = self.state.bbox() {
            self.last_bbox = b;
        }
        self.last_bbox
    }

    pub fn update(&mut self, det: &Detection2D, noise: &BoxNoise) -> Result<(), SortError> {
        let z = bbox_to_obs(&det.bbox)?;
        self.state.update(z, noise);
        self.hits += 1;
        self.hit_streak += 1;
        self.time_since_update = 0;
        self.confidence = det.confidence;
        if let Some(b) = self.state.bbox() {
            self.last_bbox = b;
        }
        Ok(())
    }

    /// Current state as a box (last valid box if the state degenerated).
    pub fn bbox(&self) -> BBox {
        self.last_bbox
    }
}

/// Result of matching predicted track boxes to detections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// IoU with class gating: boxes of different classes score 0.
pub fn gated_iou(a: &BBox, a_class: ClassId, b: &BBox, b_class: ClassId) -> f64 {
    if a_class == b_class {
        iou(a, b)
    } else {
        0.0
    }
}

/// Maximum-total-IoU matching followed by the threshold gate.
pub fn associate(tracks: &[(BBox, ClassId)], dets: &[Detection2D], iou_threshold: f64) -> Association {
    let scores = ScoreMatrix::from_fn(tracks.len(), dets.len(), |r, c| {
        gated_iou(&tracks[r].0, tracks[r].1, &dets[c].bbox, dets[c].class_id)
    });
    associate_scores(&scores, iou_threshold)
}

pub fn associate_scores(scores: &ScoreMatrix, iou_threshold: f64) -> Association {
    let assignment = assignment::maximize(scores);
    let mut det_used = vec![false; scores.cols()];
    let mut out = Association::default();
    for (r, c) in assignment.row_to_col.iter().enumerate() {
        match c {
            Some(c) if scores.get(r, *c) >= iou_threshold && scores.get(r, *c) > 0.0 => {
                out.matches.push((r, *c));
                det_used[*c] = true;
            }
            _ => out.unmatched_tracks.push(r),
        }
    }
    out.unmatched_detections = (0..scores.cols()).filter(|&c| !det_used[c]).collect();
    out
}

/// One emitted track box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub track_id: u64,
    pub bbox: BBox,
    pub class_id: ClassId,
    pub confidence: f64,
    /// `true` when the box is a prediction without an associated detection.
    pub coasted: bool,
}

/// Output of one tracker step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub emitted: Vec<TrackOutput>,
    /// Ids of tracks deleted in this step.
    pub deleted: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct SortTracker {
    params: SortParams,
    tracks: Vec<Track2D>,
    next_id: u64,
    last_t: Option<f64>,
}

impl SortTracker {
    pub fn new(params: SortParams) -> Result<Self, SortError> {
        params.validate()?;
        Ok(Self {
            params,
            tracks: Vec::new(),
            next_id: 1,
            last_t: None,
        })
    }

    pub fn params(&self) -> &SortParams {
        &self.params
    }

    pub fn tracks(&self) -> &[Track2D] {
        &self.tracks
    }

    /// Processes one frame of detections taken at time `t`.
    pub fn step(&mut self, t: f64, dets: &[Detection2D]) -> Result<StepOutput, SortError> {
        if let Some(prev) = self.last_t {
            if !(t > prev) {
                return Err(SortError::OutOfOrder { t, prev });
            }
        }
        for d in dets {
            bbox_to_obs(&d.bbox)?;
        }
        self.last_t = Some(t);
        let noise = self.params.noise;

        let predicted: Vec<(BBox, ClassId)> = self
            .tracks
            .iter_mut()
            .map(|tr| (tr.predict(&noise), tr.class_id))
            .collect();
        let assoc = associate(&predicted, dets, self.params.iou_threshold);

        let mut matched = vec![false; self.tracks.len()];
        for &(ti, di) in &assoc.matches {
            self.tracks[ti].update(&dets[di], &noise)?;
            matched[ti] = true;
        }
        for &di in &assoc.unmatched_detections {
            let track = Track2D::new(self.next_id, &dets[di], &noise)?;
            self.next_id += 1;
            self.tracks.push(track);
            matched.push(true);
        }

        let p = &self.params;
        let mut out = StepOutput::default();
        let mut kept = Vec::with_capacity(self.tracks.len());
        for (tr, was_matched) in self.tracks.drain(..).zip(matched) {
            if tr.time_since_update > p.max_age {
                out.deleted.push(tr.id);
                continue;
            }
            let emit = if was_matched {
                tr.hits >= p.min_hits
            } else {
                tr.hits >= p.min_hits
                    && tr.hits >= p.min_assoc_for_prediction
                    && tr.time_since_update <= p.max_unmatched_predictions
            };
            if emit {
                out.emitted.push(TrackOutput {
                    track_id: tr.id,
                    bbox: tr.bbox(),
                    class_id: tr.class_id,
                    confidence: tr.confidence,
                    coasted: !was_matched,
                });
            }
            kept.push(tr);
        }
        self.tracks = kept;
        Ok(out)
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{data_lines, parse_f64, IoError};
use crate::geometry::{RigidTransform, FRAME_HELMET_1, FRAME_HELMET_2, FRAME_RIG_MARKERS, FRAME_WORLD};

/// Queries may extrapolate this far past either end of a subject's record by
/// holding the end pose.
const SPAN_SLACK_S: f64 = 0.010;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subject {
    SensorRig,
    Helmet1,
    Helmet2,
}

impl Subject {
    pub const ALL: [Subject; 3] = [Subject::SensorRig, Subject::Helmet1, Subject::Helmet2];

    pub fn as_str(self) -> &'static str {
        match self {
            Subject::SensorRig => "sensor_rig",
            Subject::Helmet1 => "helmet_1",
            Subject::Helmet2 => "helmet_2",
        }
    }

    /// Marker-body frame label (`T_W^{frame}`).
    pub fn frame(self) -> &'static str {
        match self {
            Subject::SensorRig => FRAME_RIG_MARKERS,
            Subject::Helmet1 => FRAME_HELMET_1,
            Subject::Helmet2 => FRAME_HELMET_2,
        }
    }

    pub fn is_person(self) -> bool {
        self != Subject::SensorRig
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subject {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subject::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown subject {s:?}"))
    }
}

/// One motion-capture sample `T_W^{M_subject}` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthPose {
    pub t: f64,
    pub subject: Subject,
    pub pose: RigidTransform,
}

/// Ground-truth samples split per subject, each strictly increasing in time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseStream {
    /// File order, kept for writing back.
    records: Vec<GroundTruthPose>,
    by_subject: BTreeMap<Subject, Vec<usize>>,
}

impl PoseStream {
    pub fn new(records: Vec<GroundTruthPose>) -> Result<Self, String> {
        let mut by_subject: BTreeMap<Subject, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            let idx = by_subject.entry(r.subject).or_default();
            if let Some(&last) = idx.last() {
                if !(r.t > records[last].t) {
                    return Err(format!(
                        "record {}: {} timestamp {} not after {}",
                        i + 1,
                        r.subject,
                        r.t,
                        records[last].t
                    ));
                }
            }
            if r.pose.parent() != FRAME_WORLD || r.pose.child() != r.subject.frame() {
                return Err(format!(
                    "record {}: pose frames do not match subject {}",
                    i + 1,
                    r.subject
                ));
            }
            idx.push(i);
        }
        Ok(Self { records, by_subject })
    }

    pub fn records(&self) -> &[GroundTruthPose] {
        &self.records
    }

    pub fn subjects(&self) -> impl Iterator<Item = Subject> + '_ {
        self.by_subject.keys().copied()
    }

    pub fn samples(&self, subject: Subject) -> impl Iterator<Item = &GroundTruthPose> + '_ {
        self.by_subject
            .get(&subject)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// `(first, last)` sample time of a subject.
    pub fn span(&self, subject: Subject) -> Option<(f64, f64)> {
        let idx = self.by_subject.get(&subject)?;
        Some((self.records[*idx.first()?].t, self.records[*idx.last()?].t))
    }

    pub fn interpolate(&self, subject: Subject, t: f64) -> Result<RigidTransform, IoError> {
        interpolate_pose(self, subject, t)
    }
}

/// Pose of `subject` at `t`: linear in translation, slerp in rotation
/// between the bracketing samples.
pub fn interpolate_pose(stream: &PoseStream, subject: Subject, t: f64) -> Result<RigidTransform, IoError> {
    let idx = stream
        .by_subject
        .get(&subject)
        .filter(|v| !v.is_empty())
        .ok_or(IoError::NoPoses(subject))?;
    let rec = |k: usize| &stream.records[idx[k]];
    let (start, end) = (rec(0).t, rec(idx.len() - 1).t);
    if t < start - SPAN_SLACK_S || t > end + SPAN_SLACK_S || !t.is_finite() {
        return Err(IoError::PoseOutOfRange { subject, t, start, end });
    }
    if t <= start {
        return Ok(rec(0).pose.clone());
    }
    if t >= end {
        return Ok(rec(idx.len() - 1).pose.clone());
    }
    // first sample with time > t
    let hi = idx.partition_point(|&i| stream.records[i].t <= t);
    let (a, b) = (rec(hi - 1), rec(hi));
    if a.t == t {
        return Ok(a.pose.clone());
    }
    let s = (t - a.t) / (b.t - a.t);
    let translation = a.pose.translation().lerp(b.pose.translation(), s);
    let rotation = a.pose.rotation().slerp(b.pose.rotation(), s);
    Ok(RigidTransform::from_parts(
        a.pose.parent(),
        a.pose.child(),
        rotation,
        translation,
    ))
}

pub fn parse_poses(text: &str) -> Result<PoseStream, IoError> {
    let mut records = Vec::new();
    for (line, content) in data_lines(text) {
        let f: Vec<&str> = content.split_whitespace().collect();
        if f.len() != 9 {
            return Err(IoError::parse(line, format!("expected 9 fields, found {}", f.len())));
        }
        let t = parse_f64(line, "t", f[0])?;
        let subject: Subject = f[1].parse().map_err(|m| IoError::parse(line, m))?;
        let mut v = [0.0; 7];
        for (k, name) in ["tx", "ty", "tz", "qw", "qx", "qy", "qz"].iter().enumerate() {
            v[k] = parse_f64(line, name, f[k + 2])?;
        }
        let pose = RigidTransform::new(
            FRAME_WORLD,
            subject.frame(),
            [v[3], v[4], v[5], v[6]],
            [v[0], v[1], v[2]],
        )
        .map_err(|e| IoError::parse(line, e.to_string()))?;
        records.push(GroundTruthPose { t, subject, pose });
    }
    PoseStream::new(records).map_err(|m| IoError::parse(0, m))
}

pub fn load_poses(path: &Path) -> Result<PoseStream, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_poses(&text)
}

pub fn write_poses(records: &[GroundTruthPose]) -> String {
    let mut out = String::new();
    for r in records {
        let t = r.pose.translation();
        let [qw, qx, qy, qz] = r.pose.quat_wxyz();
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            r.t, r.subject, t.x, t.y, t.z, qw, qx, qy, qz
        )
        .expect("write to string");
    }
    out
}

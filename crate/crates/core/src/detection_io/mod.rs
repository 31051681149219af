//! Pipeline inputs: data model, file formats and event-tensor preprocessing.
//!
//! File formats (all little-endian, UTF-8 for text):
//!
//! * detections, text, one record per line:
//!   `t class_id confidence x1 y1 x2 y2 source` (source `rgb` | `event`);
//!   tracked output appends a `track_id` column.
//! * events, binary: 16-byte header `b"VLEV"`, `u32` version (1), `u32`
//!   width, `u32` height, then packed 13-byte records
//!   `u16 x, u16 y, f64 t, i8 p`.
//! * scans, binary: repeated `f64 scan_t, u32 count` followed by `count`
//!   packed 20-byte points `f32 x, f32 y, f32 z, f64 t`.
//! * poses, text, one record per line:
//!   `t subject tx ty tz qw qx qy qz` (subject `sensor_rig` | `helmet_1` | `helmet_2`).
//!
//! Text files may contain blank lines and `#` comment lines. Numbers are
//! written in the shortest form that parses back to the same `f64`, so
//! load-then-write of a file produced by the writers is byte-identical.

mod detections;
mod events;
mod poses;
mod scans;

use std::path::PathBuf;

use thiserror::Error;

pub use detections::{
    group_frames, load_detections, load_tracked, merge_frame_times, parse_detections, parse_tracked, write_detections,
    write_tracked, ClassId, Detection2D, DetectionSource, Frame, TrackedDetection, CLASS_CAR, CLASS_PERSON,
};
pub use events::{
    bin_events, bin_events_with, fit_tensor, load_events, read_events, write_events, BinStats, Event, EventStream,
    EventTensor, DEFAULT_SLICES, DEFAULT_WINDOW_S,
};
pub use poses::{interpolate_pose, load_poses, parse_poses, write_poses, GroundTruthPose, PoseStream, Subject};
pub use scans::{load_scans, read_scans, write_scans, LidarPoint, LidarScan};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {t} precedes previous record at {prev}")]
    Ordering { line: usize, t: f64, prev: f64 },
    #[error("scan {scan}: {message}")]
    Scan { scan: usize, message: String },
    #[error("event file: {0}")]
    Events(String),
    #[error("pose query for {subject} at t={t}: outside recorded span [{start}, {end}]")]
    PoseOutOfRange {
        subject: Subject,
        t: f64,
        start: f64,
        end: f64,
    },
    #[error("no poses recorded for {0}")]
    NoPoses(Subject),
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        IoError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Iterator over `(line_number, trimmed_content)` of non-comment, non-blank lines.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_f64(line: usize, field: &str, s: &str) -> Result<f64, IoError> {
    let v: f64 = s
        .parse()
        .map_err(|_| IoError::parse(line, format!("{field}: cannot parse {s:?} as a number")))?;
    if !v.is_finite() {
        return Err(IoError::parse(line, format!("{field}: non-finite value {s:?}")));
    }
    Ok(v)
}

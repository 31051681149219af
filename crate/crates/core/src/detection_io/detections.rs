use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{data_lines, parse_f64, IoError};
use crate::bbox::BBox;

pub type ClassId = u32;

/// MS-COCO index for "person".
pub const CLASS_PERSON: ClassId = 0;
/// MS-COCO index for "car".
pub const CLASS_CAR: ClassId = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionSource {
    Rgb,
    Event,
}

impl DetectionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionSource::Rgb => "rgb",
            DetectionSource::Event => "event",
        }
    }
}

impl FromStr for DetectionSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rgb" => Ok(DetectionSource::Rgb),
            "event" => Ok(DetectionSource::Event),
            other => Err(format!("unknown source {other:?} (expected rgb or event)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection2D {
    pub t: f64,
    pub bbox: BBox,
    pub class_id: ClassId,
    pub confidence: f64,
    pub source: DetectionSource,
}

impl Detection2D {
    pub fn new(
        t: f64,
        bbox: BBox,
        class_id: ClassId,
        confidence: f64,
        source: DetectionSource,
    ) -> Result<Self, String> {
        if !t.is_finite() {
            return Err(format!("non-finite timestamp {t}"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(format!("confidence {confidence} outside [0, 1]"));
        }
        Ok(Self {
            t,
            bbox,
            class_id,
            confidence,
            source,
        })
    }
}

/// A detection emitted by the tracker, tagged with its track id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedDetection {
    pub detection: Detection2D,
    pub track_id: u64,
}

fn parse_record(line: usize, fields: &[&str]) -> Result<Detection2D, IoError> {
    let t = parse_f64(line, "t", fields[0])?;
    let class_id: ClassId = fields[1]
        .parse()
        .map_err(|_| IoError::parse(line, format!("class_id: cannot parse {:?}", fields[1])))?;
    let confidence = parse_f64(line, "confidence", fields[2])?;
    let x1 = parse_f64(line, "x1", fields[3])?;
    let y1 = parse_f64(line, "y1", fields[4])?;
    let x2 = parse_f64(line, "x2", fields[5])?;
    let y2 = parse_f64(line, "y2", fields[6])?;
    let source: DetectionSource = fields[7].parse().map_err(|m| IoError::parse(line, m))?;
    let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| IoError::parse(line, e.to_string()))?;
    Detection2D::new(t, bbox, class_id, confidence, source).map_err(|m| IoError::parse(line, m))
}

fn parse_lines<T>(
    text: &str,
    columns: usize,
    mut build: impl FnMut(usize, &[&str]) -> Result<(f64, T), IoError>,
) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (line, content) in data_lines(text) {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != columns {
            return Err(IoError::parse(
                line,
                format!("expected {columns} fields, found {}", fields.len()),
            ));
        }
        let (t, rec) = build(line, &fields)?;
        if t < prev {
            return Err(IoError::Ordering { line, t, prev });
        }
        prev = t;
        out.push(rec);
    }
    Ok(out)
}

/// Parses detection text. Records must be in non-decreasing time order;
/// records sharing a timestamp keep their file order.
pub fn parse_detections(text: &str) -> Result<Vec<Detection2D>, IoError> {
    parse_lines(text, 8, |line, f| parse_record(line, f).map(|d| (d.t, d)))
}

/// Parses tracked-detection text (detection columns plus `track_id`).
pub fn parse_tracked(text: &str) -> Result<Vec<TrackedDetection>, IoError> {
    parse_lines(text, 9, |line, f| {
        let detection = parse_record(line, &f[..8])?;
        let track_id = f[8]
            .parse()
            .map_err(|_| IoError::parse(line, format!("track_id: cannot parse {:?}", f[8])))?;
        Ok((detection.t, TrackedDetection { detection, track_id }))
    })
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection2D>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_detections(&text)
}

pub fn load_tracked(path: &Path) -> Result<Vec<TrackedDetection>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_tracked(&text)
}

fn push_record(out: &mut String, d: &Detection2D) {
    let [x1, y1, x2, y2] = d.bbox.corners();
    write!(
        out,
        "{} {} {} {} {} {} {} {}",
        d.t,
        d.class_id,
        d.confidence,
        x1,
        y1,
        x2,
        y2,
        d.source.as_str()
    )
    .expect("write to string");
}

pub fn write_detections(dets: &[Detection2D]) -> String {
    let mut out = String::new();
    for d in dets {
        push_record(&mut out, d);
        out.push('\n');
    }
    out
}

pub fn write_tracked(tracks: &[TrackedDetection]) -> String {
    let mut out = String::new();
    for t in tracks {
        push_record(&mut out, &t.detection);
        writeln!(out, " {}", t.track_id).expect("write to string");
    }
    out
}

/// Detections sharing one camera timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub detections: Vec<Detection2D>,
}

/// Groups a time-ordered detection stream into frames.
///
/// Frames that produced no detection are absent from detection files; when
/// `frame_period` is given, empty frames are inserted into every gap longer
/// than 1.5 periods so that trackers see the misses.
pub fn group_frames(dets: &[Detection2D], frame_period: Option<f64>) -> Vec<Frame> {
    let mut frames: Vec<Frame> = Vec::new();
    for d in dets {
        match frames.last_mut() {
            Some(f) if f.t == d.t => f.detections.push(*d),
            _ => frames.push(Frame {
                t: d.t,
                detections: vec![*d],
            }),
        }
    }
    match frame_period {
        Some(p) if p > 0.0 => fill_gaps(frames, p),
        _ => frames,
    }
}

fn fill_gaps(frames: Vec<Frame>, period: f64) -> Vec<Frame> {
    let mut out: Vec<Frame> = Vec::with_capacity(frames.len());
    for f in frames {
        if let Some(prev) = out.last() {
            let gap = f.t - prev.t;
            if gap > 1.5 * period {
                let missing = (gap / period).round() as usize;
                let start = prev.t;
                for k in 1..missing {
                    out.push(Frame {
                        t: start + gap * k as f64 / missing as f64,
                        detections: Vec::new(),
                    });
                }
            }
        }
        out.push(f);
    }
    out
}

/// Merges the frame timestamps of several streams (union, sorted).
pub fn merge_frame_times(streams: &[&[Frame]]) -> Vec<f64> {
    let mut times: Vec<f64> = streams.iter().flat_map(|s| s.iter().map(|f| f.t)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = "\
0.1 0 0.9 10 20 30 60 rgb
0.1 2 0.5 100 100 150 130 rgb
0.15 0 0.75 12 21 32 61 event
";

    #[test]
    fn empty_file_is_empty_stream() {
        assert!(parse_detections("").unwrap().is_empty());
        assert!(parse_detections("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn three_lines_in_order() {
        let d = parse_detections(THREE).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d[0].class_id, 0);
        assert_eq!(d[1].class_id, 2);
        assert_eq!(d[2].source, DetectionSource::Event);
        assert_eq!(d[1].bbox, BBox::new(100.0, 100.0, 150.0, 130.0).unwrap());
        assert_eq!(write_detections(&d), THREE);
    }

    #[test]
    fn bad_confidence_names_line() {
        let text = "0.1 0 0.9 10 20 30 60 rgb\n0.2 0 1.2 10 20 30 60 rgb\n";
        match parse_detections(text) {
            Err(IoError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("confidence"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ordering_violation_is_reported() {
        let text = "0.2 0 0.9 10 20 30 60 rgb\n0.1 0 0.9 10 20 30 60 rgb\n";
        assert!(matches!(parse_detections(text), Err(IoError::Ordering { line: 2, .. })));
    }

    #[test]
    fn field_errors() {
        assert!(parse_detections("0.1 0 0.9 10 20 30 rgb\n").is_err());
        assert!(parse_detections("0.1 0 0.9 30 20 10 60 rgb\n").is_err());
        assert!(parse_detections("0.1 0 0.9 10 20 30 60 lidar\n").is_err());
        assert!(parse_detections("0.1 -1 0.9 10 20 30 60 rgb\n").is_err());
        assert!(parse_detections("nan 0 0.9 10 20 30 60 rgb\n").is_err());
    }

    #[test]
    fn tracked_roundtrip() {
        let d = parse_detections(THREE).unwrap();
        let tracked: Vec<_> = d
            .iter()
            .enumerate()
            .map(|(i, d)| TrackedDetection {
                detection: *d,
                track_id: i as u64 + 1,
            })
            .collect();
        let text = write_tracked(&tracked);
        assert_eq!(parse_tracked(&text).unwrap(), tracked);
    }

    #[test]
    fn frames_group_and_fill() {
        let d = parse_detections(THREE).unwrap();
        let f = group_frames(&d, None);
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].detections.len(), 2);
        let text = "0.0 0 0.9 10 20 30 60 rgb\n0.4 0 0.9 10 20 30 60 rgb\n";
        let f = group_frames(&parse_detections(text).unwrap(), Some(0.1));
        let times: Vec<f64> = f.iter().map(|f| f.t).collect();
        assert_eq!(times.len(), 5);
        assert!((times[2] - 0.2).abs() < 1e-12);
        assert!(f[1].detections.is_empty());
    }
}

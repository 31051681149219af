use crate::assignment::{self, ScoreMatrix};
use crate::detection_io::{group_frames, Detection2D, Frame};
use crate::exec::{self, Execution};
use crate::sort2d::{gated_iou, SortParams, SortTracker};

use super::EvalError;

/// Reference detections below this confidence are discarded before matching.
pub const REFERENCE_MIN_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrCell {
    pub iou_threshold: f64,
    pub confidence_threshold: f64,
    pub counts: Counts,
}

impl PrCell {
    pub fn precision(&self) -> f64 {
        self.counts.precision()
    }

    pub fn recall(&self) -> f64 {
        self.counts.recall()
    }
}

/// IoU and confidence threshold grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub iou: Vec<f64>,
    pub confidence: Vec<f64>,
}

impl Grid {
    /// IoU 0.50–0.90 and confidence 0.30–0.90, both in steps of 0.05.
    pub fn standard() -> Self {
        let steps = |lo: u32, hi: u32| (lo..=hi).step_by(5).map(|k| k as f64 / 100.0).collect();
        Self {
            iou: steps(50, 90),
            confidence: steps(30, 90),
        }
    }
}

/// Cells indexed `[confidence][iou]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrTable {
    pub grid: Grid,
    pub cells: Vec<Vec<PrCell>>,
}

impl PrTable {
    pub fn cell(&self, conf_idx: usize, iou_idx: usize) -> &PrCell {
        &self.cells[conf_idx][iou_idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PrCell> {
        self.cells.iter().flatten()
    }
}

/// Reference and candidate detections of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedFrame {
    pub t: f64,
    pub reference: Vec<Detection2D>,
    pub candidate: Vec<Detection2D>,
}

pub fn filter_reference(dets: &[Detection2D], min_confidence: f64) -> Vec<Detection2D> {
    dets.iter()
        .filter(|d| d.confidence >= min_confidence)
        .copied()
        .collect()
}

/// Pairs the frames of two streams whose timestamps differ by at most
/// `tolerance`; unpaired frames are kept with an empty counterpart.
pub fn pair_frames(reference: &[Detection2D], candidate: &[Detection2D], tolerance: f64) -> Vec<PairedFrame> {
    let r = group_frames(reference, None);
    let c = group_frames(candidate, None);
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(r.len().max(c.len()));
    while i < r.len() || j < c.len() {
        let take_ref = |f: &Frame| PairedFrame {
            t: f.t,
            reference: f.detections.clone(),
            candidate: Vec::new(),
        };
        let take_cand = |f: &Frame| PairedFrame {
            t: f.t,
            reference: Vec::new(),
            candidate: f.detections.clone(),
        };
        match (r.get(i), c.get(j)) {
            (Some(a), Some(b)) if (a.t - b.t).abs() <= tolerance => {
                out.push(PairedFrame {
                    t: a.t,
                    reference: a.detections.clone(),
                    candidate: b.detections.clone(),
                });
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a.t < b.t => {
                out.push(take_ref(a));
                i += 1;
            }
            (Some(_), Some(b)) | (None, Some(b)) => {
                out.push(take_cand(b));
                j += 1;
            }
            (Some(a), None) => {
                out.push(take_ref(a));
                i += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// IoUs of the max-total-IoU class-gated matching, zero-overlap pairs dropped.
fn matched_ious(reference: &[Detection2D], candidate: &[Detection2D]) -> Vec<f64> {
    let scores = ScoreMatrix::from_fn(reference.len(), candidate.len(), |r, c| {
        gated_iou(
            &reference[r].bbox,
            reference[r].class_id,
            &candidate[c].bbox,
            candidate[c].class_id,
        )
    });
    let a = assignment::maximize(&scores);
    a.pairs().map(|(r, c)| scores.get(r, c)).filter(|&s| s > 0.0).collect()
}

fn counts_from(ious: &[f64], n_ref: usize, n_cand: usize, iou_threshold: f64) -> Counts {
    let tp = ious.iter().filter(|&&s| s >= iou_threshold).count() as u64;
    Counts {
        tp,
        fp: n_cand as u64 - tp,
        fn_: n_ref as u64 - tp,
    }
}

/// `(tp, fp, fn)` for one frame.
pub fn match_frame(reference: &[Detection2D], candidate: &[Detection2D], iou_threshold: f64) -> Counts {
    counts_from(
        &matched_ious(reference, candidate),
        reference.len(),
        candidate.len(),
        iou_threshold,
    )
}

/// Counts of every IoU threshold for one candidate stream; the matching
/// does not depend on the threshold, so it is computed once per frame.
fn sweep_iou<'a>(frames: impl Iterator<Item = (&'a [Detection2D], Vec<Detection2D>)>, iou: &[f64]) -> Vec<Counts> {
    let mut acc = vec![Counts::default(); iou.len()];
    for (reference, candidate) in frames {
        let ious = matched_ious(reference, &candidate);
        for (k, &thr) in iou.iter().enumerate() {
            acc[k] += counts_from(&ious, reference.len(), candidate.len(), thr);
        }
    }
    acc
}

fn table_from(grid: &Grid, per_conf: Vec<Vec<Counts>>) -> PrTable {
    let cells = per_conf
        .into_iter()
        .zip(&grid.confidence)
        .map(|(row, &conf)| {
            row.into_iter()
                .zip(&grid.iou)
                .map(|(counts, &iou)| PrCell {
                    iou_threshold: iou,
                    confidence_threshold: conf,
                    counts,
                })
                .collect()
        })
        .collect();
    PrTable {
        grid: grid.clone(),
        cells,
    }
}

fn above(dets: &[Detection2D], conf: f64) -> Vec<Detection2D> {
    dets.iter().filter(|d| d.confidence >= conf).copied().collect()
}

/// Precision/recall over the full grid, candidates filtered per confidence
/// threshold. Confidence rows are evaluated independently.
pub fn pr_sweep(frames: &[PairedFrame], grid: &Grid, exec: Execution) -> PrTable {
    let per_conf = exec::map(exec, &grid.confidence, |&conf| {
        sweep_iou(
            frames
                .iter()
                .map(|f| (f.reference.as_slice(), above(&f.candidate, conf))),
            &grid.iou,
        )
    });
    table_from(grid, per_conf)
}

/// Runs SORT over the candidate detections of every frame and returns the
/// emitted boxes as the new candidate stream.
pub fn track_frames(
    frames: &[PairedFrame],
    params: &SortParams,
    conf: f64,
) -> Result<Vec<Vec<Detection2D>>, EvalError> {
    let mut tracker = SortTracker::new(*params)?;
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        let dets = above(&f.candidate, conf);
        let step = tracker.step(f.t, &dets)?;
        let source = f
            .candidate
            .first()
            .map(|d| d.source)
            .unwrap_or(crate::detection_io::DetectionSource::Event);
        out.push(
            step.emitted
                .iter()
                .map(|o| Detection2D {
                    t: f.t,
                    bbox: o.bbox,
                    class_id: o.class_id,
                    confidence: o.confidence,
                    source,
                })
                .collect(),
        );
    }
    Ok(out)
}

/// `(pure, tracked)` tables; the tracked table scores the SORT output of
/// the confidence-filtered candidate stream.
pub fn pair_sweep_with_tracking(
    frames: &[PairedFrame],
    params: &SortParams,
    grid: &Grid,
    exec: Execution,
) -> Result<(PrTable, PrTable), EvalError> {
    let pure = pr_sweep(frames, grid, exec);
    let per_conf = exec::map(exec, &grid.confidence, |&conf| -> Result<Vec<Counts>, EvalError> {
        let tracked = track_frames(frames, params, conf)?;
        Ok(sweep_iou(
            frames.iter().zip(tracked).map(|(f, c)| (f.reference.as_slice(), c)),
            &grid.iou,
        ))
    });
    let per_conf = per_conf.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((pure, table_from(grid, per_conf)))
}

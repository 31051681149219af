//! Evaluation protocols: precision/recall sweeps of a candidate detector
//! against a reference detector, and 3D position error against motion
//! capture.

mod errors3d;
mod pr;
mod report;

pub use errors3d::{
    position_errors, AxisError, ErrorAccumulator, ErrorReport, ErrorSummary, PositionEstimate, DEFAULT_GATE_M,
};
pub use pr::{
    filter_reference, match_frame, pair_frames, pair_sweep_with_tracking, pr_sweep, track_frames, Counts, Grid,
    PairedFrame, PrCell, PrTable, REFERENCE_MIN_CONFIDENCE,
};
pub use report::{
    error_csv, format_metric, parse_error_csv, parse_pr_csv, pr_csv, render_conf_table, render_error_table,
    render_iou_table, ErrorTable, PrEntry, PrValues,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("estimates and ground truth do not overlap in time")]
    NoOverlap,
    #[error("tracking failed: {0}")]
    Tracking(#[from] crate::sort2d::SortError),
    #[error("{0}")]
    Io(#[from] crate::detection_io::IoError),
    #[error("geometry: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error("report line {line}: {message}")]
    Report { line: usize, message: String },
}

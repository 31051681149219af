//! Camera-LiDAR perception pipeline.
//!
//! 2D detections are tracked in the image plane with SORT ([`sort2d`]), the
//! LiDAR points falling inside each tracked box are reduced to one
//! representative point ([`lidar_fusion`]) and fed to a per-object 3D
//! constant-velocity Kalman filter ([`track3d`]). The supporting pieces are
//! the frame graph and camera model ([`geometry`]), the two extrinsic
//! solvers ([`calibration`]), the file formats and event-tensor
//! preprocessing ([`detection_io`]), the evaluation protocols
//! ([`evaluation`]) and a deterministic synthetic scene generator
//! ([`simulator`]) that provides ground truth for end-to-end checks.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod bbox;
pub mod calibration;
pub mod detection_io;
pub mod evaluation;
pub mod exec;
pub mod geometry;
pub mod lidar_fusion;
pub mod pipeline;
pub mod simulator;
pub mod sort2d;
pub mod track3d;

pub use bbox::BBox;
pub use exec::Execution;
pub use geometry::{CalibrationSet, CameraIntrinsics, RigidTransform};

//! The `--config` file. Every key is optional; command-line flags override
//! file values, which override built-in defaults. Relative paths are taken
//! relative to the directory holding the config file. See
//! `crates/cli/examples/vlfuse.toml` for an annotated example.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use vlfuse::detection_io::DetectionSource;
use vlfuse::lidar_fusion::FusionParams;
use vlfuse::sort2d::SortParams;
use vlfuse::track3d::Filter3dParams;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub source: Option<DetectionSource>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub no_timestamp: Option<bool>,
    pub raw_3d: Option<bool>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub eval_pr: EvalPrSection,
    #[serde(default)]
    pub eval_3d: Eval3dSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub detections: Option<PathBuf>,
    pub scans: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub frame_period: Option<f64>,
    #[serde(default)]
    pub sort: SortSection,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub filter3d: Filter3dSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SortSection {
    pub max_age: Option<u32>,
    pub max_unmatched_predictions: Option<u32>,
    pub min_hits: Option<u32>,
    pub min_assoc_for_prediction: Option<u32>,
    pub iou_threshold: Option<f64>,
}

impl SortSection {
    pub fn apply(&self, mut p: SortParams) -> SortParams {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(
            max_age,
            max_unmatched_predictions,
            min_hits,
            min_assoc_for_prediction,
            iou_threshold
        );
        p
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    pub k_min: Option<f64>,
    pub k_max: Option<f64>,
    pub min_points: Option<usize>,
    pub scan_time_tolerance: Option<f64>,
}

impl FusionSection {
    pub fn apply(&self, mut p: FusionParams) -> FusionParams {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(k_min, k_max, min_points, scan_time_tolerance);
        p
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Filter3dSection {
    pub accel_std: Option<f64>,
    pub obs_std: Option<f64>,
    pub init_velocity_var: Option<f64>,
}

impl Filter3dSection {
    pub fn apply(&self, mut p: Filter3dParams) -> Filter3dParams {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { p.$f = v; })* };
        }
        set!(accel_std, obs_std, init_velocity_var);
        p
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPrSection {
    pub reference: Option<PathBuf>,
    pub candidate: Option<PathBuf>,
    pub from_csv: Option<PathBuf>,
    pub table: Option<String>,
    pub iou_table_confidence: Option<f64>,
    pub confidence_table_iou: Option<f64>,
    pub tolerance: Option<f64>,
    pub tracking: Option<bool>,
    pub iou_thresholds: Option<Vec<f64>>,
    pub confidence_thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub sort: SortSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackInput {
    pub path: PathBuf,
    pub group: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Eval3dSection {
    #[serde(default)]
    pub tracks: Vec<TrackInput>,
    pub poses: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub from_csv: Option<PathBuf>,
    pub gate: Option<f64>,
    /// class id → motion-capture subject, e.g. `"0" = "helmet_1"`.
    #[serde(default)]
    pub subjects: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Scene description file.
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    pub mode: Option<String>,
    pub input: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.out);
        fix(&mut self.run.detections);
        fix(&mut self.run.scans);
        fix(&mut self.run.calibration);
        fix(&mut self.eval_pr.reference);
        fix(&mut self.eval_pr.candidate);
        fix(&mut self.eval_pr.from_csv);
        fix(&mut self.eval_3d.poses);
        fix(&mut self.eval_3d.calibration);
        fix(&mut self.eval_3d.from_csv);
        for t in &mut self.eval_3d.tracks {
            if t.path.is_relative() {
                t.path = base.join(&t.path);
            }
        }
        fix(&mut self.simulate.scene);
        fix(&mut self.calibrate.input);
        fix(&mut self.calibrate.calibration);
    }
}

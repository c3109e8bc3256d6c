//! The three user-facing commands, callable without going through the
//! binary.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use mcmt_core::eval::{compute_hota, EvalPoint, EvalReport};
use mcmt_core::pipeline::run;
use mcmt_core::synth::{generate_scene, Scene, SceneConfig};

use crate::config::{PipelineConfig, SceneFile, StrategyName};
use crate::error::{CliError, Result};
use crate::formats::{self, ASSOCIATIONS, CALIBRATIONS, EVAL_REPORT, SCENE_ECHO, SUMMARY, TRACKS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackSummary {
    pub strategy: StrategyName,
    pub detections: usize,
    pub cameras: usize,
    pub tracklets: usize,
    pub glance_globals: usize,
    pub globals: usize,
    pub warnings: Vec<String>,
}

impl TrackSummary {
    fn render(&self) -> String {
        format!(
            "strategy = {}\ndetections = {}\ncameras = {}\ntracklets = {}\nglance_globals = {}\nglobals = {}\n",
            self.strategy, self.detections, self.cameras, self.tracklets, self.glance_globals, self.globals
        )
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Tracks every camera in `input`, associates across cameras and writes
/// `tracks.csv`, `associations.csv` and `summary.txt` to `output`.
pub fn cmd_track(input: &Path, output: &Path, cfg: &PipelineConfig) -> Result<TrackSummary> {
    let detections = formats::read_detections(input)?;
    let calibrations = formats::read_calibrations(&input.join(CALIBRATIONS))?;
    let mut warnings = Vec::new();
    if detections.is_empty() {
        warnings.push(format!("{} holds no detections; writing empty tracks", input.join(formats::DETECTIONS).display()));
    }
    let params = cfg.params();
    let out = run(&detections, &calibrations, &params, cfg.strategy.into())?;

    create_dir(output)?;
    formats::write_tracks(&output.join(TRACKS), &out.track_rows(&params))?;
    formats::write_associations(&output.join(ASSOCIATIONS), &out.association.report)?;
    let summary = TrackSummary {
        strategy: cfg.strategy,
        detections: detections.len(),
        cameras: detections.iter().map(|d| d.camera_id).collect::<BTreeSet<_>>().len(),
        tracklets: out.tracklets.len(),
        glance_globals: out.association.glance_globals,
        globals: out.association.globals.len(),
        warnings,
    };
    let path = output.join(SUMMARY);
    fs::write(&path, summary.render()).map_err(|e| CliError::io(path, e))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub warnings: Vec<String>,
}

/// Scores `pred` (a tracks file) against `gt`; writes `eval.csv` into
/// `output` when given.
pub fn cmd_eval(gt: &Path, pred: &Path, cfg: &PipelineConfig, output: Option<&Path>) -> Result<EvalOutcome> {
    let gt_points: Vec<EvalPoint> = formats::read_ground_truth(gt)?.iter().map(EvalPoint::from).collect();
    let pred_points = formats::predictions_from_tracks(pred, &formats::read_tracks(pred)?)?;
    let mut warnings = Vec::new();
    if gt_points.is_empty() && pred_points.is_empty() {
        warnings.push("ground truth and predictions are both empty; scores are vacuously perfect".to_string());
    }
    let eval_cfg = cfg.eval_config();
    let report = compute_hota(&gt_points, &pred_points, &eval_cfg)?;
    if let Some(dir) = output {
        create_dir(dir)?;
        formats::write_eval_report(&dir.join(EVAL_REPORT), &report, eval_cfg.d_max)?;
    }
    Ok(EvalOutcome { report, warnings })
}

/// Generates a scene and writes it with an echo of the effective config.
pub fn cmd_synth(scene: &SceneFile, output: &Path) -> Result<Scene> {
    let generated = generate_scene(&SceneConfig::from(scene))?;
    formats::export_scene(&generated, output)?;
    let echo = toml::to_string(scene).map_err(|e| CliError::Usage(format!("cannot serialize scene config: {e}")))?;
    let path = output.join(SCENE_ECHO);
    fs::write(&path, echo).map_err(|e| CliError::io(path, e))?;
    Ok(generated)
}

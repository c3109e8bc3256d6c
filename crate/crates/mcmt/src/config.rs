//! Flat TOML configuration for the pipeline and the scene generator.
//!
//! Every key is optional and falls back to its default; unknown keys are
//! rejected so that typos do not silently run with defaults.

use std::collections::BTreeMap;
use std::path::Path;

use mcmt_core::assoc::{AssocConfig, Fusion, Strategy};
use mcmt_core::eval::EvalConfig;
use mcmt_core::pipeline::PipelineParams;
use mcmt_core::refine::{RefineConfig, SnmsMode};
use mcmt_core::sct::{KalmanParams, SctConfig};
use mcmt_core::synth::SceneConfig;
use mcmt_core::ClassId;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum StrategyName {
    #[serde(rename = "FM", alias = "fm")]
    #[value(name = "FM", alias = "fm")]
    Fm,
    #[serde(rename = "GIDE", alias = "gide")]
    #[value(name = "GIDE", alias = "gide")]
    Gide,
}

impl From<StrategyName> for Strategy {
    fn from(s: StrategyName) -> Self {
        match s {
            StrategyName::Fm => Strategy::Fm,
            StrategyName::Gide => Strategy::Gide,
        }
    }
}

impl std::fmt::Display for StrategyName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyName::Fm => "FM",
            StrategyName::Gide => "GIDE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnmsModeName {
    Merge,
    Suppress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionName {
    Mean,
    Median,
}

/// Every pipeline tunable, one flat key each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Detections below this confidence are ignored by the tracker.
    pub det_min_conf: f64,
    /// Weight of appearance against IoU in the tracker's matching cost.
    pub lambda_app: f64,
    pub iou_gate: f64,
    pub app_gate: f64,
    /// Consecutive hits before a track is confirmed.
    pub n_init: u32,
    /// Missed frames after which a confirmed track ends.
    pub max_misses: u32,
    pub embedding_momentum: f64,
    pub kalman_std_position: f64,
    pub kalman_std_velocity: f64,
    pub kalman_std_measurement: f64,

    /// Overlap coefficient above which two tracklets are duplicates.
    pub theta_oc: f64,
    /// Shared frames needed before the overlap test applies.
    pub theta_frames: usize,
    pub snms_mode: SnmsModeName,
    /// DBSCAN radius (cosine distance) for representative selection.
    pub eps: f64,
    pub min_pts: usize,
    /// Representatives kept per tracklet.
    pub k: usize,
    /// Gaps shorter than this many frames are interpolated.
    pub max_gap: u32,

    /// How far outside the image (fraction of its size) an anchor may lie.
    pub anchor_margin: f64,
    /// `[class_id, meters]` pairs overriding the exported height of world
    /// points; other classes use half their nominal height.
    pub z_offsets: Vec<(u32, f64)>,

    /// Glance window length in frames.
    pub window: u32,
    pub tau_traj: f64,
    pub tau_app: f64,
    pub min_shared: usize,
    pub strategy: StrategyName,
    pub feature_pool_cap: usize,
    pub fusion: FusionName,

    /// Distance (meters) at which localization similarity reaches zero.
    pub d_max: f64,
    pub alphas: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let p = PipelineParams::default();
        let e = EvalConfig::default();
        Self {
            det_min_conf: p.sct.det_min_conf,
            lambda_app: p.sct.lambda_app,
            iou_gate: p.sct.iou_gate,
            app_gate: p.sct.app_gate,
            n_init: p.sct.n_init,
            max_misses: p.sct.max_misses,
            embedding_momentum: p.sct.embedding_momentum,
            kalman_std_position: p.sct.kalman.std_weight_position,
            kalman_std_velocity: p.sct.kalman.std_weight_velocity,
            kalman_std_measurement: p.sct.kalman.std_weight_measurement,
            theta_oc: p.refine.theta_oc,
            theta_frames: p.refine.theta_frames,
            snms_mode: SnmsModeName::Merge,
            eps: p.refine.eps,
            min_pts: p.refine.min_pts,
            k: p.refine.k,
            max_gap: p.refine.max_gap,
            anchor_margin: p.anchor_margin,
            z_offsets: Vec::new(),
            window: p.assoc.window,
            tau_traj: p.assoc.tau_traj,
            tau_app: p.assoc.tau_app,
            min_shared: p.assoc.min_shared,
            strategy: StrategyName::Gide,
            feature_pool_cap: p.assoc.pool_cap,
            fusion: FusionName::Mean,
            d_max: e.d_max,
            alphas: e.alphas,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unit(name: &str, v: f64) -> std::result::Result<(), String> {
    check((0.0..=1.0).contains(&v), || format!("{name} must lie in [0, 1], got {v}"))
}

fn positive(name: &str, v: f64) -> std::result::Result<(), String> {
    check(v.is_finite() && v > 0.0, || format!("{name} must be positive, got {v}"))
}

impl PipelineConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        unit("det_min_conf", self.det_min_conf)?;
        unit("lambda_app", self.lambda_app)?;
        unit("iou_gate", self.iou_gate)?;
        check((-1.0..=1.0).contains(&self.app_gate), || format!("app_gate must lie in [-1, 1], got {}", self.app_gate))?;
        check(self.n_init >= 1, || "n_init must be at least 1".into())?;
        unit("embedding_momentum", self.embedding_momentum)?;
        positive("kalman_std_position", self.kalman_std_position)?;
        positive("kalman_std_velocity", self.kalman_std_velocity)?;
        positive("kalman_std_measurement", self.kalman_std_measurement)?;
        check(self.theta_oc > 0.0 && self.theta_oc <= 1.0, || format!("theta_oc must lie in (0, 1], got {}", self.theta_oc))?;
        check(self.theta_frames >= 1, || "theta_frames must be at least 1".into())?;
        check((0.0..=2.0).contains(&self.eps), || format!("eps must lie in [0, 2], got {}", self.eps))?;
        check(self.min_pts >= 1, || "min_pts must be at least 1".into())?;
        check(self.k >= 1, || "k must be at least 1".into())?;
        check(self.max_gap >= 1, || "max_gap must be at least 1".into())?;
        unit("anchor_margin", self.anchor_margin)?;
        for (c, z) in &self.z_offsets {
            check(z.is_finite(), || format!("z offset of class {c} must be finite"))?;
        }
        check(self.window >= 1, || "window must be at least 1".into())?;
        positive("tau_traj", self.tau_traj)?;
        check((-1.0..=1.0).contains(&self.tau_app), || format!("tau_app must lie in [-1, 1], got {}", self.tau_app))?;
        check(self.min_shared >= 1, || "min_shared must be at least 1".into())?;
        check(self.feature_pool_cap >= 1, || "feature_pool_cap must be at least 1".into())?;
        self.eval_config().validate().map_err(|e| e.to_string())
    }

    pub fn params(&self) -> PipelineParams {
        PipelineParams {
            sct: SctConfig {
                det_min_conf: self.det_min_conf,
                lambda_app: self.lambda_app,
                iou_gate: self.iou_gate,
                app_gate: self.app_gate,
                n_init: self.n_init,
                max_misses: self.max_misses,
                embedding_momentum: self.embedding_momentum,
                kalman: KalmanParams {
                    std_weight_position: self.kalman_std_position,
                    std_weight_velocity: self.kalman_std_velocity,
                    std_weight_measurement: self.kalman_std_measurement,
                },
            },
            refine: RefineConfig {
                theta_oc: self.theta_oc,
                theta_frames: self.theta_frames,
                snms_mode: match self.snms_mode {
                    SnmsModeName::Merge => SnmsMode::Merge,
                    SnmsModeName::Suppress => SnmsMode::Suppress,
                },
                eps: self.eps,
                min_pts: self.min_pts,
                k: self.k,
                max_gap: self.max_gap,
            },
            assoc: AssocConfig {
                window: self.window,
                tau_traj: self.tau_traj,
                tau_app: self.tau_app,
                min_shared: self.min_shared,
                pool_cap: self.feature_pool_cap,
                fusion: match self.fusion {
                    FusionName::Mean => Fusion::Mean,
                    FusionName::Median => Fusion::Median,
                },
            },
            anchor_margin: self.anchor_margin,
            z_offsets: self.z_offsets.iter().map(|&(c, z)| (ClassId(c), z)).collect::<BTreeMap<_, _>>(),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig { alphas: self.alphas.clone(), d_max: self.d_max }
    }
}

/// Scene generator settings, mirroring [`SceneConfig`] with flat keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneFile {
    pub seed: u64,
    /// Seed for detection noise only; `seed` when absent.
    pub noise_seed: Option<u64>,
    pub n_objects: usize,
    pub classes: Vec<u32>,
    pub n_cameras: usize,
    pub duration: u32,
    pub fps: f64,
    pub world_extent: f64,
    /// Per-object waypoint lists of `[x, y]`; an empty list means orbit.
    pub paths: Vec<Vec<[f64; 2]>>,
    pub speed_min: f64,
    pub speed_max: f64,
    pub entry_frames: Vec<u32>,
    pub exit_frames: Vec<u32>,
    pub image_width: u32,
    pub image_height: u32,
    pub camera_height: f64,
    pub pixel_noise_sigma: f64,
    pub embed_dim: usize,
    pub embed_noise_sigma: f64,
    pub miss_rate: f64,
    pub fp_rate: f64,
}

impl Default for SceneFile {
    fn default() -> Self {
        SceneFile::from(&SceneConfig::default())
    }
}

impl From<&SceneConfig> for SceneFile {
    fn from(c: &SceneConfig) -> Self {
        Self {
            seed: c.seed,
            noise_seed: c.noise_seed,
            n_objects: c.n_objects,
            classes: c.classes.iter().map(|c| c.0).collect(),
            n_cameras: c.n_cameras,
            duration: c.duration,
            fps: c.fps,
            world_extent: c.world_extent,
            paths: c.paths.iter().map(|p| p.iter().map(|&(x, y)| [x, y]).collect()).collect(),
            speed_min: c.speed_range.0,
            speed_max: c.speed_range.1,
            entry_frames: c.entry_frames.clone(),
            exit_frames: c.exit_frames.clone(),
            image_width: c.image_size.0,
            image_height: c.image_size.1,
            camera_height: c.camera_height,
            pixel_noise_sigma: c.pixel_noise_sigma,
            embed_dim: c.embed_dim,
            embed_noise_sigma: c.embed_noise_sigma,
            miss_rate: c.miss_rate,
            fp_rate: c.fp_rate,
        }
    }
}

impl From<&SceneFile> for SceneConfig {
    fn from(s: &SceneFile) -> Self {
        Self {
            n_objects: s.n_objects,
            classes: s.classes.iter().map(|&c| ClassId(c)).collect(),
            n_cameras: s.n_cameras,
            duration: s.duration,
            fps: s.fps,
            world_extent: s.world_extent,
            paths: s.paths.iter().map(|p| p.iter().map(|&[x, y]| (x, y)).collect()).collect(),
            speed_range: (s.speed_min, s.speed_max),
            entry_frames: s.entry_frames.clone(),
            exit_frames: s.exit_frames.clone(),
            image_size: (s.image_width, s.image_height),
            camera_height: s.camera_height,
            pixel_noise_sigma: s.pixel_noise_sigma,
            embed_dim: s.embed_dim,
            embed_noise_sigma: s.embed_noise_sigma,
            miss_rate: s.miss_rate,
            fp_rate: s.fp_rate,
            seed: s.seed,
            noise_seed: s.noise_seed,
        }
    }
}

fn parse_toml<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| CliError::Config { path: path.to_path_buf(), msg: e.to_string().trim_end().to_string() })
}

/// Reads a pipeline config, or the defaults when `path` is `None`.
pub fn load_pipeline(path: Option<&Path>) -> Result<PipelineConfig> {
    let Some(path) = path else { return Ok(PipelineConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg: PipelineConfig = parse_toml(path, &text)?;
    cfg.validate().map_err(|msg| CliError::Config { path: path.to_path_buf(), msg })?;
    Ok(cfg)
}

/// Reads a scene config, or the defaults when `path` is `None`.
pub fn load_scene(path: Option<&Path>) -> Result<SceneFile> {
    let Some(path) = path else { return Ok(SceneFile::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let scene: SceneFile = parse_toml(path, &text)?;
    SceneConfig::from(&scene)
        .validate()
        .map_err(|e| CliError::Config { path: path.to_path_buf(), msg: e.to_string() })?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_means_defaults() {
        let cfg: PipelineConfig = parse_toml(Path::new("x.toml"), "").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.params(), PipelineParams::default());
        assert_eq!(cfg.eval_config(), EvalConfig::default());
        let scene: SceneFile = parse_toml(Path::new("s.toml"), "").unwrap();
        assert_eq!(SceneConfig::from(&scene), SceneConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_toml::<PipelineConfig>(Path::new("x.toml"), "tau_trj = 2.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x.toml") && msg.contains("tau_trj"), "{msg}");
    }

    #[test]
    fn values_are_read() {
        let cfg: PipelineConfig = parse_toml(
            Path::new("x.toml"),
            "strategy = \"FM\"\nfusion = \"median\"\nsnms_mode = \"suppress\"\nwindow = 50\nz_offsets = [[0, 0.0]]\n",
        )
        .unwrap();
        assert_eq!(cfg.strategy, StrategyName::Fm);
        let p = cfg.params();
        assert_eq!(p.assoc.window, 50);
        assert_eq!(p.assoc.fusion, Fusion::Median);
        assert_eq!(p.refine.snms_mode, SnmsMode::Suppress);
        assert_eq!(p.z_offset(ClassId(0)), 0.0);
    }

    #[test]
    fn ranges_are_checked() {
        let cfg = PipelineConfig { det_min_conf: 1.5, ..PipelineConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig { alphas: vec![], ..PipelineConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }

    #[test]
    fn scene_round_trips_through_toml() {
        let scene = SceneFile { paths: vec![vec![[1.0, 2.0], [3.0, -4.5]]], noise_seed: Some(9), ..SceneFile::default() };
        let text = toml::to_string(&scene).unwrap();
        let back: SceneFile = parse_toml(Path::new("s.toml"), &text).unwrap();
        assert_eq!(back, scene);
    }
}

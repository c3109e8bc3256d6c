//! The full offline chain: per-camera tracking, refinement, ground-plane
//! lifting and cross-camera association.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::assoc::{associate, check_invariants, AssocConfig, Association, LocalTrack, Strategy};
use crate::error::{input_err, Error, Result};
use crate::eval::EvalPoint;
use crate::geometry::{build_trajectory, CameraCalibration, WorldTrajectory};
use crate::model::{BBox, CameraId, ClassId, Detection, GlobalId, Tracklet, WorldPoint};
use crate::refine::{refine_camera, RefineConfig};
use crate::sct::{track_camera, SctConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    pub sct: SctConfig,
    pub refine: RefineConfig,
    pub assoc: AssocConfig,
    /// Fraction of the image an anchor may lie outside and still be lifted.
    pub anchor_margin: f64,
    /// Height added to ground points on export, per class. Classes not listed
    /// use half their nominal height.
    pub z_offsets: BTreeMap<ClassId, f64>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            sct: SctConfig::default(),
            refine: RefineConfig::default(),
            assoc: AssocConfig::default(),
            anchor_margin: 0.05,
            z_offsets: BTreeMap::new(),
        }
    }
}

impl PipelineParams {
    pub fn z_offset(&self, class: ClassId) -> f64 {
        self.z_offsets
            .get(&class)
            .copied()
            .or_else(|| class.nominal_dimensions().map(|d| d.height / 2.0))
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// Refined tracklets of every camera, by camera then local id.
    pub tracklets: Vec<Tracklet>,
    pub locals: Vec<LocalTrack>,
    pub association: Association,
}

/// One exported row: a member box of a global at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub frame: u32,
    pub global_id: GlobalId,
    pub camera_id: CameraId,
    pub bbox: BBox,
    /// Fused world position of the global (with the class z offset).
    pub world: Option<WorldPoint>,
    pub class_id: ClassId,
}

pub fn run(
    detections: &[Detection],
    calibrations: &[CameraCalibration],
    params: &PipelineParams,
    strategy: Strategy,
) -> Result<PipelineOutput> {
    let mut cals: BTreeMap<CameraId, &CameraCalibration> = BTreeMap::new();
    for c in calibrations {
        if cals.insert(c.camera_id, c).is_some() {
            return Err(input_err!("camera {} calibrated twice", c.camera_id));
        }
    }
    let mut by_camera: BTreeMap<CameraId, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_camera.entry(d.camera_id).or_default().push(d.clone());
    }
    let mut tracklets = Vec::new();
    let mut locals = Vec::new();
    for (cam, mut dets) in by_camera {
        let cal = cals.get(&cam).ok_or_else(|| input_err!("no calibration for camera {cam}"))?;
        dets.sort_by_key(|d| d.frame);
        let refined = refine_camera(track_camera(&dets, &params.sct)?, &params.refine)?;
        for t in refined {
            let traj = match build_trajectory(&t, cal, params.anchor_margin) {
                Ok(traj) => traj,
                // nothing liftable: the tracklet still needs an identity
                Err(Error::Projection(_)) => WorldTrajectory::default(),
                Err(e) => return Err(e),
            };
            locals.push(LocalTrack::new(&t, traj));
            tracklets.push(t);
        }
    }
    let association = associate(&locals, &params.assoc, strategy)?;
    check_invariants(&association.globals, &locals)?;
    Ok(PipelineOutput { tracklets, locals, association })
}

impl PipelineOutput {
    /// Fused global positions for evaluation, one per global and frame.
    pub fn predictions(&self, params: &PipelineParams) -> Vec<EvalPoint> {
        let mut out: Vec<EvalPoint> = self
            .association
            .globals
            .iter()
            .flat_map(|g| {
                let dz = params.z_offset(g.class_id);
                g.trajectory.iter().map(move |(&frame, p)| EvalPoint {
                    frame,
                    id: g.global_id.0,
                    point: WorldPoint::new(p.x, p.y, p.z + dz),
                })
            })
            .collect();
        out.sort_by_key(|p| (p.frame, p.id));
        out
    }

    /// Every member observation labelled with its global, sorted by frame,
    /// global id and camera.
    pub fn track_rows(&self, params: &PipelineParams) -> Vec<TrackRow> {
        let by_key: BTreeMap<_, &Tracklet> = self.tracklets.iter().map(|t| (t.key(), t)).collect();
        let mut rows = Vec::new();
        for g in &self.association.globals {
            let dz = params.z_offset(g.class_id);
            for key in &g.members {
                let t = by_key[key];
                for (&frame, o) in &t.obs {
                    rows.push(TrackRow {
                        frame,
                        global_id: g.global_id,
                        camera_id: key.camera_id,
                        bbox: o.bbox,
                        world: g.trajectory.get(&frame).map(|p| WorldPoint::new(p.x, p.y, p.z + dz)),
                        class_id: g.class_id,
                    });
                }
            }
        }
        rows.sort_by_key(|r| (r.frame, r.global_id, r.camera_id));
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{compute_hota, EvalConfig};
    use crate::synth::{generate_scene, SceneConfig};

    #[test]
    fn noise_free_scene_is_recovered() {
        let scene = generate_scene(&SceneConfig::default().noise_free()).unwrap();
        let params = PipelineParams::default();
        let out = run(&scene.detections, &scene.calibrations, &params, Strategy::Gide).unwrap();
        assert_eq!(out.association.globals.len(), 3);
        let gt: Vec<EvalPoint> = scene.gt.iter().map(EvalPoint::from).collect();
        let r = compute_hota(&gt, &out.predictions(&params), &EvalConfig::default()).unwrap();
        assert!((r.hota - 1.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn missing_calibration_is_an_input_error() {
        let scene = generate_scene(&SceneConfig { duration: 20, ..SceneConfig::default() }.noise_free()).unwrap();
        let err = run(&scene.detections, &scene.calibrations[1..], &PipelineParams::default(), Strategy::Fm);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn empty_input() {
        let out = run(&[], &[], &PipelineParams::default(), Strategy::Fm).unwrap();
        assert!(out.association.globals.is_empty() && out.track_rows(&PipelineParams::default()).is_empty());
    }

    #[test]
    fn z_offsets() {
        let mut p = PipelineParams::default();
        assert_eq!(p.z_offset(ClassId(0)), 0.9);
        p.z_offsets.insert(ClassId(0), 0.0);
        assert_eq!(p.z_offset(ClassId(0)), 0.0);
        assert_eq!(p.z_offset(ClassId(42)), 0.0);
    }
}

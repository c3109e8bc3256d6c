//! Deterministic synthetic multi-camera scenes.
//!
//! Objects move on the ground plane of a square world centered at the origin.
//! Cameras sit on a ring around the square, look at its center, and get the
//! largest focal length that keeps the whole square (up to the tallest
//! object) inside the image. Detections are rendered boxes with optional
//! pixel noise, random misses and clutter; embeddings are noisy copies of one
//! anchor vector per object.
//!
//! The scene layout (object paths, classes, anchors) draws from `seed`; all
//! measurement noise draws from `noise_seed`, one ChaCha stream per camera.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::CameraCalibration;
use crate::model::{BBox, CameraId, ClassId, Detection, Embedding, GroundTruthRecord, ObjectId, WorldPoint};

/// Fraction of the half-image a fitted scene may use on each side.
const FIT_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n_objects: usize,
    /// Per-object class, cycled when shorter than `n_objects`; empty means
    /// every object is a person.
    pub classes: Vec<ClassId>,
    pub n_cameras: usize,
    pub duration: u32,
    pub fps: f64,
    /// Side length of the square world, meters.
    pub world_extent: f64,
    /// Per-object waypoint paths; objects without one orbit inside their own
    /// grid cell.
    pub paths: Vec<Vec<(f64, f64)>>,
    /// Walking speed range, meters per second.
    pub speed_range: (f64, f64),
    /// Per-object first visible frame, 0 when missing.
    pub entry_frames: Vec<u32>,
    /// Per-object frame at which the object leaves the scene; missing or
    /// beyond the duration means it stays.
    pub exit_frames: Vec<u32>,
    pub image_size: (u32, u32),
    pub camera_height: f64,
    pub pixel_noise_sigma: f64,
    pub embed_dim: usize,
    pub embed_noise_sigma: f64,
    pub miss_rate: f64,
    /// Probability of one clutter detection per camera and frame.
    pub fp_rate: f64,
    pub seed: u64,
    /// Seed for measurement noise; `seed` when unset.
    pub noise_seed: Option<u64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_objects: 3,
            classes: Vec::new(),
            n_cameras: 3,
            duration: 300,
            fps: 30.0,
            world_extent: 20.0,
            paths: Vec::new(),
            speed_range: (0.5, 1.5),
            entry_frames: Vec::new(),
            exit_frames: Vec::new(),
            image_size: (1920, 1080),
            camera_height: 8.0,
            pixel_noise_sigma: 1.0,
            embed_dim: 64,
            embed_noise_sigma: 0.05,
            miss_rate: 0.05,
            fp_rate: 0.1,
            seed: 42,
            noise_seed: None,
        }
    }
}

impl SceneConfig {
    /// Same scene with every noise source switched off.
    pub fn noise_free(mut self) -> Self {
        self.pixel_noise_sigma = 0.0;
        self.embed_noise_sigma = 0.0;
        self.miss_rate = 0.0;
        self.fp_rate = 0.0;
        self
    }

    pub fn class_of(&self, object: usize) -> ClassId {
        if self.classes.is_empty() {
            ClassId(0)
        } else {
            self.classes[object % self.classes.len()]
        }
    }

    pub fn entry_of(&self, object: usize) -> u32 {
        self.entry_frames.get(object).copied().unwrap_or(0)
    }

    pub fn exit_of(&self, object: usize) -> u32 {
        self.exit_frames.get(object).copied().unwrap_or(self.duration).min(self.duration)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: alloc::string::String| Err(Error::Config(m));
        if self.n_cameras == 0 {
            return cfg_err("a scene needs at least one camera".into());
        }
        if self.duration == 0 {
            return cfg_err("duration must be at least one frame".into());
        }
        for (name, v) in [("miss_rate", self.miss_rate), ("fp_rate", self.fp_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return cfg_err(alloc::format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("pixel_noise_sigma", self.pixel_noise_sigma),
            ("embed_noise_sigma", self.embed_noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return cfg_err(alloc::format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("fps", self.fps), ("world_extent", self.world_extent), ("camera_height", self.camera_height)] {
            if !(v.is_finite() && v > 0.0) {
                return cfg_err(alloc::format!("{name} must be positive, got {v}"));
            }
        }
        let (lo, hi) = self.speed_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return cfg_err(alloc::format!("invalid speed range ({lo}, {hi})"));
        }
        if self.embed_dim == 0 {
            return cfg_err("embed_dim must be positive".into());
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return cfg_err("image size must be positive".into());
        }
        if let Some(c) = self.classes.iter().find(|c| c.nominal_dimensions().is_none()) {
            return cfg_err(alloc::format!("unknown class {c}"));
        }
        for i in 0..self.n_objects {
            if self.entry_of(i) >= self.duration {
                return cfg_err(alloc::format!("object {} enters at frame {} >= duration {}", i + 1, self.entry_of(i), self.duration));
            }
            if self.exit_of(i) <= self.entry_of(i) {
                return cfg_err(alloc::format!("object {} leaves before it enters", i + 1));
            }
            if self.class_of(i).nominal_dimensions().unwrap().height >= self.camera_height {
                return cfg_err(alloc::format!("object {} is taller than the cameras", i + 1));
            }
        }
        let half = self.world_extent / 2.0;
        for (i, path) in self.paths.iter().enumerate() {
            if path.iter().any(|&(x, y)| !(x.abs() <= half && y.abs() <= half)) {
                return cfg_err(alloc::format!("path of object {} leaves the world square", i + 1));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Motion {
    Orbit { center: (f64, f64), radius: f64, phase: f64, omega: f64 },
    Path { points: Vec<(f64, f64)>, speed: f64 },
}

impl Motion {
    /// Position and heading at time `t` seconds.
    fn at(&self, t: f64) -> (f64, f64, f64) {
        match self {
            Motion::Orbit { center, radius, phase, omega } => {
                let th = phase + omega * t;
                let heading = th + omega.signum() * PI / 2.0;
                (center.0 + radius * libm::cos(th), center.1 + radius * libm::sin(th), heading)
            }
            Motion::Path { points, speed } => {
                let mut left = speed * t;
                let mut heading = 0.0;
                for w in points.windows(2) {
                    let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                    let len = libm::hypot(dx, dy);
                    if len == 0.0 {
                        continue;
                    }
                    heading = libm::atan2(dy, dx);
                    if left <= len {
                        let s = left / len;
                        return (w[0].0 + dx * s, w[0].1 + dy * s, heading);
                    }
                    left -= len;
                }
                let last = points[points.len() - 1];
                (last.0, last.1, heading)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gt: Vec<GroundTruthRecord>,
    pub calibrations: Vec<CameraCalibration>,
    /// Sorted by camera, then frame.
    pub detections: Vec<Detection>,
    /// Source object of each detection; `None` for clutter.
    pub truth: Vec<Option<ObjectId>>,
}

impl Scene {
    pub fn camera_detections(&self, camera: CameraId) -> Vec<Detection> {
        self.detections.iter().filter(|d| d.camera_id == camera).cloned().collect()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One unit anchor per identity; mutually orthogonal whenever `n <= dim`.
pub fn identity_anchors(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        loop {
            let mut v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
            if i < dim {
                for a in &out[..i] {
                    let d: f64 = v.iter().zip(a).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(a).for_each(|(x, y)| *x -= d * y);
                }
            }
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                out.push(v);
                break;
            }
        }
    }
    out
}

fn plan_motion(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Vec<Motion> {
    let side = (1..).find(|s| s * s >= cfg.n_objects.max(1)).unwrap();
    let cell = cfg.world_extent / side as f64;
    let half = cfg.world_extent / 2.0;
    (0..cfg.n_objects)
        .map(|i| {
            // draw orbit parameters for every object to keep streams aligned
            let radius = rng.random_range(0.15..0.3) * cell;
            let phase = rng.random_range(0.0..TAU);
            let speed = rng.random_range(cfg.speed_range.0..=cfg.speed_range.1);
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            match cfg.paths.get(i).filter(|p| !p.is_empty()) {
                Some(points) => Motion::Path { points: points.clone(), speed },
                None => {
                    let (row, col) = (i / side, i % side);
                    let center = (-half + (col as f64 + 0.5) * cell, -half + (row as f64 + 0.5) * cell);
                    Motion::Orbit { center, radius, phase, omega: dir * speed / radius }
                }
            }
        })
        .collect()
}

struct Rig {
    cal: CameraCalibration,
    focal: f64,
}

fn place_cameras(cfg: &SceneConfig) -> Result<Vec<Rig>> {
    let half = cfg.world_extent / 2.0;
    let top = (0..cfg.n_objects.max(1))
        .map(|i| cfg.class_of(i).nominal_dimensions().unwrap().height)
        .fold(0.0f64, f64::max);
    let mut probe = Vec::new();
    for &x in &[-half, half] {
        for &y in &[-half, half] {
            probe.push(WorldPoint::new(x, y, 0.0));
            probe.push(WorldPoint::new(x, y, top));
        }
    }
    let target = WorldPoint::new(0.0, 0.0, 0.0);
    let ring = cfg.world_extent;
    let (w, h) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    (0..cfg.n_cameras)
        .map(|k| {
            let id = CameraId(k as u32 + 1);
            let ang = PI / 4.0 + TAU * k as f64 / cfg.n_cameras as f64;
            let eye = WorldPoint::new(ring * libm::cos(ang), ring * libm::sin(ang), cfg.camera_height);
            // pixel offsets from the principal point scale linearly with focal
            let nominal = w;
            let probe_cam = CameraCalibration::look_at(id, eye, target, nominal, cfg.image_size)?;
            let mut focal = f64::INFINITY;
            for p in &probe {
                let Some((u, v)) = probe_cam.project(p) else {
                    return Err(Error::Config(alloc::format!("camera {id} cannot see the whole scene")));
                };
                let (nx, ny) = ((u - w / 2.0).abs() / nominal, (v - h / 2.0).abs() / nominal);
                if nx > 0.0 {
                    focal = focal.min(FIT_FRACTION * w / 2.0 / nx);
                }
                if ny > 0.0 {
                    focal = focal.min(FIT_FRACTION * h / 2.0 / ny);
                }
            }
            if !(focal.is_finite() && focal >= 1.0) {
                return Err(Error::Config(alloc::format!("camera {id}: no focal length covers the scene")));
            }
            let cal = CameraCalibration::look_at(id, eye, target, focal, cfg.image_size)?;
            Ok(Rig { cal, focal })
        })
        .collect()
}

fn depth(cal: &CameraCalibration, p: &WorldPoint) -> f64 {
    let r = cal.projection.row(2);
    r[0] * p.x + r[1] * p.y + r[2] * p.z + r[3]
}

/// Generates a scene; identical configs give identical scenes.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut layout = ChaCha8Rng::seed_from_u64(cfg.seed);
    let motions = plan_motion(cfg, &mut layout);
    let anchors = identity_anchors(cfg.n_objects, cfg.embed_dim, &mut layout);
    let rigs = place_cameras(cfg)?;

    // world states: states[f][i] = Some((x, y, heading)) while object i is present
    let states: Vec<Vec<Option<(f64, f64, f64)>>> = (0..cfg.duration)
        .map(|f| {
            motions
                .iter()
                .enumerate()
                .map(|(i, m)| (f >= cfg.entry_of(i) && f < cfg.exit_of(i)).then(|| m.at(f as f64 / cfg.fps)))
                .collect()
        })
        .collect();

    let mut gt = Vec::new();
    for (f, row) in states.iter().enumerate() {
        for (i, s) in row.iter().enumerate() {
            if let Some((x, y, heading)) = *s {
                let class_id = cfg.class_of(i);
                let dims = class_id.nominal_dimensions().unwrap();
                gt.push(GroundTruthRecord {
                    frame: f as u32,
                    object_id: ObjectId(i as u32 + 1),
                    class_id,
                    centroid: WorldPoint::new(x, y, dims.height / 2.0),
                    dimensions: dims,
                    yaw: crate::model::wrap_angle(heading),
                });
            }
        }
    }

    let mut detections = Vec::new();
    let mut truth = Vec::new();
    let noise_seed = cfg.noise_seed.unwrap_or(cfg.seed);
    let (w_img, h_img) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    let clutter_classes: Vec<ClassId> = if cfg.n_objects == 0 { vec![ClassId(0)] } else { (0..cfg.n_objects).map(|i| cfg.class_of(i)).collect() };
    for rig in &rigs {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        rng.set_stream(rig.cal.camera_id.0 as u64);
        let px = |rng: &mut ChaCha8Rng| if cfg.pixel_noise_sigma > 0.0 { cfg.pixel_noise_sigma * normal(rng) } else { 0.0 };
        for (f, row) in states.iter().enumerate() {
            for (i, s) in row.iter().enumerate() {
                let Some((x, y, _)) = *s else { continue };
                if cfg.miss_rate > 0.0 && rng.random_bool(cfg.miss_rate) {
                    continue;
                }
                let class_id = cfg.class_of(i);
                let dims = class_id.nominal_dimensions().unwrap();
                let ground = WorldPoint::new(x, y, 0.0);
                let (Some((ub, vb)), Some((_, vt))) =
                    (rig.cal.project(&ground), rig.cal.project(&WorldPoint::new(x, y, dims.height)))
                else {
                    return Err(Error::Internal(alloc::format!("object {} behind camera {}", i + 1, rig.cal.camera_id)));
                };
                let bw = rig.focal * dims.width / depth(&rig.cal, &ground);
                let bh = vb - vt;
                let (nx, ny, nw, nh) = (px(&mut rng), px(&mut rng), px(&mut rng), px(&mut rng));
                let bbox = BBox::new(ub - bw / 2.0 + nx, vb - bh + ny, (bw + nw).max(1.0), (bh + nh).max(1.0))?;
                let emb: Vec<f64> = if cfg.embed_noise_sigma > 0.0 {
                    anchors[i].iter().map(|a| a + cfg.embed_noise_sigma * normal(&mut rng)).collect()
                } else {
                    anchors[i].clone()
                };
                let confidence = rng.random_range(0.6..1.0);
                detections.push(Detection {
                    camera_id: rig.cal.camera_id,
                    frame: f as u32,
                    bbox,
                    class_id,
                    confidence,
                    embedding: Embedding::from_f64(&emb)?,
                });
                truth.push(Some(ObjectId(i as u32 + 1)));
            }
            if cfg.fp_rate > 0.0 && rng.random_bool(cfg.fp_rate) {
                let bw = rng.random_range(20.0..150.0f64).min(w_img / 2.0);
                let bh = rng.random_range(40.0..300.0f64).min(h_img / 2.0);
                let bbox = BBox::new(rng.random_range(0.0..w_img - bw), rng.random_range(0.0..h_img - bh), bw, bh)?;
                let class_id = clutter_classes[rng.random_range(0..clutter_classes.len())];
                let emb: Vec<f64> = (0..cfg.embed_dim).map(|_| normal(&mut rng)).collect();
                detections.push(Detection {
                    camera_id: rig.cal.camera_id,
                    frame: f as u32,
                    bbox,
                    class_id,
                    confidence: rng.random_range(0.3..0.6),
                    embedding: Embedding::from_f64(&emb)?,
                });
                truth.push(None);
            }
        }
    }
    Ok(Scene { gt, calibrations: rigs.into_iter().map(|r| r.cal).collect(), detections, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ground_point;

    #[test]
    fn noise_free_detections_back_project_to_ground_truth() {
        let cfg = SceneConfig { n_objects: 1, n_cameras: 2, duration: 120, ..SceneConfig::default() }.noise_free();
        let scene = generate_scene(&cfg).unwrap();
        assert_eq!(scene.detections.len(), 2 * 120);
        for cal in &scene.calibrations {
            let dets = scene.camera_detections(cal.camera_id);
            assert_eq!(dets.len(), 120);
            for (d, g) in dets.iter().zip(&scene.gt) {
                assert_eq!(d.frame, g.frame);
                let p = ground_point(&d.bbox, cal, 0.0).unwrap();
                assert!(libm::hypot(p.x - g.centroid.x, p.y - g.centroid.y) < 1e-6);
            }
        }
    }

    #[test]
    fn every_camera_sees_the_whole_square() {
        let cfg = SceneConfig { n_cameras: 5, ..SceneConfig::default() };
        let scene = generate_scene(&cfg).unwrap();
        let half = cfg.world_extent / 2.0;
        for cal in &scene.calibrations {
            for (x, y) in [(-half, -half), (half, -half), (-half, half), (half, half), (0.0, 0.0)] {
                let (u, v) = cal.project(&WorldPoint::new(x, y, 0.0)).unwrap();
                assert!(cal.in_bounds(u, v, 0.0), "camera {} misses ({x}, {y})", cal.camera_id);
            }
        }
    }

    #[test]
    fn miss_rate_is_binomial() {
        let cfg = SceneConfig { n_objects: 1, n_cameras: 1, duration: 1000, miss_rate: 0.5, fp_rate: 0.0, ..SceneConfig::default() };
        let n = generate_scene(&cfg).unwrap().detections.len();
        assert!((420..=580).contains(&n), "{n}");
    }

    #[test]
    fn anchors_are_near_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = identity_anchors(2, 64, &mut rng);
        let dot: f64 = a[0].iter().zip(&a[1]).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 0.2);
        // more identities than dimensions still yields unit vectors
        let many = identity_anchors(10, 4, &mut rng);
        assert!(many.iter().all(|v| (v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn embeddings_separate_identities() {
        let scene = generate_scene(&SceneConfig { n_objects: 4, duration: 60, ..SceneConfig::default() }).unwrap();
        let labelled: Vec<(&Embedding, ObjectId)> = scene
            .detections
            .iter()
            .zip(&scene.truth)
            .filter_map(|(d, t)| t.map(|t| (&d.embedding, t)))
            .step_by(7)
            .collect();
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for (i, (a, ta)) in labelled.iter().enumerate() {
            for (b, tb) in &labelled[i + 1..] {
                if ta == tb {
                    intra += a.dot(b);
                    ni += 1;
                } else {
                    inter += a.dot(b);
                    nx += 1;
                }
            }
        }
        assert!(intra / ni as f64 - inter / nx as f64 > 0.5);
    }

    #[test]
    fn deterministic_and_seed_split() {
        let cfg = SceneConfig { duration: 50, ..SceneConfig::default() };
        let a = generate_scene(&cfg).unwrap();
        assert_eq!(a, generate_scene(&cfg).unwrap());
        let b = generate_scene(&SceneConfig { noise_seed: Some(7), ..cfg.clone() }).unwrap();
        assert_eq!(a.gt, b.gt);
        assert_eq!(a.calibrations, b.calibrations);
        assert_ne!(a.detections, b.detections);
        let c = generate_scene(&SceneConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.gt, c.gt);
    }

    #[test]
    fn late_entries_and_paths() {
        let cfg = SceneConfig {
            n_objects: 2,
            entry_frames: vec![0, 40],
            exit_frames: vec![50],
            paths: vec![vec![(-5.0, 0.0), (5.0, 0.0)]],
            speed_range: (1.0, 1.0),
            duration: 60,
            ..SceneConfig::default()
        }
        .noise_free();
        let scene = generate_scene(&cfg).unwrap();
        assert!(scene.gt.iter().filter(|g| g.object_id == ObjectId(2)).all(|g| g.frame >= 40));
        assert_eq!(scene.gt.iter().filter(|g| g.object_id == ObjectId(1)).count(), 50);
        let g30 = scene.gt.iter().find(|g| g.object_id == ObjectId(1) && g.frame == 30).unwrap();
        assert!((g30.centroid.x - (-4.0)).abs() < 1e-12);
        assert_eq!(g30.yaw, 0.0);
        assert!(scene.truth.iter().all(|t| t.is_some()));
    }

    #[test]
    fn empty_scene_is_valid() {
        let scene = generate_scene(&SceneConfig { n_objects: 0, fp_rate: 0.0, ..SceneConfig::default() }).unwrap();
        assert!(scene.gt.is_empty() && scene.detections.is_empty());
        assert_eq!(scene.calibrations.len(), 3);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SceneConfig { n_cameras: 0, ..SceneConfig::default() },
            SceneConfig { duration: 0, ..SceneConfig::default() },
            SceneConfig { miss_rate: 1.5, ..SceneConfig::default() },
            SceneConfig { entry_frames: vec![300], ..SceneConfig::default() },
            SceneConfig { classes: vec![ClassId(99)], ..SceneConfig::default() },
            SceneConfig { entry_frames: vec![10], exit_frames: vec![10], ..SceneConfig::default() },
            SceneConfig { camera_height: 1.0, ..SceneConfig::default() },
            SceneConfig { paths: vec![vec![(50.0, 0.0)]], ..SceneConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(generate_scene(&cfg), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}

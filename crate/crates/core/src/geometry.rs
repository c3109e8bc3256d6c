//! Pinhole calibration, ground-plane back-projection and world trajectories.
//!
//! A camera is a 3x4 projection `P = K [R | t]` taking homogeneous world
//! points to homogeneous pixels. Restricted to the plane `z = 0` it reduces to
//! the homography `H = [p1 p2 p4]`, whose inverse lifts an image anchor back
//! to the ground. `P` is expected to give positive depth (third homogeneous
//! coordinate) for points in front of the camera.

use alloc::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::model::{BBox, CameraId, Tracklet, WorldPoint};

/// Relative threshold on the homogeneous scale below which a pixel is treated
/// as lying on (or beyond) the horizon.
const HORIZON_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub camera_id: CameraId,
    pub projection: Matrix3x4<f64>,
    pub image_size: (u32, u32),
    ground_from_image: Matrix3<f64>,
}

impl CameraCalibration {
    pub fn new(camera_id: CameraId, projection: Matrix3x4<f64>, image_size: (u32, u32)) -> Result<Self> {
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(alloc::format!("camera {camera_id}: non-finite projection matrix")));
        }
        if image_size.0 == 0 || image_size.1 == 0 {
            return Err(Error::Input(alloc::format!("camera {camera_id}: empty image size")));
        }
        let h = ground_homography(&projection);
        let scale = h.norm();
        let det = h.determinant();
        let inv = (scale > 0.0 && det.abs() > 1e-12 * scale * scale * scale).then(|| h.try_inverse()).flatten();
        let Some(ground_from_image) = inv else {
            return Err(Error::Input(alloc::format!("camera {camera_id}: ground-plane homography is singular")));
        };
        Ok(Self { camera_id, projection, image_size, ground_from_image })
    }

    /// Builds a camera at `eye` looking at `target` with focal length
    /// `focal` (pixels) and the principal point at the image center.
    pub fn look_at(camera_id: CameraId, eye: WorldPoint, target: WorldPoint, focal: f64, image_size: (u32, u32)) -> Result<Self> {
        let eye_v = Vector3::new(eye.x, eye.y, eye.z);
        let forward = (Vector3::new(target.x, target.y, target.z) - eye_v).normalize();
        let right = forward.cross(&Vector3::z());
        if right.norm() < 1e-9 {
            return Err(Error::Input(alloc::format!("camera {camera_id}: optical axis parallel to world up")));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye_v);
        let k = Matrix3::new(
            focal, 0.0, image_size.0 as f64 / 2.0,
            0.0, focal, image_size.1 as f64 / 2.0,
            0.0, 0.0, 1.0,
        );
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        rt.set_column(3, &t);
        Self::new(camera_id, k * rt, image_size)
    }

    pub fn homography(&self) -> Matrix3<f64> {
        ground_homography(&self.projection)
    }

    /// Projects a world point to pixels; `None` if it is not in front of the
    /// camera.
    pub fn project(&self, p: &WorldPoint) -> Option<(f64, f64)> {
        let h = self.projection * Vector4::new(p.x, p.y, p.z, 1.0);
        (h.z > 0.0).then(|| (h.x / h.z, h.y / h.z))
    }

    /// Lifts pixel `(u, v)` onto the plane `z = 0`.
    pub fn back_project(&self, u: f64, v: f64) -> Result<WorldPoint> {
        let g = self.ground_from_image * Vector3::new(u, v, 1.0);
        if g.z.is_nan() || g.z <= HORIZON_EPS * g.norm() {
            return Err(Error::Projection(alloc::format!(
                "camera {}: pixel ({u:.2}, {v:.2}) is at or beyond the horizon",
                self.camera_id
            )));
        }
        Ok(WorldPoint::new(g.x / g.z, g.y / g.z, 0.0))
    }

    /// Whether a pixel lies inside the image grown by `margin` (a fraction of
    /// the image size) on every side.
    pub fn in_bounds(&self, u: f64, v: f64, margin: f64) -> bool {
        let (w, h) = (self.image_size.0 as f64, self.image_size.1 as f64);
        u >= -margin * w && u <= w * (1.0 + margin) && v >= -margin * h && v <= h * (1.0 + margin)
    }
}

fn ground_homography(p: &Matrix3x4<f64>) -> Matrix3<f64> {
    Matrix3::from_columns(&[p.column(0).into_owned(), p.column(1).into_owned(), p.column(3).into_owned()])
}

/// Ground-plane position of a box's bottom-center anchor.
pub fn ground_point(b: &BBox, cal: &CameraCalibration, margin: f64) -> Result<WorldPoint> {
    let (u, v) = b.anchor();
    if !cal.in_bounds(u, v, margin) {
        return Err(Error::Projection(alloc::format!(
            "camera {}: anchor ({u:.2}, {v:.2}) outside image bounds",
            cal.camera_id
        )));
    }
    cal.back_project(u, v)
}

/// Frame-indexed world positions of one tracklet.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorldTrajectory {
    pub points: BTreeMap<u32, WorldPoint>,
}

impl WorldTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Restriction to frames in `[start, end)`.
    pub fn window(&self, start: u32, end: u32) -> WorldTrajectory {
        WorldTrajectory { points: self.points.range(start..end).map(|(f, p)| (*f, *p)).collect() }
    }
}

/// Projects every observation of `t` that can be lifted; unprojectable
/// frames are skipped.
pub fn build_trajectory(t: &Tracklet, cal: &CameraCalibration, margin: f64) -> Result<WorldTrajectory> {
    if cal.camera_id != t.camera_id {
        return Err(Error::Input(alloc::format!(
            "calibration for camera {} applied to tracklet {}",
            cal.camera_id,
            t.key()
        )));
    }
    let points: BTreeMap<u32, WorldPoint> =
        t.obs.iter().filter_map(|(f, o)| ground_point(&o.bbox, cal, margin).ok().map(|p| (*f, p))).collect();
    if points.is_empty() {
        return Err(Error::Projection(alloc::format!("tracklet {} has no projectable observation", t.key())));
    }
    Ok(WorldTrajectory { points })
}

/// Shared frame count and mean Euclidean distance over shared frames;
/// the distance is `+inf` when nothing is shared.
pub fn trajectory_distance(a: &BTreeMap<u32, WorldPoint>, b: &BTreeMap<u32, WorldPoint>) -> (usize, f64) {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut shared = 0usize;
    let mut sum = 0.0;
    for (f, p) in small {
        if let Some(q) = large.get(f) {
            shared += 1;
            sum += p.distance(q);
        }
    }
    if shared == 0 {
        (0, f64::INFINITY)
    } else {
        (shared, sum / shared as f64)
    }
}

//! Domain types shared by every stage, plus the elementary overlap and
//! similarity primitives.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{input_err, Result};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(CameraId);
id_type!(
    /// Tracklet identifier, unique within one camera.
    LocalId
);
id_type!(GlobalId);
id_type!(
    /// Ground-truth object identifier.
    ObjectId
);
id_type!(ClassId);

/// Physical extent of an object, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensions {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

/// The six warehouse classes with their nominal sizes.
pub const CLASS_TABLE: [(&str, Dimensions); 6] = [
    ("Person", Dimensions { length: 0.5, width: 0.6, height: 1.8 }),
    ("Forklift", Dimensions { length: 2.4, width: 1.2, height: 2.2 }),
    ("NovaCarter", Dimensions { length: 0.7, width: 0.5, height: 0.6 }),
    ("Transporter", Dimensions { length: 1.4, width: 0.9, height: 0.4 }),
    ("FourierGR1T2", Dimensions { length: 0.5, width: 0.6, height: 1.65 }),
    ("AgilityDigit", Dimensions { length: 0.5, width: 0.7, height: 1.75 }),
];

impl ClassId {
    pub fn name(self) -> Option<&'static str> {
        CLASS_TABLE.get(self.0 as usize).map(|c| c.0)
    }

    pub fn nominal_dimensions(self) -> Option<Dimensions> {
        CLASS_TABLE.get(self.0 as usize).map(|c| c.1)
    }
}

/// Axis-aligned image box: left, top, width, height in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(input_err!("non-finite box ({x}, {y}, {w}, {h})"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(input_err!("box must have positive size, got w={w} h={h}"));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Bottom-center pixel, the ground contact anchor.
    #[inline]
    pub fn anchor(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection area over the smaller of the two areas.
pub fn overlap_coefficient(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / a.area().min(b.area())).clamp(0.0, 1.0)
}

/// Appearance feature vector, unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Tolerance on the L2 norm under which a vector counts as normalized.
    pub const NORM_TOLERANCE: f64 = 1e-6;

    /// Normalizes `values` to unit length. Vectors that are already unit
    /// within [`Self::NORM_TOLERANCE`] are kept bit-for-bit.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(input_err!("empty embedding"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(input_err!("embedding contains non-finite values"));
        }
        let norm = libm::sqrt(values.iter().map(|&v| v as f64 * v as f64).sum::<f64>());
        if norm <= f64::MIN_POSITIVE {
            return Err(input_err!("embedding has zero norm"));
        }
        if (norm - 1.0).abs() <= Self::NORM_TOLERANCE {
            return Ok(Self(values));
        }
        Ok(Self(values.into_iter().map(|v| (v as f64 / norm) as f32).collect()))
    }

    /// Normalizes a double-precision vector.
    pub fn from_f64(values: &[f64]) -> Result<Self> {
        let norm = libm::sqrt(values.iter().map(|v| v * v).sum::<f64>());
        if !norm.is_finite() || norm <= f64::MIN_POSITIVE {
            return Err(input_err!("embedding has zero or non-finite norm"));
        }
        Self::new(values.iter().map(|v| (v / norm) as f32).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.0
    }

    /// Plain dot product, accumulated in double precision.
    #[inline]
    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(&a, &b)| a as f64 * b as f64).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.dot(self))
    }
}

/// Cosine similarity of two unit embeddings.
pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(input_err!("embedding dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    Ok(a.dot(b).clamp(-1.0, 1.0))
}

/// One observation in one camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub camera_id: CameraId,
    pub frame: u32,
    pub bbox: BBox,
    pub class_id: ClassId,
    pub confidence: f64,
    pub embedding: Embedding,
}

/// A tracklet's entry at one frame. Interpolated entries have no embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub bbox: BBox,
    pub embedding: Option<Embedding>,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackletKey {
    pub camera_id: CameraId,
    pub local_id: LocalId,
}

impl fmt::Display for TrackletKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}/t{}", self.camera_id, self.local_id)
    }
}

/// Per-camera identity: time-indexed observations of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub camera_id: CameraId,
    pub local_id: LocalId,
    pub class_id: ClassId,
    pub obs: BTreeMap<u32, Observation>,
    pub representatives: Vec<Embedding>,
    pub interpolated_frames: BTreeSet<u32>,
}

impl Tracklet {
    pub fn new(camera_id: CameraId, local_id: LocalId, class_id: ClassId) -> Self {
        Self {
            camera_id,
            local_id,
            class_id,
            obs: BTreeMap::new(),
            representatives: Vec::new(),
            interpolated_frames: BTreeSet::new(),
        }
    }

    pub fn key(&self) -> TrackletKey {
        TrackletKey { camera_id: self.camera_id, local_id: self.local_id }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn first_frame(&self) -> Option<u32> {
        self.obs.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.obs.keys().next_back().copied()
    }

    pub fn frames(&self) -> impl Iterator<Item = u32> + '_ {
        self.obs.keys().copied()
    }
}

/// Point in world coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        libm::sqrt(dx * dx + dy * dy + dz * dz)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Cross-camera identity.
///
/// `samples` keeps every member's world point per frame so the fused
/// `trajectory` can be recomputed when members are added; `coverage` records
/// which frames each camera already contributes, for the per-view check.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTrack {
    pub global_id: GlobalId,
    pub class_id: ClassId,
    pub members: BTreeSet<TrackletKey>,
    pub trajectory: BTreeMap<u32, WorldPoint>,
    pub feature_pool: VecDeque<Embedding>,
    pub coverage: BTreeMap<CameraId, BTreeSet<u32>>,
    pub samples: BTreeMap<u32, Vec<WorldPoint>>,
}

impl GlobalTrack {
    pub fn new(global_id: GlobalId, class_id: ClassId) -> Self {
        Self {
            global_id,
            class_id,
            members: BTreeSet::new(),
            trajectory: BTreeMap::new(),
            feature_pool: VecDeque::new(),
            coverage: BTreeMap::new(),
            samples: BTreeMap::new(),
        }
    }

    /// Every frame covered by at least one member.
    pub fn covered_frames(&self) -> BTreeSet<u32> {
        self.coverage.values().flat_map(|f| f.iter().copied()).collect()
    }

    /// True if a member from `camera` already covers any of `frames`.
    pub fn conflicts_with<'a>(&self, camera: CameraId, mut frames: impl Iterator<Item = &'a u32>) -> bool {
        match self.coverage.get(&camera) {
            Some(covered) => frames.any(|f| covered.contains(f)),
            None => false,
        }
    }
}

/// One annotated object at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord {
    pub frame: u32,
    pub object_id: ObjectId,
    pub class_id: ClassId,
    pub centroid: WorldPoint,
    pub dimensions: Dimensions,
    pub yaw: f64,
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use core::f64::consts::PI;
    let mut r = libm::fmod(a + PI, 2.0 * PI);
    if r <= 0.0 {
        r += 2.0 * PI;
    }
    r - PI
}

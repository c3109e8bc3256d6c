//! Per-camera tracklet post-processing: sequential NMS over tracklets,
//! representative appearance selection by density clustering, and selective
//! gap interpolation.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input_err, Result};
use crate::model::{overlap_coefficient, BBox, Embedding, Observation, Tracklet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnmsMode {
    /// Union the observations, keeping the more confident box on shared frames.
    Merge,
    /// Drop the shorter tracklet.
    Suppress,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub theta_oc: f64,
    pub theta_frames: usize,
    pub snms_mode: SnmsMode,
    /// DBSCAN radius in cosine distance.
    pub eps: f64,
    pub min_pts: usize,
    /// Maximum number of representatives per tracklet.
    pub k: usize,
    pub max_gap: u32,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { theta_oc: 0.7, theta_frames: 3, snms_mode: SnmsMode::Merge, eps: 0.3, min_pts: 4, k: 20, max_gap: 30 }
    }
}

/// Number of frames both tracklets observe, and the mean overlap coefficient
/// of their boxes over those frames.
pub fn tracklet_overlap(a: &Tracklet, b: &Tracklet) -> Result<(usize, f64)> {
    if a.camera_id != b.camera_id {
        return Err(input_err!("tracklets from different cameras ({} vs {})", a.camera_id, b.camera_id));
    }
    let (small, large) = if a.obs.len() <= b.obs.len() { (a, b) } else { (b, a) };
    let mut shared = 0usize;
    let mut sum = 0.0;
    for (f, o) in &small.obs {
        if let Some(p) = large.obs.get(f) {
            shared += 1;
            sum += overlap_coefficient(&o.bbox, &p.bbox);
        }
    }
    if shared == 0 {
        return Ok((0, 0.0));
    }
    Ok((shared, sum / shared as f64))
}

fn snms_order(ts: &mut [Tracklet]) {
    ts.sort_by(|a, b| b.len().cmp(&a.len()).then(a.local_id.cmp(&b.local_id)));
}

fn duplicates(a: &Tracklet, b: &Tracklet, theta_oc: f64, theta_frames: usize) -> bool {
    if a.camera_id != b.camera_id || a.class_id != b.class_id {
        return false;
    }
    match tracklet_overlap(a, b) {
        Ok((shared, oc)) => shared > 0 && shared >= theta_frames && oc >= theta_oc,
        Err(_) => false,
    }
}

/// Absorbs `other` into `keep`; on shared frames the higher-confidence
/// observation wins (ties keep `keep`'s).
fn merge_tracklets(keep: &mut Tracklet, other: Tracklet) {
    for (f, o) in other.obs {
        let take = match keep.obs.get(&f) {
            Some(existing) => o.confidence > existing.confidence,
            None => true,
        };
        if take {
            if other.interpolated_frames.contains(&f) {
                keep.interpolated_frames.insert(f);
            } else {
                keep.interpolated_frames.remove(&f);
            }
            keep.obs.insert(f, o);
        }
    }
    keep.representatives.clear();
}

/// Sequential NMS over one camera's tracklets.
///
/// Pairs are visited in descending length order; the first pair exceeding both
/// thresholds is resolved and the scan restarts, until no pair qualifies.
pub fn snms(mut tracklets: Vec<Tracklet>, theta_oc: f64, theta_frames: usize, mode: SnmsMode) -> Vec<Tracklet> {
    loop {
        snms_order(&mut tracklets);
        let mut hit = None;
        'scan: for i in 0..tracklets.len() {
            for j in i + 1..tracklets.len() {
                if duplicates(&tracklets[i], &tracklets[j], theta_oc, theta_frames) {
                    hit = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((i, j)) = hit else { break };
        let removed = tracklets.remove(j);
        if mode == SnmsMode::Merge {
            merge_tracklets(&mut tracklets[i], removed);
        }
    }
    tracklets.sort_by_key(|t| t.local_id);
    tracklets
}

/// DBSCAN over unit embeddings with cosine distance `1 - dot`.
///
/// A point's neighborhood includes itself. Returns one label per point;
/// `None` is noise. Clusters are numbered in discovery order.
pub fn dbscan(points: &[&Embedding], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbors: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| 1.0 - points[i].dot(points[j]) <= eps).collect()).collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![None; n];
    let mut cluster = 0usize;
    for start in 0..n {
        if labels[start].is_some() || !is_core[start] {
            continue;
        }
        labels[start] = Some(cluster);
        let mut stack = vec![start];
        while let Some(p) = stack.pop() {
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(cluster);
                    if is_core[q] {
                        stack.push(q);
                    }
                }
            }
        }
        cluster += 1;
    }
    labels
}

/// Picks up to `k` positions spread evenly over `0..n`.
fn evenly_spaced(n: usize, k: usize) -> Vec<usize> {
    if n <= k {
        return (0..n).collect();
    }
    (0..k).map(|i| (2 * i + 1) * n / (2 * k)).collect()
}

/// Up to `k` embeddings from the tracklet's dominant appearance cluster,
/// spread evenly over time. Interpolated observations are never used.
pub fn select_representatives(t: &Tracklet, eps: f64, min_pts: usize, k: usize) -> Result<Vec<Embedding>> {
    let points: Vec<&Embedding> = t
        .obs
        .iter()
        .filter(|(f, _)| !t.interpolated_frames.contains(f))
        .filter_map(|(_, o)| o.embedding.as_ref())
        .collect();
    if points.is_empty() {
        return Err(input_err!("tracklet {} has no observed embeddings", t.key()));
    }
    let labels = dbscan(&points, eps, min_pts);
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for l in labels.iter().flatten() {
        *sizes.entry(*l).or_default() += 1;
    }
    // largest cluster, earliest label on ties
    let dominant = sizes.iter().fold(None, |best: Option<(usize, usize)>, (&l, &s)| match best {
        Some((_, bs)) if bs >= s => best,
        _ => Some((l, s)),
    });
    let pool: Vec<&Embedding> = match dominant {
        Some((label, _)) => points.iter().zip(&labels).filter(|(_, l)| **l == Some(label)).map(|(p, _)| *p).collect(),
        None => points,
    };
    Ok(evenly_spaced(pool.len(), k).into_iter().map(|i| pool[i].clone()).collect())
}

/// Fills internal gaps shorter than `max_gap` frames with linearly
/// interpolated boxes. Head, tail and longer gaps are left alone.
pub fn interpolate_gaps(t: &Tracklet, max_gap: u32) -> Tracklet {
    let mut out = t.clone();
    let frames: Vec<(u32, &Observation)> = t.obs.iter().map(|(f, o)| (*f, o)).collect();
    for pair in frames.windows(2) {
        let (f1, a) = pair[0];
        let (f2, b) = pair[1];
        let gap = f2 - f1 - 1;
        if gap == 0 || gap >= max_gap {
            continue;
        }
        let span = (f2 - f1) as f64;
        let lerp = |p: f64, q: f64, s: f64| p + (q - p) * s;
        for f in f1 + 1..f2 {
            let s = (f - f1) as f64 / span;
            let bbox = BBox {
                x: lerp(a.bbox.x, b.bbox.x, s),
                y: lerp(a.bbox.y, b.bbox.y, s),
                w: lerp(a.bbox.w, b.bbox.w, s),
                h: lerp(a.bbox.h, b.bbox.h, s),
            };
            out.obs.insert(f, Observation { bbox, embedding: None, confidence: a.confidence.min(b.confidence) });
            out.interpolated_frames.insert(f);
        }
    }
    out
}

/// Full refinement of one camera's tracklets: SNMS, interpolation, then
/// representative selection.
pub fn refine_camera(tracklets: Vec<Tracklet>, cfg: &RefineConfig) -> Result<Vec<Tracklet>> {
    snms(tracklets, cfg.theta_oc, cfg.theta_frames, cfg.snms_mode)
        .into_iter()
        .map(|t| {
            let mut t = interpolate_gaps(&t, cfg.max_gap);
            t.representatives = select_representatives(&t, cfg.eps, cfg.min_pts, cfg.k)?;
            Ok(t)
        })
        .collect()
}

//! Single-camera multi-object tracker: constant-velocity Kalman filter over
//! (center, size) plus a fused IoU/appearance assignment per frame.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};

use crate::assign::min_cost_matching;
use crate::error::{input_err, Error, Result};
use crate::model::{cosine_similarity, iou, BBox, ClassId, Detection, Embedding, LocalId, Observation, Tracklet};

pub type StateVec = SVector<f64, 8>;
pub type StateCov = SMatrix<f64, 8, 8>;
type MeasVec = SVector<f64, 4>;
type MeasCov = SMatrix<f64, 4, 4>;

const MIN_SIZE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

/// Kalman noise model. Standard deviations scale with the box size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
    pub std_weight_measurement: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self { std_weight_position: 1.0 / 20.0, std_weight_velocity: 1.0 / 160.0, std_weight_measurement: 1.0 / 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SctConfig {
    pub det_min_conf: f64,
    pub lambda_app: f64,
    pub iou_gate: f64,
    pub app_gate: f64,
    pub n_init: u32,
    pub max_misses: u32,
    /// Weight kept on the smoothed embedding when a new detection arrives.
    pub embedding_momentum: f64,
    pub kalman: KalmanParams,
}

impl Default for SctConfig {
    fn default() -> Self {
        Self {
            det_min_conf: 0.3,
            lambda_app: 0.3,
            iou_gate: 0.1,
            app_gate: 0.25,
            n_init: 3,
            max_misses: 30,
            embedding_momentum: 0.9,
            kalman: KalmanParams::default(),
        }
    }
}

/// Filter state of one track: mean is (cx, cy, w, h, vcx, vcy, vw, vh).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub local_id: LocalId,
    pub class_id: ClassId,
    pub mean: StateVec,
    pub covariance: StateCov,
    pub last_embedding: Embedding,
    pub age: u32,
    pub misses: u32,
    pub hits: u32,
    pub status: TrackStatus,
}

impl TrackState {
    pub fn initiate(local_id: LocalId, det: &Detection, params: &KalmanParams) -> Self {
        let (cx, cy) = det.bbox.center();
        let (w, h) = (det.bbox.w, det.bbox.h);
        let mean = StateVec::from_column_slice(&[cx, cy, w, h, 0.0, 0.0, 0.0, 0.0]);
        let (p, v) = (params.std_weight_position, params.std_weight_velocity);
        let std = [2.0 * p * w, 2.0 * p * h, 2.0 * p * w, 2.0 * p * h, 10.0 * v * w, 10.0 * v * h, 10.0 * v * w, 10.0 * v * h];
        let covariance = StateCov::from_diagonal(&SVector::from_iterator(std.iter().map(|s| s * s)));
        Self {
            local_id,
            class_id: det.class_id,
            mean,
            covariance,
            last_embedding: det.embedding.clone(),
            age: 0,
            misses: 0,
            hits: 1,
            status: TrackStatus::Tentative,
        }
    }

    /// Box at the current mean, with size clamped positive.
    pub fn bbox(&self) -> BBox {
        let w = self.mean[2].max(MIN_SIZE);
        let h = self.mean[3].max(MIN_SIZE);
        BBox { x: self.mean[0] - w / 2.0, y: self.mean[1] - h / 2.0, w, h }
    }
}

fn transition() -> StateCov {
    let mut f = StateCov::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> SMatrix<f64, 4, 8> {
    let mut h = SMatrix::<f64, 4, 8>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Constant-velocity prediction one frame ahead.
pub fn predict(s: &TrackState, params: &KalmanParams) -> TrackState {
    let f = transition();
    let w = s.mean[2].max(MIN_SIZE);
    let h = s.mean[3].max(MIN_SIZE);
    let (p, v) = (params.std_weight_position, params.std_weight_velocity);
    let std = [p * w, p * h, p * w, p * h, v * w, v * h, v * w, v * h];
    let q = StateCov::from_diagonal(&SVector::from_iterator(std.iter().map(|s| s * s)));
    let mut mean = f * s.mean;
    mean[2] = mean[2].max(MIN_SIZE);
    mean[3] = mean[3].max(MIN_SIZE);
    let covariance = symmetrize(&(f * s.covariance * f.transpose() + q));
    TrackState { mean, covariance, age: s.age + 1, ..s.clone() }
}

/// Kalman correction for a (cx, cy, w, h) measurement with covariance `r`.
///
/// Uses the Joseph form and symmetrizes the result; a singular innovation
/// covariance or a negative posterior variance is an internal error.
pub fn correct(mean: &StateVec, cov: &StateCov, z: &MeasVec, r: &MeasCov) -> Result<(StateVec, StateCov)> {
    let hm = observation();
    let s = symmetrize(&(hm * cov * hm.transpose() + r));
    let chol = s.cholesky().ok_or_else(|| Error::Internal(format!("innovation covariance not positive definite: {s}")))?;
    // K = P H^T S^-1
    let gain = chol.solve(&(hm * cov)).transpose();
    let new_mean = mean + gain * (z - hm * mean);
    let i_kh = StateCov::identity() - gain * hm;
    let new_cov = symmetrize(&(i_kh * cov * i_kh.transpose() + gain * r * gain.transpose()));
    if (0..8).any(|i| new_cov[(i, i)].is_nan() || new_cov[(i, i)] < 0.0) {
        return Err(Error::Internal(format!("posterior covariance lost positive semi-definiteness: {new_cov}")));
    }
    Ok((new_mean, new_cov))
}

/// Measurement noise for a box of size (w, h).
pub fn measurement_noise(w: f64, h: f64, params: &KalmanParams) -> MeasCov {
    let m = params.std_weight_measurement;
    let std = [m * w, m * h, m * w, m * h];
    MeasCov::from_diagonal(&SVector::from_iterator(std.iter().map(|s| s * s)))
}

/// Corrects `s` with detection `d` and blends its embedding into the
/// smoothed appearance.
pub fn update(s: &TrackState, d: &Detection, cfg: &SctConfig) -> Result<TrackState> {
    let (cx, cy) = d.bbox.center();
    let z = MeasVec::new(cx, cy, d.bbox.w, d.bbox.h);
    let r = measurement_noise(s.mean[2].max(MIN_SIZE), s.mean[3].max(MIN_SIZE), &cfg.kalman);
    let (mut mean, covariance) = correct(&s.mean, &s.covariance, &z, &r)?;
    mean[2] = mean[2].max(MIN_SIZE);
    mean[3] = mean[3].max(MIN_SIZE);

    let beta = 1.0 - cfg.embedding_momentum;
    let blended: Vec<f64> = s
        .last_embedding
        .values()
        .iter()
        .zip(d.embedding.values())
        .map(|(&old, &new)| cfg.embedding_momentum * old as f64 + beta * new as f64)
        .collect();
    // opposite vectors can cancel out; keep the fresh one then
    let last_embedding = Embedding::from_f64(&blended).unwrap_or_else(|_| d.embedding.clone());

    let hits = s.hits + 1;
    let status = match s.status {
        TrackStatus::Tentative if hits >= cfg.n_init => TrackStatus::Confirmed,
        TrackStatus::Tentative => TrackStatus::Tentative,
        _ => TrackStatus::Confirmed,
    };
    Ok(TrackState { mean, covariance, last_embedding, misses: 0, hits, status, ..s.clone() })
}

/// Result of one frame's association.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameAssignment {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub lambda_app: f64,
    pub iou_gate: f64,
    pub app_gate: f64,
}

impl From<&SctConfig> for GateParams {
    fn from(c: &SctConfig) -> Self {
        Self { lambda_app: c.lambda_app, iou_gate: c.iou_gate, app_gate: c.app_gate }
    }
}

/// Fused cost of pairing a predicted track with a detection, or `None` when
/// the pair is gated out (class mismatch, or both cues below their gates).
pub fn pair_cost(track: &TrackState, det: &Detection, gate: &GateParams) -> Result<Option<f64>> {
    if track.class_id != det.class_id {
        return Ok(None);
    }
    let overlap = iou(&track.bbox(), &det.bbox);
    let cos = cosine_similarity(&track.last_embedding, &det.embedding)?;
    if overlap < gate.iou_gate && cos < gate.app_gate {
        return Ok(None);
    }
    Ok(Some(1.0 - ((1.0 - gate.lambda_app) * overlap + gate.lambda_app * cos)))
}

/// Matches predicted tracks to one frame's detections.
pub fn associate_frame(tracks: &[TrackState], dets: &[Detection], gate: &GateParams) -> Result<FrameAssignment> {
    let cost = tracks
        .iter()
        .map(|t| dets.iter().map(|d| pair_cost(t, d, gate)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let matches = min_cost_matching(&cost);
    let mut track_used = alloc::vec![false; tracks.len()];
    let mut det_used = alloc::vec![false; dets.len()];
    for &(t, d) in &matches {
        track_used[t] = true;
        det_used[d] = true;
    }
    Ok(FrameAssignment {
        matches,
        unmatched_tracks: (0..tracks.len()).filter(|&i| !track_used[i]).collect(),
        unmatched_detections: (0..dets.len()).filter(|&i| !det_used[i]).collect(),
    })
}

struct ActiveTrack {
    state: TrackState,
    tracklet: Tracklet,
}

/// Runs the tracker over one camera's detections (ascending frame order) and
/// returns every track that reached confirmation, ordered by local id.
pub fn track_camera(dets: &[Detection], cfg: &SctConfig) -> Result<Vec<Tracklet>> {
    let Some(first) = dets.first() else {
        return Ok(Vec::new());
    };
    let camera = first.camera_id;
    let dim = first.embedding.dim();
    for (i, d) in dets.iter().enumerate() {
        if d.camera_id != camera {
            return Err(input_err!("detection {i} belongs to camera {} but stream is camera {camera}", d.camera_id));
        }
        if i > 0 && d.frame < dets[i - 1].frame {
            return Err(input_err!("detections for camera {camera} not in ascending frame order at index {i}"));
        }
        if d.embedding.dim() != dim {
            return Err(input_err!("embedding dimension {} at index {i}, expected {dim}", d.embedding.dim()));
        }
    }
    let gate = GateParams::from(cfg);
    let last = dets[dets.len() - 1].frame;

    let mut next_id = 1u32;
    let mut active: Vec<ActiveTrack> = Vec::new();
    let mut finished: Vec<Tracklet> = Vec::new();
    let mut cursor = 0usize;

    for frame in first.frame..=last {
        let start = cursor;
        while cursor < dets.len() && dets[cursor].frame == frame {
            cursor += 1;
        }
        let frame_dets: Vec<&Detection> =
            dets[start..cursor].iter().filter(|d| d.confidence >= cfg.det_min_conf).collect();

        for t in active.iter_mut() {
            t.state = predict(&t.state, &cfg.kalman);
        }
        let states: Vec<TrackState> = active.iter().map(|t| t.state.clone()).collect();
        let owned: Vec<Detection> = frame_dets.iter().map(|d| (*d).clone()).collect();
        let assignment = associate_frame(&states, &owned, &gate)?;

        for &(ti, di) in &assignment.matches {
            let d = frame_dets[di];
            let t = &mut active[ti];
            t.state = update(&t.state, d, cfg)?;
            t.tracklet.obs.insert(
                frame,
                Observation { bbox: d.bbox, embedding: Some(d.embedding.clone()), confidence: d.confidence },
            );
        }

        let mut keep = alloc::vec![true; active.len()];
        for &ti in &assignment.unmatched_tracks {
            let s = &mut active[ti].state;
            s.misses += 1;
            match s.status {
                TrackStatus::Tentative => keep[ti] = false,
                _ => {
                    s.status = TrackStatus::Lost;
                    if s.misses > cfg.max_misses {
                        keep[ti] = false;
                    }
                }
            }
        }
        let mut survivors = Vec::with_capacity(active.len());
        for (t, k) in active.into_iter().zip(keep) {
            if k {
                survivors.push(t);
            } else if t.state.status != TrackStatus::Tentative {
                finished.push(t.tracklet);
            }
        }
        active = survivors;

        for &di in &assignment.unmatched_detections {
            let d = frame_dets[di];
            let id = LocalId(next_id);
            next_id += 1;
            let mut state = TrackState::initiate(id, d, &cfg.kalman);
            if cfg.n_init <= 1 {
                state.status = TrackStatus::Confirmed;
            }
            let mut tracklet = Tracklet::new(camera, id, d.class_id);
            tracklet.obs.insert(
                frame,
                Observation { bbox: d.bbox, embedding: Some(d.embedding.clone()), confidence: d.confidence },
            );
            active.push(ActiveTrack { state, tracklet });
        }
    }
    finished.extend(active.into_iter().filter(|t| t.state.status != TrackStatus::Tentative).map(|t| t.tracklet));
    finished.sort_by_key(|t| t.local_id);
    Ok(finished)
}

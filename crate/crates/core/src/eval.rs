//! HOTA, DetA, AssA and LocA in world coordinates.
//!
//! Ground truth and predictions are matched per frame by centroid distance,
//! mapped to a similarity `max(0, 1 - d / d_max)`. For each localization
//! threshold `alpha` only pairs with similarity at least `alpha` may match,
//! and the matching maximizes summed similarity.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::assign::max_weight_matching;
use crate::error::{input_err, Error, Result};
use crate::model::{GroundTruthRecord, WorldPoint};

/// One labelled point of a ground-truth or predicted track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub frame: u32,
    pub id: u32,
    pub point: WorldPoint,
}

impl From<&GroundTruthRecord> for EvalPoint {
    fn from(r: &GroundTruthRecord) -> Self {
        Self { frame: r.frame, id: r.object_id.0, point: r.centroid }
    }
}

/// 0.05, 0.10, ..., 0.95.
pub fn default_alphas() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub alphas: Vec<f64>,
    /// Distance in meters at which similarity reaches zero.
    pub d_max: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { alphas: default_alphas(), d_max: 2.0 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_max.is_finite() && self.d_max > 0.0) {
            return Err(Error::Config(alloc::format!("d_max must be positive, got {}", self.d_max)));
        }
        if self.alphas.is_empty() {
            return Err(Error::Config("alpha grid is empty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(Error::Config(alloc::format!("alpha {a} outside (0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaScores {
    pub alpha: f64,
    pub deta: f64,
    pub assa: f64,
    pub hota: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub loca: f64,
    pub per_alpha: Vec<AlphaScores>,
}

pub fn loc_similarity(gt: &WorldPoint, pred: &WorldPoint, d_max: f64) -> f64 {
    (1.0 - gt.distance(pred) / d_max).max(0.0)
}

/// Matched `(gt_id, pred_id, similarity)` pairs plus unmatched ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatch {
    pub tp: Vec<(u32, u32, f64)>,
    pub fp: Vec<u32>,
    pub fn_: Vec<u32>,
}

/// Maximum-similarity matching of one frame's points at threshold `alpha`.
/// Inputs are expected sorted by id so that ties resolve deterministically.
pub fn match_frame(gt: &[(u32, WorldPoint)], pred: &[(u32, WorldPoint)], alpha: f64, d_max: f64) -> FrameMatch {
    let sim: Vec<Vec<Option<f64>>> = gt
        .iter()
        .map(|(_, g)| {
            pred.iter()
                .map(|(_, p)| {
                    let s = loc_similarity(g, p, d_max);
                    (s >= alpha && s > 0.0).then_some(s)
                })
                .collect()
        })
        .collect();
    let pairs = max_weight_matching(&sim);
    let mut gt_used = alloc::vec![false; gt.len()];
    let mut pred_used = alloc::vec![false; pred.len()];
    let mut out = FrameMatch::default();
    for (i, j) in pairs {
        gt_used[i] = true;
        pred_used[j] = true;
        out.tp.push((gt[i].0, pred[j].0, sim[i][j].unwrap_or(0.0)));
    }
    out.fn_ = gt.iter().zip(&gt_used).filter(|(_, u)| !**u).map(|(g, _)| g.0).collect();
    out.fp = pred.iter().zip(&pred_used).filter(|(_, u)| !**u).map(|(p, _)| p.0).collect();
    out
}

type Frames = BTreeMap<u32, (Vec<(u32, WorldPoint)>, Vec<(u32, WorldPoint)>)>;

fn group(gt: &[EvalPoint], pred: &[EvalPoint]) -> Result<Frames> {
    let mut frames: Frames = BTreeMap::new();
    for (side, points) in [(0, gt), (1, pred)] {
        for p in points {
            if !p.point.is_finite() {
                return Err(input_err!("non-finite point for id {} at frame {}", p.id, p.frame));
            }
            let entry = frames.entry(p.frame).or_default();
            let list = if side == 0 { &mut entry.0 } else { &mut entry.1 };
            list.push((p.id, p.point));
        }
    }
    for (f, (g, p)) in frames.iter_mut() {
        for (name, list) in [("ground truth", g), ("prediction", p)] {
            list.sort_by_key(|e| e.0);
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(input_err!("{name} id {} appears twice in frame {f}", w[0].0));
            }
        }
    }
    Ok(frames)
}

fn frame_range(points: &[EvalPoint]) -> Option<(u32, u32)> {
    let min = points.iter().map(|p| p.frame).min()?;
    let max = points.iter().map(|p| p.frame).max()?;
    Some((min, max))
}

fn constant_report(alphas: &[f64], v: f64) -> EvalReport {
    EvalReport {
        hota: v,
        deta: v,
        assa: v,
        loca: v,
        per_alpha: alphas.iter().map(|&alpha| AlphaScores { alpha, deta: v, assa: v, hota: v, tp: 0, fp: 0, fn_: 0 }).collect(),
    }
}

/// Scores predictions against ground truth. Both empty is vacuously
/// perfect; predictions without any ground truth score zero.
pub fn compute_hota(gt: &[EvalPoint], pred: &[EvalPoint], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    match (frame_range(gt), frame_range(pred)) {
        (None, None) => return Ok(constant_report(&cfg.alphas, 1.0)),
        (None, Some(_)) => return Ok(constant_report(&cfg.alphas, 0.0)),
        (Some((g0, g1)), Some((p0, p1))) if g1 < p0 || p1 < g0 => {
            return Err(input_err!("frame ranges do not overlap: ground truth {g0}..={g1}, predictions {p0}..={p1}"));
        }
        _ => {}
    }
    let frames = group(gt, pred)?;
    let mut gt_count: BTreeMap<u32, usize> = BTreeMap::new();
    let mut pred_count: BTreeMap<u32, usize> = BTreeMap::new();
    for (g, p) in frames.values() {
        for (id, _) in g {
            *gt_count.entry(*id).or_default() += 1;
        }
        for (id, _) in p {
            *pred_count.entry(*id).or_default() += 1;
        }
    }

    let mut per_alpha = Vec::with_capacity(cfg.alphas.len());
    let mut loc_sum = 0.0;
    let mut loc_n = 0usize;
    for &alpha in &cfg.alphas {
        let mut pair_matches: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (g, p) in frames.values() {
            let m = match_frame(g, p, alpha, cfg.d_max);
            tp += m.tp.len();
            fp += m.fp.len();
            fn_ += m.fn_.len();
            for (gi, pi, s) in m.tp {
                *pair_matches.entry((gi, pi)).or_default() += 1;
                loc_sum += s;
                loc_n += 1;
            }
        }
        let deta = if tp + fp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fp + fn_) as f64 };
        // every TP of pair (g, p) carries the same A(c), so weight by count
        let assa = if tp == 0 {
            0.0
        } else {
            pair_matches
                .iter()
                .map(|(&(g, p), &m)| {
                    let denom = (gt_count[&g] + pred_count[&p] - m) as f64;
                    m as f64 * (m as f64 / denom)
                })
                .sum::<f64>()
                / tp as f64
        };
        per_alpha.push(AlphaScores { alpha, deta, assa, hota: libm::sqrt(deta * assa), tp, fp, fn_ });
    }
    let n = per_alpha.len() as f64;
    Ok(EvalReport {
        hota: per_alpha.iter().map(|a| a.hota).sum::<f64>() / n,
        deta: per_alpha.iter().map(|a| a.deta).sum::<f64>() / n,
        assa: per_alpha.iter().map(|a| a.assa).sum::<f64>() / n,
        loca: if loc_n == 0 { 0.0 } else { loc_sum / loc_n as f64 },
        per_alpha,
    })
}

//! Cross-camera identity assignment.
//!
//! A short glance window fixes the initial set of global identities: window
//! tracklets from different cameras are linked when both their ground-plane
//! trajectories and their representative appearances agree, and linked
//! groups become global tracks. The remaining tracklets are then attached one
//! at a time, longest first, to globals they overlap in time, growing the
//! globals until a full pass adds nothing. What is still unassigned is handed
//! to a leftover strategy: forced matching to the nearest global, or
//! promotion of the longest leftover to a new identity followed by another
//! round of progressive association.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{input_err, Error, Result};
use crate::geometry::{trajectory_distance, WorldTrajectory};
use crate::model::{ClassId, Embedding, GlobalId, GlobalTrack, Tracklet, TrackletKey, WorldPoint};

/// Number of best pairwise similarities averaged by [`appearance_similarity`].
pub const TOP_M: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Forced matching of leftovers to the closest global.
    Fm,
    /// Global ID expansion: promote the longest leftover and iterate.
    Gide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssocConfig {
    /// Glance window length in frames, starting at frame 0.
    pub window: u32,
    pub tau_traj: f64,
    pub tau_app: f64,
    pub min_shared: usize,
    pub pool_cap: usize,
    pub fusion: Fusion,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self { window: 100, tau_traj: 1.5, tau_app: 0.6, min_shared: 5, pool_cap: 64, fusion: Fusion::Mean }
    }
}

/// A refined tracklet lifted to the ground plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrack {
    pub key: TrackletKey,
    pub class_id: ClassId,
    /// Every frame the tracklet covers, projectable or not.
    pub frames: BTreeSet<u32>,
    pub trajectory: WorldTrajectory,
    pub representatives: Vec<Embedding>,
}

impl LocalTrack {
    pub fn new(t: &Tracklet, trajectory: WorldTrajectory) -> Self {
        Self {
            key: t.key(),
            class_id: t.class_id,
            frames: t.obs.keys().copied().collect(),
            trajectory,
            representatives: t.representatives.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Reason {
    BothPass,
    TrajFail,
    AppFail,
    NoOverlap,
    ViewConflict,
    Forced,
    Expanded,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::BothPass => "both-pass",
            Reason::TrajFail => "traj-fail",
            Reason::AppFail => "app-fail",
            Reason::NoOverlap => "no-overlap",
            Reason::ViewConflict => "view-conflict",
            Reason::Forced => "forced",
            Reason::Expanded => "expanded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Glance,
    Progressive,
    Forced,
    Expansion,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Glance => "glance",
            Stage::Progressive => "progressive",
            Stage::Forced => "forced",
            Stage::Expansion => "expansion",
        }
    }
}

/// One scored local-to-global (or, during the glance, local-to-local) test.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchDecision {
    pub stage: Stage,
    pub local: TrackletKey,
    /// Glance pairs record the other tracklet here.
    pub peer: Option<TrackletKey>,
    pub global_id: Option<GlobalId>,
    pub traj_shared: usize,
    pub traj_dist: f64,
    pub app_sim: f64,
    pub accepted: bool,
    pub reason: Reason,
}

fn top_mean(a: &[&Embedding], b: &[&Embedding]) -> f64 {
    let mut sims: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| x.dot(y))).collect();
    sims.sort_by(|p, q| q.total_cmp(p));
    let m = TOP_M.min(sims.len());
    sims[..m].iter().sum::<f64>() / m as f64
}

/// Mean of the `min(5, |A||B|)` largest pairwise cosine similarities.
pub fn appearance_similarity(a: &[Embedding], b: &[Embedding]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(input_err!("appearance similarity needs non-empty representative sets"));
    }
    if let Some(e) = a.iter().chain(b).find(|e| e.dim() != a[0].dim()) {
        return Err(input_err!("embedding dimension mismatch: {} vs {}", e.dim(), a[0].dim()));
    }
    let ra: Vec<&Embedding> = a.iter().collect();
    let rb: Vec<&Embedding> = b.iter().collect();
    Ok(top_mean(&ra, &rb))
}

// Missing representatives compare as maximally dissimilar.
fn app_or_floor(a: &[&Embedding], b: &[&Embedding]) -> f64 {
    if a.is_empty() || b.is_empty() {
        -1.0
    } else {
        top_mean(a, b)
    }
}

fn fuse(points: &[WorldPoint], fusion: Fusion) -> WorldPoint {
    match fusion {
        Fusion::Mean => {
            let n = points.len() as f64;
            let (x, y, z) = points.iter().fold((0.0, 0.0, 0.0), |(x, y, z), p| (x + p.x, y + p.y, z + p.z));
            WorldPoint::new(x / n, y / n, z / n)
        }
        Fusion::Median => {
            let med = |mut v: Vec<f64>| {
                v.sort_by(f64::total_cmp);
                let n = v.len();
                if n % 2 == 1 {
                    v[n / 2]
                } else {
                    (v[n / 2 - 1] + v[n / 2]) / 2.0
                }
            };
            WorldPoint::new(
                med(points.iter().map(|p| p.x).collect()),
                med(points.iter().map(|p| p.y).collect()),
                med(points.iter().map(|p| p.z).collect()),
            )
        }
    }
}

/// Attaches `l` to `g`: extends the fused trajectory, records camera
/// coverage and appends representatives, evicting the oldest beyond
/// `cfg.pool_cap`.
pub fn merge_into_global(g: &mut GlobalTrack, l: &LocalTrack, cfg: &AssocConfig) -> Result<()> {
    if g.class_id != l.class_id {
        return Err(Error::Constraint(format!(
            "class {} tracklet {} cannot join class {} global {}",
            l.class_id, l.key, g.class_id, g.global_id
        )));
    }
    if g.conflicts_with(l.key.camera_id, l.frames.iter()) {
        return Err(Error::Constraint(format!(
            "global {} already has a camera {} member on frames of {}",
            g.global_id, l.key.camera_id, l.key
        )));
    }
    g.members.insert(l.key);
    g.coverage.entry(l.key.camera_id).or_default().extend(l.frames.iter().copied());
    for (f, p) in &l.trajectory.points {
        let samples = g.samples.entry(*f).or_default();
        samples.push(*p);
        g.trajectory.insert(*f, fuse(samples, cfg.fusion));
    }
    g.feature_pool.extend(l.representatives.iter().cloned());
    while g.feature_pool.len() > cfg.pool_cap {
        g.feature_pool.pop_front();
    }
    Ok(())
}

fn new_global(id: GlobalId, l: &LocalTrack, cfg: &AssocConfig) -> Result<GlobalTrack> {
    let mut g = GlobalTrack::new(id, l.class_id);
    merge_into_global(&mut g, l, cfg)?;
    Ok(g)
}

fn next_global_id(globals: &[GlobalTrack]) -> GlobalId {
    GlobalId(globals.iter().map(|g| g.global_id.0).max().map_or(1, |m| m + 1))
}

fn longest_first(a: &LocalTrack, b: &LocalTrack) -> Ordering {
    b.len().cmp(&a.len()).then(a.key.cmp(&b.key))
}

/// Outcome of the glance phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Glance {
    pub globals: Vec<GlobalTrack>,
    pub assigned: BTreeSet<TrackletKey>,
    pub report: Vec<MatchDecision>,
}

/// Glance pair test between two window-restricted tracklets, or `None` when
/// they may never be linked (same camera or different class).
pub fn glance_pair(a: &LocalTrack, b: &LocalTrack, cfg: &AssocConfig) -> Option<MatchDecision> {
    if a.key.camera_id == b.key.camera_id || a.class_id != b.class_id {
        return None;
    }
    let wa = a.trajectory.window(0, cfg.window);
    let wb = b.trajectory.window(0, cfg.window);
    let (shared, dist) = trajectory_distance(&wa.points, &wb.points);
    let ra: Vec<&Embedding> = a.representatives.iter().collect();
    let rb: Vec<&Embedding> = b.representatives.iter().collect();
    let app = app_or_floor(&ra, &rb);
    let reason = if shared < cfg.min_shared || shared == 0 {
        Reason::NoOverlap
    } else if dist > cfg.tau_traj {
        Reason::TrajFail
    } else if app < cfg.tau_app {
        Reason::AppFail
    } else {
        Reason::BothPass
    };
    Some(MatchDecision {
        stage: Stage::Glance,
        local: a.key,
        peer: Some(b.key),
        global_id: None,
        traj_shared: shared,
        traj_dist: dist,
        app_sim: app,
        accepted: reason == Reason::BothPass,
        reason,
    })
}

fn frames_overlap(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> bool {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().any(|f| large.contains(f))
}

/// Builds the initial globals from tracklets seen in `[0, cfg.window)`.
///
/// Accepted pairs are linked strongest first (smallest trajectory distance,
/// then highest appearance similarity); a link that would put two
/// time-overlapping tracklets of one camera into the same group is skipped
/// and reported as a view conflict. Groups receive ids 1, 2, ... in order of
/// their smallest member key.
pub fn glance_init(locals: &[LocalTrack], cfg: &AssocConfig) -> Result<Glance> {
    if cfg.window == 0 {
        return Err(Error::Config("glance window must be at least one frame".into()));
    }
    let mut in_window: Vec<&LocalTrack> =
        locals.iter().filter(|l| l.frames.range(0..cfg.window).next().is_some()).collect();
    in_window.sort_by_key(|l| l.key);

    let mut report = Vec::new();
    let mut edges = Vec::new();
    for i in 0..in_window.len() {
        for j in i + 1..in_window.len() {
            if let Some(d) = glance_pair(in_window[i], in_window[j], cfg) {
                if d.accepted {
                    edges.push((i, j, d.traj_dist, d.app_sim));
                }
                report.push(d);
            }
        }
    }
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then(b.3.total_cmp(&a.3)).then((a.0, a.1).cmp(&(b.0, b.1))));

    // union-find over window tracklets, with member lists for the view check
    let mut parent: Vec<usize> = (0..in_window.len()).collect();
    let mut groups: Vec<Vec<usize>> = (0..in_window.len()).map(|i| alloc::vec![i]).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, j, _, _) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri == rj {
            continue;
        }
        let conflict = groups[ri].iter().any(|&p| {
            groups[rj].iter().any(|&q| {
                in_window[p].key.camera_id == in_window[q].key.camera_id
                    && frames_overlap(&in_window[p].frames, &in_window[q].frames)
            })
        });
        if conflict {
            if let Some(d) = report.iter_mut().find(|d| d.local == in_window[i].key && d.peer == Some(in_window[j].key)) {
                d.accepted = false;
                d.reason = Reason::ViewConflict;
            }
            continue;
        }
        let moved = core::mem::take(&mut groups[rj]);
        groups[ri].extend(moved);
        parent[rj] = ri;
    }

    let mut components: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    for c in components.iter_mut() {
        c.sort_unstable();
    }
    components.sort();

    let mut globals = Vec::with_capacity(components.len());
    let mut assigned = BTreeSet::new();
    for (n, comp) in components.iter().enumerate() {
        let id = GlobalId(n as u32 + 1);
        let mut g = GlobalTrack::new(id, in_window[comp[0]].class_id);
        for &m in comp {
            merge_into_global(&mut g, in_window[m], cfg)?;
            assigned.insert(in_window[m].key);
        }
        globals.push(g);
    }
    for d in report.iter_mut().filter(|d| d.accepted) {
        d.global_id = globals.iter().find(|g| g.members.contains(&d.local)).map(|g| g.global_id);
    }
    Ok(Glance { globals, assigned, report })
}

fn pool_refs(g: &GlobalTrack) -> Vec<&Embedding> {
    g.feature_pool.iter().collect()
}

/// Scores `l` against `g` under the acceptance rules. `None` for globals of
/// another class.
pub fn score_against_global(g: &GlobalTrack, l: &LocalTrack, cfg: &AssocConfig, stage: Stage) -> Option<MatchDecision> {
    if g.class_id != l.class_id {
        return None;
    }
    let (shared, dist) = trajectory_distance(&g.trajectory, &l.trajectory.points);
    let reps: Vec<&Embedding> = l.representatives.iter().collect();
    let app = app_or_floor(&pool_refs(g), &reps);
    let reason = if g.conflicts_with(l.key.camera_id, l.frames.iter()) {
        Reason::ViewConflict
    } else if shared < cfg.min_shared || shared == 0 {
        Reason::NoOverlap
    } else if dist > cfg.tau_traj {
        Reason::TrajFail
    } else if app < cfg.tau_app {
        Reason::AppFail
    } else {
        Reason::BothPass
    };
    Some(MatchDecision {
        stage,
        local: l.key,
        peer: None,
        global_id: Some(g.global_id),
        traj_shared: shared,
        traj_dist: dist,
        app_sim: app,
        accepted: reason == Reason::BothPass,
        reason,
    })
}

fn decision_rank(a: &MatchDecision, b: &MatchDecision) -> Ordering {
    b.accepted
        .cmp(&a.accepted)
        .then(a.reason.cmp(&b.reason))
        .then(a.traj_dist.total_cmp(&b.traj_dist))
        .then(b.app_sim.total_cmp(&a.app_sim))
        .then(a.global_id.cmp(&b.global_id))
}

fn overlaps_any(globals: &[GlobalTrack], l: &LocalTrack) -> bool {
    globals.iter().any(|g| g.coverage.values().any(|c| frames_overlap(c, &l.frames)))
}

/// Attaches unassigned tracklets to globals until a full pass accepts
/// nothing. Returns the tracklets that remain unassigned.
pub fn progressive_associate(
    globals: &mut [GlobalTrack],
    mut unassigned: Vec<LocalTrack>,
    cfg: &AssocConfig,
    report: &mut Vec<MatchDecision>,
) -> Result<Vec<LocalTrack>> {
    loop {
        unassigned.sort_by(longest_first);
        let before = unassigned.len();
        let mut remaining = Vec::with_capacity(unassigned.len());
        for l in unassigned {
            if !overlaps_any(globals, &l) {
                remaining.push(l);
                continue;
            }
            let best = globals
                .iter()
                .filter_map(|g| score_against_global(g, &l, cfg, Stage::Progressive))
                .min_by(decision_rank);
            match best {
                Some(d) if d.accepted => {
                    let gid = d.global_id.expect("progressive decisions name a global");
                    let g = globals.iter_mut().find(|g| g.global_id == gid).expect("scored global exists");
                    merge_into_global(g, &l, cfg)?;
                    report.push(d);
                }
                Some(d) => {
                    report.push(d);
                    remaining.push(l);
                }
                None => remaining.push(l),
            }
        }
        unassigned = remaining;
        if unassigned.len() == before {
            return Ok(unassigned);
        }
    }
}

/// Frames between `frames` and the nearest frame in `covered` (0 on overlap).
fn temporal_gap(frames: &BTreeSet<u32>, covered: &BTreeSet<u32>) -> u32 {
    frames
        .iter()
        .map(|&f| {
            let before = covered.range(..=f).next_back().map(|&c| f - c);
            let after = covered.range(f..).next().map(|&c| c - f);
            before.into_iter().chain(after).min().unwrap_or(u32::MAX)
        })
        .min()
        .unwrap_or(u32::MAX)
}

/// Distance between the temporally closest pair of points, for
/// trajectories that share no frame.
fn nearest_in_time_distance(a: &BTreeMap<u32, WorldPoint>, b: &BTreeMap<u32, WorldPoint>) -> f64 {
    let mut best: Option<(u32, f64)> = None;
    for (&f, p) in a {
        let before = b.range(..=f).next_back().map(|(&c, q)| (f - c, q));
        let after = b.range(f..).next().map(|(&c, q)| (c - f, q));
        for (gap, q) in before.into_iter().chain(after) {
            let d = p.distance(q);
            if best.is_none_or(|(bg, bd)| gap < bg || (gap == bg && d < bd)) {
                best = Some((gap, d));
            }
        }
    }
    best.map_or(f64::INFINITY, |(_, d)| d)
}

/// Ordering key for forced matching: temporal gap, then spatial distance,
/// then descending appearance similarity.
pub fn forced_key(g: &GlobalTrack, l: &LocalTrack) -> (u32, f64, f64) {
    let gap = temporal_gap(&l.frames, &g.covered_frames());
    let (shared, dist) = trajectory_distance(&g.trajectory, &l.trajectory.points);
    let spatial = if shared > 0 { dist } else { nearest_in_time_distance(&l.trajectory.points, &g.trajectory) };
    let reps: Vec<&Embedding> = l.representatives.iter().collect();
    let app = app_or_floor(&pool_refs(g), &reps);
    (gap, spatial, -app)
}

/// Forced matching: every leftover joins the closest class-compatible global
/// that keeps per-view uniqueness; only when none exists does it open a new
/// global.
pub fn fm_resolve(
    globals: &mut Vec<GlobalTrack>,
    mut leftovers: Vec<LocalTrack>,
    cfg: &AssocConfig,
    report: &mut Vec<MatchDecision>,
) -> Result<()> {
    leftovers.sort_by(longest_first);
    for l in leftovers {
        let best = globals
            .iter()
            .enumerate()
            .filter(|(_, g)| g.class_id == l.class_id && !g.conflicts_with(l.key.camera_id, l.frames.iter()))
            .map(|(i, g)| (i, forced_key(g, &l)))
            .min_by(|a, b| {
                a.1 .0
                    .cmp(&b.1 .0)
                    .then(a.1 .1.total_cmp(&b.1 .1))
                    .then(a.1 .2.total_cmp(&b.1 .2))
                    .then(globals[a.0].global_id.cmp(&globals[b.0].global_id))
            });
        let (idx, reason) = match best {
            Some((i, _)) => (i, Reason::Forced),
            None => {
                globals.push(GlobalTrack::new(next_global_id(globals), l.class_id));
                (globals.len() - 1, Reason::Expanded)
            }
        };
        let (shared, dist) = trajectory_distance(&globals[idx].trajectory, &l.trajectory.points);
        let reps: Vec<&Embedding> = l.representatives.iter().collect();
        let app = app_or_floor(&pool_refs(&globals[idx]), &reps);
        merge_into_global(&mut globals[idx], &l, cfg)?;
        report.push(MatchDecision {
            stage: Stage::Forced,
            local: l.key,
            peer: None,
            global_id: Some(globals[idx].global_id),
            traj_shared: shared,
            traj_dist: dist,
            app_sim: app,
            accepted: true,
            reason,
        });
    }
    Ok(())
}

/// Global ID expansion: promote the longest leftover to a new global, rerun
/// progressive association over the rest, repeat until nothing is left.
pub fn gide_expand(
    globals: &mut Vec<GlobalTrack>,
    mut leftovers: Vec<LocalTrack>,
    cfg: &AssocConfig,
    report: &mut Vec<MatchDecision>,
) -> Result<()> {
    while !leftovers.is_empty() {
        leftovers.sort_by(longest_first);
        let seed = leftovers.remove(0);
        let g = new_global(next_global_id(globals), &seed, cfg)?;
        report.push(MatchDecision {
            stage: Stage::Expansion,
            local: seed.key,
            peer: None,
            global_id: Some(g.global_id),
            traj_shared: 0,
            traj_dist: f64::INFINITY,
            app_sim: f64::NAN,
            accepted: true,
            reason: Reason::Expanded,
        });
        globals.push(g);
        leftovers = progressive_associate(globals, leftovers, cfg, report)?;
    }
    Ok(())
}

/// Full association result.
#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub globals: Vec<GlobalTrack>,
    pub report: Vec<MatchDecision>,
    /// Number of globals created by the glance phase.
    pub glance_globals: usize,
}

/// Glance initialization, progressive association and the chosen leftover
/// strategy, in that order.
pub fn associate(locals: &[LocalTrack], cfg: &AssocConfig, strategy: Strategy) -> Result<Association> {
    let mut seen = BTreeSet::new();
    for l in locals {
        if !seen.insert(l.key) {
            return Err(input_err!("duplicate tracklet {}", l.key));
        }
        if l.frames.is_empty() {
            return Err(input_err!("tracklet {} has no frames", l.key));
        }
    }
    let Glance { mut globals, assigned, mut report } = glance_init(locals, cfg)?;
    let glance_globals = globals.len();
    let unassigned: Vec<LocalTrack> = locals.iter().filter(|l| !assigned.contains(&l.key)).cloned().collect();
    let leftovers = progressive_associate(&mut globals, unassigned, cfg, &mut report)?;
    match strategy {
        Strategy::Fm => fm_resolve(&mut globals, leftovers, cfg, &mut report)?,
        Strategy::Gide => gide_expand(&mut globals, leftovers, cfg, &mut report)?,
    }
    globals.sort_by_key(|g| g.global_id);
    Ok(Association { globals, report, glance_globals })
}

/// Checks that every tracklet sits in exactly one global and that no global
/// holds two members of one camera on the same frame.
pub fn check_invariants(globals: &[GlobalTrack], locals: &[LocalTrack]) -> Result<()> {
    let by_key: BTreeMap<TrackletKey, &LocalTrack> = locals.iter().map(|l| (l.key, l)).collect();
    let mut owner: BTreeMap<TrackletKey, GlobalId> = BTreeMap::new();
    for g in globals {
        let mut seen: BTreeMap<(u32, u32), TrackletKey> = BTreeMap::new();
        for m in &g.members {
            if let Some(prev) = owner.insert(*m, g.global_id) {
                return Err(Error::Internal(format!("tracklet {m} in globals {prev} and {}", g.global_id)));
            }
            let l = by_key.get(m).ok_or_else(|| Error::Internal(format!("unknown member {m} in global {}", g.global_id)))?;
            for f in &l.frames {
                if let Some(other) = seen.insert((m.camera_id.0, *f), *m) {
                    return Err(Error::Internal(format!(
                        "global {} has {other} and {m} from camera {} on frame {f}",
                        g.global_id, m.camera_id
                    )));
                }
            }
        }
    }
    if let Some(missing) = by_key.keys().find(|k| !owner.contains_key(k)) {
        return Err(Error::Internal(format!("tracklet {missing} not assigned to any global")));
    }
    Ok(())
}

//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.
//!
//!     cargo test -p mcmt --release --test acceptance

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use mcmt::commands::{cmd_eval, cmd_synth, cmd_track};
use mcmt::config::{PipelineConfig, SceneFile, StrategyName};
use mcmt_core::assoc::Strategy;
use mcmt_core::eval::{compute_hota, match_frame, EvalConfig, EvalPoint};
use mcmt_core::geometry::CameraCalibration;
use mcmt_core::pipeline::{run, PipelineParams};
use mcmt_core::refine::{interpolate_gaps, refine_camera, snms, RefineConfig, SnmsMode};
use mcmt_core::sct::{associate_frame, pair_cost, predict, track_camera, GateParams, KalmanParams, SctConfig, TrackState};
use mcmt_core::synth::{generate_scene, SceneConfig};
use mcmt_core::{BBox, CameraId, ClassId, Detection, Embedding, LocalId, Observation, Tracklet, WorldPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn params() -> PipelineParams {
    PipelineConfig::default().params()
}

fn gt_points(gt: &[mcmt_core::GroundTruthRecord]) -> Vec<EvalPoint> {
    gt.iter().map(EvalPoint::from).collect()
}

fn perfect_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scene = SceneFile::from(&SceneConfig::default().noise_free());
    check!(scene.n_objects == 3 && scene.n_cameras == 3 && scene.duration == 300, "unexpected default scene");
    cmd_synth(&scene, &dir.path().join("scene")).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::default();
    let start = Instant::now();
    let summary = cmd_track(&dir.path().join("scene"), &dir.path().join("out"), &cfg).map_err(|e| e.to_string())?;
    let eval = cmd_eval(&dir.path().join("scene/gt.csv"), &dir.path().join("out/tracks.csv"), &cfg, None)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let r = eval.report;
    check!(summary.glance_globals == 3, "glance created {} globals", summary.glance_globals);
    check!((r.hota - 1.0).abs() < 1e-9, "HOTA {} (DetA {}, AssA {})", r.hota, r.deta, r.assa);
    check!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    Ok(format!("HOTA {:.12}, {} globals, {:.2?}", r.hota, summary.globals, elapsed))
}

fn strategy_direction() -> Outcome {
    let p = params();
    let eval_cfg = EvalConfig::default();
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let cfg = SceneConfig {
            n_objects: 5,
            entry_frames: vec![0, 0, 0, 150, 180],
            exit_frames: vec![120, 140],
            seed,
            ..SceneConfig::default()
        };
        check!(cfg.entry_frames[3] > p.assoc.window && cfg.entry_frames[4] > p.assoc.window, "late objects enter inside the window");
        let scene = generate_scene(&cfg).map_err(|e| e.to_string())?;
        let gt = gt_points(&scene.gt);
        let fm = run(&scene.detections, &scene.calibrations, &p, Strategy::Fm).map_err(|e| e.to_string())?;
        let gide = run(&scene.detections, &scene.calibrations, &p, Strategy::Gide).map_err(|e| e.to_string())?;
        let rf = compute_hota(&gt, &fm.predictions(&p), &eval_cfg).map_err(|e| e.to_string())?;
        let rg = compute_hota(&gt, &gide.predictions(&p), &eval_cfg).map_err(|e| e.to_string())?;
        let glance = gide.association.glance_globals;
        let created = gide.association.globals.len();
        check!(created == glance + 2, "seed {seed}: GIDE made {created} globals from {glance} glance globals");
        if rg.assa > rf.assa {
            wins += 1;
        }
        lines.push(format!("{:.3}/{:.3}", rf.assa, rg.assa));
    }
    check!(wins >= 9, "GIDE AssA beat FM on {wins}/10 seeds (FM/GIDE: {})", lines.join(" "));
    Ok(format!("GIDE > FM on {wins}/10 seeds, AssA FM/GIDE {}", lines.join(" ")))
}

/// Direct restatement of the metric for tiny inputs: every partial matching
/// of every frame is enumerated.
fn oracle_hota(gt: &[EvalPoint], pred: &[EvalPoint], alpha: f64, d_max: f64) -> (f64, f64) {
    fn best(sim: &[Vec<Option<f64>>], row: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, sum: f64, out: &mut (f64, Vec<(usize, usize)>)) {
        if row == sim.len() {
            if sum > out.0 {
                *out = (sum, cur.clone());
            }
            return;
        }
        best(sim, row + 1, used, cur, sum, out);
        for j in 0..used.len() {
            if let (false, Some(s)) = (used[j], sim[row][j]) {
                used[j] = true;
                cur.push((row, j));
                best(sim, row + 1, used, cur, sum + s, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut frames: Vec<u32> = gt.iter().chain(pred).map(|p| p.frame).collect();
    frames.sort_unstable();
    frames.dedup();
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let (mut fp, mut fn_) = (0usize, 0usize);
    for f in frames {
        let g: Vec<&EvalPoint> = gt.iter().filter(|p| p.frame == f).collect();
        let q: Vec<&EvalPoint> = pred.iter().filter(|p| p.frame == f).collect();
        let sim: Vec<Vec<Option<f64>>> = g
            .iter()
            .map(|a| {
                q.iter()
                    .map(|b| {
                        let d = ((a.point.x - b.point.x).powi(2) + (a.point.y - b.point.y).powi(2) + (a.point.z - b.point.z).powi(2)).sqrt();
                        let s = (1.0 - d / d_max).max(0.0);
                        (s > 0.0 && s >= alpha).then_some(s)
                    })
                    .collect()
            })
            .collect();
        let mut out = (0.0, Vec::new());
        best(&sim, 0, &mut vec![false; q.len()], &mut Vec::new(), 0.0, &mut out);
        fp += q.len() - out.1.len();
        fn_ += g.len() - out.1.len();
        pairs.extend(out.1.iter().map(|&(i, j)| (g[i].id, q[j].id)));
    }
    let tp = pairs.len();
    let deta = if tp + fp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fp + fn_) as f64 };
    if tp == 0 {
        return (deta, 0.0);
    }
    let assa = pairs
        .iter()
        .map(|&(g, p)| {
            let tpa = pairs.iter().filter(|&&x| x == (g, p)).count() as f64;
            let gc = gt.iter().filter(|x| x.id == g).count() as f64;
            let pc = pred.iter().filter(|x| x.id == p).count() as f64;
            tpa / (gc + pc - tpa)
        })
        .sum::<f64>()
        / tp as f64;
    (deta, assa)
}

fn pt(frame: u32, id: u32, x: f64, y: f64) -> EvalPoint {
    EvalPoint { frame, id, point: WorldPoint::new(x, y, 0.9) }
}

fn micro_scene(rng: &mut ChaCha8Rng) -> (Vec<EvalPoint>, Vec<EvalPoint>) {
    let frames = rng.random_range(1..=20u32);
    let n_gt = rng.random_range(1..=3u32);
    let n_pred = rng.random_range(1..=3u32);
    let mut gt = vec![pt(0, 1, 1.0, 0.0)];
    let mut pred = vec![pt(0, 101, 1.0 + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))];
    for f in 0..frames {
        for id in 1..=n_gt {
            if (f, id) != (0, 1) && rng.random_bool(0.8) {
                gt.push(pt(f, id, id as f64 + rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)));
            }
        }
        for id in 1..=n_pred {
            if (f, id) != (0, 1) && rng.random_bool(0.8) {
                // predictions wander between the ground-truth lanes
                pred.push(pt(f, 100 + id, rng.random_range(0.3..3.7), rng.random_range(-0.6..0.6)));
            }
        }
    }
    (gt, pred)
}

fn hota_oracle() -> Outcome {
    let cfg = EvalConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for scene in 0..50 {
        let (gt, pred) = micro_scene(&mut rng);
        let r = compute_hota(&gt, &pred, &cfg).map_err(|e| e.to_string())?;
        check!(r.per_alpha.len() == cfg.alphas.len(), "scene {scene}: alpha count");
        for a in &r.per_alpha {
            let (deta, assa) = oracle_hota(&gt, &pred, a.alpha, cfg.d_max);
            let hota = (deta * assa).sqrt();
            let err = (a.deta - deta).abs().max((a.assa - assa).abs()).max((a.hota - hota).abs());
            worst = worst.max(err);
            check!(err < 1e-9, "scene {scene} alpha {}: got ({}, {}), oracle ({deta}, {assa})", a.alpha, a.deta, a.assa);
        }
        let mean = r.per_alpha.iter().map(|a| a.hota).sum::<f64>() / r.per_alpha.len() as f64;
        check!((r.hota - mean).abs() < 1e-12, "scene {scene}: HOTA is not the alpha mean");
    }
    // one object, prediction switches identity halfway
    let gt: Vec<EvalPoint> = (0..10).map(|f| pt(f, 1, 0.0, 0.0)).collect();
    let pred: Vec<EvalPoint> = (0..10).map(|f| pt(f, if f < 5 { 7 } else { 8 }, 0.0, 0.0)).collect();
    let split = compute_hota(&gt, &pred, &cfg).map_err(|e| e.to_string())?.hota;
    check!(format!("{split:.4}") == "0.7071" && (split - 0.5f64.sqrt()).abs() < 1e-6, "split identity HOTA {split}");
    Ok(format!("50 micro-scenes, max deviation {worst:.1e}; split identity {split:.6}"))
}

fn clean_camera_tracklets(scene: &mcmt_core::synth::Scene, cam: CameraId) -> Result<Vec<Tracklet>, String> {
    let dets = scene.camera_detections(cam);
    track_camera(&dets, &SctConfig::default()).map_err(|e| e.to_string())
}

fn random_tracklets(rng: &mut ChaCha8Rng) -> Vec<Tracklet> {
    let objects: Vec<(f64, f64)> = (0..rng.random_range(1..=4)).map(|_| (rng.random_range(0.0..300.0), rng.random_range(-3.0..3.0))).collect();
    let n = rng.random_range(1..=8u32);
    (0..n)
        .map(|id| {
            let (x0, vx) = objects[rng.random_range(0..objects.len())];
            let start = rng.random_range(0..30u32);
            let len = rng.random_range(1..30u32);
            let jitter = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..15.0) };
            let mut t = Tracklet::new(CameraId(1), LocalId(id + 1), ClassId(rng.random_range(0..2)));
            for f in start..start + len {
                if rng.random_bool(0.9) {
                    let x = x0 + vx * f as f64 + jitter;
                    let e = Embedding::from_f64(&[1.0, rng.random::<f64>(), 0.5]).unwrap();
                    let bbox = BBox::new(x, 100.0, 40.0, 90.0).unwrap();
                    t.obs.insert(f, Observation { bbox, embedding: Some(e), confidence: rng.random_range(0.3..1.0) });
                }
            }
            t
        })
        .filter(|t| !t.obs.is_empty())
        .collect()
}

fn snms_behavior() -> Outcome {
    let scene = generate_scene(&SceneConfig::default().noise_free()).map_err(|e| e.to_string())?;
    let rcfg = RefineConfig::default();
    let mut restored = 0;
    for cal in &scene.calibrations {
        let clean = refine_camera(clean_camera_tracklets(&scene, cal.camera_id)?, &rcfg).map_err(|e| e.to_string())?;
        let mut fragments = Vec::new();
        for t in &clean {
            let frames: Vec<u32> = t.obs.keys().copied().collect();
            check!(frames.len() >= 40, "tracklet {} too short to fragment ({} frames)", t.key(), frames.len());
            let mid = frames.len() / 2;
            let (first, second) = (&frames[..mid + 10], &frames[mid - 10..]);
            for (part, ids) in [(0u32, first), (1000, second)] {
                let mut f = Tracklet::new(t.camera_id, LocalId(t.local_id.0 + part), t.class_id);
                for fr in ids {
                    f.obs.insert(*fr, t.obs[fr].clone());
                    if t.interpolated_frames.contains(fr) {
                        f.interpolated_frames.insert(*fr);
                    }
                }
                fragments.push(f);
            }
        }
        let refined = refine_camera(fragments, &rcfg).map_err(|e| e.to_string())?;
        check!(refined.len() == clean.len(), "camera {}: {} tracklets became {}", cal.camera_id, clean.len(), refined.len());
        for (a, b) in clean.iter().zip(&refined) {
            check!(a.obs == b.obs, "camera {}: merged tracklet differs from {}", cal.camera_id, a.key());
        }
        restored += clean.len();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut merges = 0;
    for set in 0..100 {
        let ts = random_tracklets(&mut rng);
        for mode in [SnmsMode::Merge, SnmsMode::Suppress] {
            let once = snms(ts.clone(), rcfg.theta_oc, rcfg.theta_frames, mode);
            let twice = snms(once.clone(), rcfg.theta_oc, rcfg.theta_frames, mode);
            check!(once == twice, "set {set} ({mode:?}) is not idempotent");
            merges += ts.len() - once.len();
        }
    }
    check!(merges > 0, "random sets never exercised a merge");
    Ok(format!("{restored} tracklets restored from halves; 100 random sets idempotent ({merges} resolutions)"))
}

fn adversarial(rng: &mut ChaCha8Rng, anchor: &Embedding) -> Embedding {
    let a: Vec<f64> = anchor.values().iter().map(|&v| v as f64).collect();
    let mut v: Vec<f64> = (0..a.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dot: f64 = v.iter().zip(&a).map(|(x, y)| x * y).sum();
    // reflect into the half-space facing away from the anchor
    let push = if dot >= 0.0 { 2.0 * dot + 0.5 } else { 0.0 };
    for (x, y) in v.iter_mut().zip(&a) {
        *x -= push * y;
    }
    Embedding::from_f64(&v).unwrap()
}

fn representative_robustness() -> Outcome {
    let scene = generate_scene(&SceneConfig::default().noise_free()).map_err(|e| e.to_string())?;
    let p = params();
    let gt = gt_points(&scene.gt);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut injected = 0usize;
    let perturbed: Vec<Detection> = scene
        .detections
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if d.frame % 5 == 0 {
                d.embedding = adversarial(&mut rng, &d.embedding);
                injected += 1;
            }
            d
        })
        .collect();
    check!(injected * 5 == scene.detections.len(), "{injected} of {} embeddings replaced", scene.detections.len());
    let base = run(&scene.detections, &scene.calibrations, &p, Strategy::Gide).map_err(|e| e.to_string())?;
    let hit = run(&perturbed, &scene.calibrations, &p, Strategy::Gide).map_err(|e| e.to_string())?;
    let before: BTreeMap<_, _> = base.tracklets.iter().map(|t| (t.key(), &t.representatives)).collect();
    let after: BTreeMap<_, _> = hit.tracklets.iter().map(|t| (t.key(), &t.representatives)).collect();
    check!(before.len() == after.len(), "tracklet count changed: {} -> {}", before.len(), after.len());
    for (key, reps) in &before {
        check!(after.get(key) == Some(reps), "representatives of {key} changed");
    }
    let h0 = compute_hota(&gt, &base.predictions(&p), &EvalConfig::default()).map_err(|e| e.to_string())?.hota;
    let h1 = compute_hota(&gt, &hit.predictions(&p), &EvalConfig::default()).map_err(|e| e.to_string())?.hota;
    check!((h0 - h1).abs() < 0.01, "HOTA moved from {h0} to {h1}");
    Ok(format!("{} tracklets keep their representatives; HOTA {h0:.6} -> {h1:.6}", before.len()))
}

fn geometry_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let target = WorldPoint::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), 0.0);
        let bearing = rng.random_range(0.0..std::f64::consts::TAU);
        let back = rng.random_range(3.0..40.0);
        let eye = WorldPoint::new(target.x + back * bearing.cos(), target.y + back * bearing.sin(), rng.random_range(2.0..25.0));
        let size = (rng.random_range(320..4000u32), rng.random_range(240..3000u32));
        let cal = CameraCalibration::look_at(CameraId(i), eye, target, rng.random_range(200.0..5000.0), size).map_err(|e| e.to_string())?;
        // ground points the camera actually sees
        let (g, u, v) = loop {
            let g = WorldPoint::new(target.x + rng.random_range(-10.0..10.0), target.y + rng.random_range(-10.0..10.0), 0.0);
            match cal.project(&g) {
                Some((u, v)) if cal.in_bounds(u, v, 0.0) => break (g, u, v),
                _ => {}
            }
        };
        let r = cal.back_project(u, v).map_err(|e| format!("calibration {i}: {e}"))?;
        let err = ((r.x - g.x).powi(2) + (r.y - g.y).powi(2) + r.z.powi(2)).sqrt();
        worst = worst.max(err);
        check!(err < 1e-6, "calibration {i}: error {err} m");
    }
    Ok(format!("1000 calibrations, max error {worst:.1e} m"))
}

fn interpolation_selectivity() -> Outcome {
    let max_gap = RefineConfig::default().max_gap;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut filled, mut skipped) = (0usize, 0usize);
    for trial in 0..200 {
        let mut t = Tracklet::new(CameraId(1), LocalId(1), ClassId(0));
        let mut f = rng.random_range(0..10u32);
        for _ in 0..rng.random_range(2..8) {
            let e = Embedding::from_f64(&[rng.random::<f64>() + 0.1, rng.random::<f64>()]).unwrap();
            let bbox = BBox::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0), rng.random_range(5.0..80.0), rng.random_range(5.0..80.0)).unwrap();
            t.obs.insert(f, Observation { bbox, embedding: Some(e), confidence: rng.random_range(0.1..1.0) });
            // around the threshold, plus the occasional adjacent frame
            f += 1 + match rng.random_range(0..4) {
                0 => 0,
                1 => max_gap - rng.random_range(1..=3),
                2 => max_gap + rng.random_range(0..=2),
                _ => rng.random_range(1..max_gap),
            };
        }
        let out = interpolate_gaps(&t, max_gap);
        for (fr, o) in &t.obs {
            let n = &out.obs[fr];
            let bits = |b: &BBox| [b.x.to_bits(), b.y.to_bits(), b.w.to_bits(), b.h.to_bits()];
            check!(bits(&n.bbox) == bits(&o.bbox) && n.embedding == o.embedding && n.confidence.to_bits() == o.confidence.to_bits(), "trial {trial}: frame {fr} altered");
            check!(!out.interpolated_frames.contains(fr), "trial {trial}: observed frame {fr} marked interpolated");
        }
        let frames: Vec<u32> = t.obs.keys().copied().collect();
        for w in frames.windows(2) {
            let (f1, f2) = (w[0], w[1]);
            let (a, b) = (&t.obs[&f1].bbox, &t.obs[&f2].bbox);
            let gap = f2 - f1 - 1;
            for fr in f1 + 1..f2 {
                match out.obs.get(&fr) {
                    None => check!(gap >= max_gap, "trial {trial}: gap of {gap} at {fr} left open"),
                    Some(o) => {
                        check!(gap < max_gap, "trial {trial}: gap of {gap} filled");
                        let (p, q) = ((f2 - fr) as f64, (fr - f1) as f64);
                        let lin = |x: f64, y: f64| (x * p + y * q) / (p + q);
                        let want = [lin(a.x, b.x), lin(a.y, b.y), lin(a.w, b.w), lin(a.h, b.h)];
                        let got = [o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h];
                        for (g, w) in got.iter().zip(want) {
                            check!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "trial {trial}: frame {fr} is {g}, expected {w}");
                        }
                        check!(o.embedding.is_none() && out.interpolated_frames.contains(&fr), "trial {trial}: frame {fr} not flagged");
                    }
                }
            }
            if gap > 0 {
                if gap < max_gap { filled += 1 } else { skipped += 1 }
            }
        }
        check!(out.obs.len() == t.obs.len() + out.interpolated_frames.len(), "trial {trial}: frames outside gaps were added");
    }
    check!(filled > 0 && skipped > 0, "degenerate trials");
    Ok(format!("{filled} gaps filled, {skipped} left open (max_gap {max_gap})"))
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().display().to_string(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn determinism() -> Outcome {
    let scene = SceneFile { seed: 1234, n_objects: 4, ..SceneFile::default() };
    let run_once = || -> Result<(tempfile::TempDir, BTreeMap<String, Vec<u8>>), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        cmd_synth(&scene, &d.join("scene")).map_err(|e| e.to_string())?;
        for strategy in [StrategyName::Fm, StrategyName::Gide] {
            let cfg = PipelineConfig { strategy, ..PipelineConfig::default() };
            let out = d.join(format!("out-{strategy}"));
            cmd_track(&d.join("scene"), &out, &cfg).map_err(|e| e.to_string())?;
            cmd_eval(&d.join("scene/gt.csv"), &out.join("tracks.csv"), &cfg, Some(&out)).map_err(|e| e.to_string())?;
        }
        let snap = snapshot(d);
        Ok((dir, snap))
    };
    let (_a, first) = run_once()?;
    let (_b, second) = run_once()?;
    check!(first.keys().eq(second.keys()), "artifact sets differ");
    for (name, bytes) in &first {
        check!(second[name] == *bytes, "{name} differs between runs");
    }
    let total: usize = first.values().map(Vec::len).sum();
    Ok(format!("{} artifacts, {total} bytes, identical", first.len()))
}

/// Best (cardinality, total) over every partial matching; `better` decides.
fn exhaustive(m: &[Vec<Option<f64>>], better: &dyn Fn((usize, f64), (usize, f64)) -> bool) -> (usize, f64) {
    fn rec(m: &[Vec<Option<f64>>], row: usize, used: &mut Vec<bool>, cur: (usize, f64), better: &dyn Fn((usize, f64), (usize, f64)) -> bool, best: &mut (usize, f64)) {
        if row == m.len() {
            if better(cur, *best) {
                *best = cur;
            }
            return;
        }
        rec(m, row + 1, used, cur, better, best);
        for j in 0..used.len() {
            if let (false, Some(c)) = (used[j], m[row][j]) {
                used[j] = true;
                rec(m, row + 1, used, (cur.0 + 1, cur.1 + c), better, best);
                used[j] = false;
            }
        }
    }
    let cols = m.first().map_or(0, Vec::len);
    let mut best = (0, 0.0);
    rec(m, 0, &mut vec![false; cols], (0, 0.0), better, &mut best);
    best
}

fn random_detection(rng: &mut ChaCha8Rng, frame: u32) -> Detection {
    let e: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0) + 0.3).collect();
    Detection {
        camera_id: CameraId(1),
        frame,
        bbox: BBox::new(rng.random_range(0.0..120.0), rng.random_range(0.0..120.0), rng.random_range(20.0..60.0), rng.random_range(40.0..120.0)).unwrap(),
        class_id: ClassId(rng.random_range(0..2)),
        confidence: 0.9,
        embedding: Embedding::from_f64(&e).unwrap(),
    }
}

fn assignment_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let gate = GateParams::from(&SctConfig::default());
    let kalman = KalmanParams::default();
    let (mut sct_pairs, mut eval_pairs) = (0usize, 0usize);
    for trial in 0..1000 {
        let n_tracks = rng.random_range(0..=6usize);
        let n_dets = rng.random_range(0..=6usize);
        let tracks: Vec<TrackState> = (0..n_tracks)
            .map(|i| predict(&TrackState::initiate(LocalId(i as u32 + 1), &random_detection(&mut rng, 0), &kalman), &kalman))
            .collect();
        let dets: Vec<Detection> = (0..n_dets).map(|_| random_detection(&mut rng, 1)).collect();
        let cost: Vec<Vec<Option<f64>>> = tracks
            .iter()
            .map(|t| dets.iter().map(|d| pair_cost(t, d, &gate).unwrap()).collect())
            .collect();
        let a = associate_frame(&tracks, &dets, &gate).map_err(|e| e.to_string())?;
        let total: f64 = a.matches.iter().map(|&(t, d)| cost[t][d].ok_or("gated pair matched").unwrap()).sum();
        let want = exhaustive(&cost, &|c, b| c.0 > b.0 || (c.0 == b.0 && c.1 < b.1 - 1e-12));
        check!(a.matches.len() == want.0 && (total - want.1).abs() < 1e-9, "trial {trial}: tracker got ({}, {total}), best ({}, {})", a.matches.len(), want.0, want.1);
        check!(a.matches.len() + a.unmatched_tracks.len() == n_tracks && a.matches.len() + a.unmatched_detections.len() == n_dets, "trial {trial}: leftovers");
        sct_pairs += a.matches.len();

        let alpha = rng.random_range(0.05..0.95);
        let gt: Vec<(u32, WorldPoint)> = (0..rng.random_range(0..=6u32)).map(|i| (i + 1, WorldPoint::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), 0.0))).collect();
        let pred: Vec<(u32, WorldPoint)> = (0..rng.random_range(0..=6u32)).map(|i| (i + 1, WorldPoint::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), 0.0))).collect();
        let sim: Vec<Vec<Option<f64>>> = gt
            .iter()
            .map(|(_, g)| pred.iter().map(|(_, p)| Some((1.0 - g.distance(p) / 2.0).max(0.0)).filter(|&s| s > 0.0 && s >= alpha)).collect())
            .collect();
        let m = match_frame(&gt, &pred, alpha, 2.0);
        let got: f64 = m.tp.iter().map(|t| t.2).sum();
        let want = exhaustive(&sim, &|c, b| c.1 > b.1 + 1e-12);
        check!((got - want.1).abs() < 1e-9, "trial {trial}: evaluator matched {got}, best {}", want.1);
        check!(m.tp.len() + m.fp.len() == pred.len() && m.tp.len() + m.fn_.len() == gt.len(), "trial {trial}: evaluator leftovers");
        eval_pairs += m.tp.len();
    }
    check!(sct_pairs > 0 && eval_pairs > 0, "degenerate matrices");
    Ok(format!("1000 trials each; {sct_pairs} tracker pairs and {eval_pairs} evaluator pairs optimal"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("perfect-input recovery", perfect_recovery),
        ("FM/GIDE direction", strategy_direction),
        ("HOTA oracle equivalence", hota_oracle),
        ("SNMS behavior", snms_behavior),
        ("representative robustness", representative_robustness),
        ("geometry round-trip", geometry_round_trip),
        ("interpolation selectivity", interpolation_selectivity),
        ("determinism", determinism),
        ("assignment optimality", assignment_optimality),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|w| name.contains(w.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.2} s): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

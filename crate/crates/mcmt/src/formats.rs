//! On-disk formats.
//!
//! All tables are comma-separated with a header row; `#` starts a comment
//! line. Floats are written with Rust's shortest round-trip formatting, so
//! reading a file back reproduces every value bit for bit.
//!
//! | file               | columns |
//! |--------------------|---------|
//! | `detections.csv`   | `camera_id,frame,x,y,w,h,class_id,confidence`, then `embedding_offset` (sidecar) or `e0..e{D-1}` (inline) |
//! | `embeddings.bin`   | little-endian `f32`, `D` values per detection, addressed by byte offset |
//! | `calibrations.csv` | `camera_id,width,height,p00..p23` (3x4 projection, row-major) |
//! | `gt.csv`           | `frame,object_id,class_id,x,y,z,l,w,h,yaw` |
//! | `tracks.csv`       | `frame,global_id,camera_id,x,y,w,h,wx,wy,wz,class_id` (`nan` world point when unknown) |
//! | `associations.csv` | one row per association decision |
//! | `eval.csv`         | per-threshold scores and a final `all` row |
//!
//! `detections.csv` starts with a directive line such as
//! `#mcmt-detections dim=64 embeddings=sidecar` naming the embedding size and
//! where the embeddings live.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use csv::StringRecord;
use mcmt_core::assoc::MatchDecision;
use mcmt_core::eval::{EvalPoint, EvalReport};
use mcmt_core::geometry::CameraCalibration;
use mcmt_core::nalgebra::Matrix3x4;
use mcmt_core::pipeline::TrackRow;
use mcmt_core::synth::Scene;
use mcmt_core::{
    BBox, CameraId, ClassId, Detection, Dimensions, Embedding, GlobalId, GroundTruthRecord, ObjectId, WorldPoint,
};

use crate::error::{CliError, Result};

pub const DETECTIONS: &str = "detections.csv";
pub const EMBEDDINGS: &str = "embeddings.bin";
pub const CALIBRATIONS: &str = "calibrations.csv";
pub const GROUND_TRUTH: &str = "gt.csv";
pub const TRACKS: &str = "tracks.csv";
pub const ASSOCIATIONS: &str = "associations.csv";
pub const EVAL_REPORT: &str = "eval.csv";
pub const SUMMARY: &str = "summary.txt";
pub const SCENE_ECHO: &str = "scene.toml";

const DIRECTIVE: &str = "#mcmt-detections";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingStorage {
    Inline,
    Sidecar,
}

const DET_COLUMNS: [&str; 8] = ["camera_id", "frame", "x", "y", "w", "h", "class_id", "confidence"];
const CAL_COLUMNS: [&str; 15] =
    ["camera_id", "width", "height", "p00", "p01", "p02", "p03", "p10", "p11", "p12", "p13", "p20", "p21", "p22", "p23"];
const GT_COLUMNS: [&str; 10] = ["frame", "object_id", "class_id", "x", "y", "z", "l", "w", "h", "yaw"];
const TRACK_COLUMNS: [&str; 11] = ["frame", "global_id", "camera_id", "x", "y", "w", "h", "wx", "wy", "wz", "class_id"];
const ASSOC_COLUMNS: [&str; 10] =
    ["stage", "camera_id", "local_id", "peer", "global_id", "traj_shared", "traj_dist", "app_sim", "accepted", "reason"];

/// One parsed table row with its 1-based line number.
struct Row<'a> {
    path: &'a Path,
    line: u64,
    rec: StringRecord,
}

impl Row<'_> {
    fn get<T: FromStr>(&self, i: usize, name: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = &self.rec[i];
        raw.parse().map_err(|e| self.err(format!("bad {name} {raw:?}: {e}")))
    }

    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::parse(self.path, self.line, msg)
    }
}

fn csv_error(path: &Path, line_offset: u64, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line()) + line_offset;
    CliError::parse(path, line, e.to_string())
}

fn parse_table<'a>(path: &'a Path, text: &str, line_offset: u64, header: &[String]) -> Result<Vec<Row<'a>>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| csv_error(path, line_offset, e))?.clone();
    if found.iter().ne(header.iter().map(String::as_str)) {
        let line = found.position().map_or(1, |p| p.line()) + line_offset;
        return Err(CliError::parse(path, line, format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, line_offset, e))?;
        let line = rec.position().map_or(0, |p| p.line()) + line_offset;
        rows.push(Row { path, line, rec });
    }
    Ok(rows)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn owned(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Writes a table: optional preamble lines, header, rows.
fn write_table(path: &Path, preamble: &[String], header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let io = |e| CliError::io(path, e);
    let mut out = Vec::new();
    for line in preamble {
        writeln!(out, "{line}").map_err(io)?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let csv_io = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
        w.write_record(header).map_err(csv_io)?;
        for r in rows {
            w.write_record(&r).map_err(csv_io)?;
        }
        w.flush().map_err(io)?;
    }
    fs::write(path, out).map_err(io)
}

fn s(v: impl Display) -> String {
    v.to_string()
}

pub fn write_detections(dir: &Path, dets: &[Detection], storage: EmbeddingStorage) -> Result<()> {
    let path = dir.join(DETECTIONS);
    let dim = dets.first().map_or(0, |d| d.embedding.dim());
    if let Some(d) = dets.iter().find(|d| d.embedding.dim() != dim) {
        return Err(mcmt_core::Error::Input(format!("mixed embedding sizes: {} and {dim}", d.embedding.dim())).into());
    }
    let mut header = owned(&DET_COLUMNS);
    let mode = match storage {
        EmbeddingStorage::Sidecar => {
            header.push("embedding_offset".into());
            "sidecar"
        }
        EmbeddingStorage::Inline => {
            header.extend((0..dim).map(|i| format!("e{i}")));
            "inline"
        }
    };
    let mut blob = Vec::new();
    let rows: Vec<Vec<String>> = dets
        .iter()
        .map(|d| {
            let b = &d.bbox;
            let mut r = vec![s(d.camera_id), s(d.frame), s(b.x), s(b.y), s(b.w), s(b.h), s(d.class_id), s(d.confidence)];
            match storage {
                EmbeddingStorage::Sidecar => {
                    r.push(s(blob.len()));
                    blob.extend(d.embedding.values().iter().flat_map(|v| v.to_le_bytes()));
                }
                EmbeddingStorage::Inline => r.extend(d.embedding.values().iter().map(s)),
            }
            r
        })
        .collect();
    write_table(&path, &[format!("{DIRECTIVE} dim={dim} embeddings={mode}")], &header, rows)?;
    if storage == EmbeddingStorage::Sidecar {
        let bin = dir.join(EMBEDDINGS);
        fs::write(&bin, blob).map_err(|e| CliError::io(bin, e))?;
    }
    Ok(())
}

fn parse_directive(path: &Path, line: &str) -> Result<(usize, EmbeddingStorage)> {
    let bad = |msg: &str| CliError::parse(path, 1, msg.to_string());
    let mut words = line.split_whitespace();
    if words.next() != Some(DIRECTIVE) {
        return Err(bad("missing `#mcmt-detections dim=<D> embeddings=<inline|sidecar>` directive"));
    }
    let (mut dim, mut storage) = (None, None);
    for w in words {
        match w.split_once('=') {
            Some(("dim", v)) => dim = Some(v.parse::<usize>().map_err(|_| bad("dim must be a non-negative integer"))?),
            Some(("embeddings", "inline")) => storage = Some(EmbeddingStorage::Inline),
            Some(("embeddings", "sidecar")) => storage = Some(EmbeddingStorage::Sidecar),
            _ => return Err(bad(&format!("unknown directive field {w:?}"))),
        }
    }
    Ok((dim.ok_or_else(|| bad("directive lacks dim="))?, storage.ok_or_else(|| bad("directive lacks embeddings="))?))
}

pub fn read_detections(dir: &Path) -> Result<Vec<Detection>> {
    let path = dir.join(DETECTIONS);
    let text = read_text(&path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let (dim, storage) = parse_directive(&path, first.trim_end())?;
    let mut header = owned(&DET_COLUMNS);
    match storage {
        EmbeddingStorage::Sidecar => header.push("embedding_offset".into()),
        EmbeddingStorage::Inline => header.extend((0..dim).map(|i| format!("e{i}"))),
    }
    let rows = parse_table(&path, rest, 1, &header)?;
    let blob = match (storage, rows.is_empty()) {
        (EmbeddingStorage::Sidecar, false) => {
            let bin = dir.join(EMBEDDINGS);
            fs::read(&bin).map_err(|e| CliError::io(bin, e))?
        }
        _ => Vec::new(),
    };
    rows.iter()
        .map(|r| {
            let bbox = BBox::new(r.get(2, "x")?, r.get(3, "y")?, r.get(4, "w")?, r.get(5, "h")?)
                .map_err(|e| r.err(e.to_string()))?;
            let values: Vec<f32> = match storage {
                EmbeddingStorage::Inline => (0..dim).map(|i| r.get(8 + i, "embedding value")).collect::<Result<_>>()?,
                EmbeddingStorage::Sidecar => {
                    let off: usize = r.get(8, "embedding_offset")?;
                    let end = off.checked_add(4 * dim).filter(|&e| off.is_multiple_of(4) && e <= blob.len());
                    let Some(end) = end else {
                        return Err(r.err(format!("embedding offset {off} outside {EMBEDDINGS} ({} bytes)", blob.len())));
                    };
                    blob[off..end].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect()
                }
            };
            let confidence: f64 = r.get(7, "confidence")?;
            if !confidence.is_finite() {
                return Err(r.err("confidence must be finite"));
            }
            Ok(Detection {
                camera_id: CameraId(r.get(0, "camera_id")?),
                frame: r.get(1, "frame")?,
                bbox,
                class_id: ClassId(r.get(6, "class_id")?),
                confidence,
                embedding: Embedding::new(values).map_err(|e| r.err(e.to_string()))?,
            })
        })
        .collect()
}

pub fn write_calibrations(path: &Path, cals: &[CameraCalibration]) -> Result<()> {
    let rows = cals.iter().map(|c| {
        let mut r = vec![s(c.camera_id), s(c.image_size.0), s(c.image_size.1)];
        for i in 0..3 {
            for j in 0..4 {
                r.push(s(c.projection[(i, j)]));
            }
        }
        r
    });
    write_table(path, &[], &owned(&CAL_COLUMNS), rows)
}

pub fn read_calibrations(path: &Path) -> Result<Vec<CameraCalibration>> {
    let text = read_text(path)?;
    parse_table(path, &text, 0, &owned(&CAL_COLUMNS))?
        .iter()
        .map(|r| {
            let mut p = Matrix3x4::zeros();
            for i in 0..3 {
                for j in 0..4 {
                    p[(i, j)] = r.get(3 + 4 * i + j, CAL_COLUMNS[3 + 4 * i + j])?;
                }
            }
            CameraCalibration::new(CameraId(r.get(0, "camera_id")?), p, (r.get(1, "width")?, r.get(2, "height")?))
                .map_err(|e| r.err(e.to_string()))
        })
        .collect()
}

pub fn write_ground_truth(path: &Path, gt: &[GroundTruthRecord]) -> Result<()> {
    let rows = gt.iter().map(|g| {
        let (c, d) = (&g.centroid, &g.dimensions);
        vec![s(g.frame), s(g.object_id), s(g.class_id), s(c.x), s(c.y), s(c.z), s(d.length), s(d.width), s(d.height), s(g.yaw)]
    });
    write_table(path, &[], &owned(&GT_COLUMNS), rows)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    let text = read_text(path)?;
    parse_table(path, &text, 0, &owned(&GT_COLUMNS))?
        .iter()
        .map(|r| {
            let centroid = WorldPoint::new(r.get(3, "x")?, r.get(4, "y")?, r.get(5, "z")?);
            if !centroid.is_finite() {
                return Err(r.err("centroid must be finite"));
            }
            Ok(GroundTruthRecord {
                frame: r.get(0, "frame")?,
                object_id: ObjectId(r.get(1, "object_id")?),
                class_id: ClassId(r.get(2, "class_id")?),
                centroid,
                dimensions: Dimensions { length: r.get(6, "l")?, width: r.get(7, "w")?, height: r.get(8, "h")? },
                yaw: r.get(9, "yaw")?,
            })
        })
        .collect()
}

pub fn write_tracks(path: &Path, rows: &[TrackRow]) -> Result<()> {
    let nan = || "nan".to_string();
    let out = rows.iter().map(|t| {
        let b = &t.bbox;
        let (wx, wy, wz) = t.world.map_or_else(|| (nan(), nan(), nan()), |p| (s(p.x), s(p.y), s(p.z)));
        vec![s(t.frame), s(t.global_id), s(t.camera_id), s(b.x), s(b.y), s(b.w), s(b.h), wx, wy, wz, s(t.class_id)]
    });
    write_table(path, &[], &owned(&TRACK_COLUMNS), out)
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRow>> {
    let text = read_text(path)?;
    parse_table(path, &text, 0, &owned(&TRACK_COLUMNS))?
        .iter()
        .map(|r| {
            let bbox = BBox::new(r.get(3, "x")?, r.get(4, "y")?, r.get(5, "w")?, r.get(6, "h")?)
                .map_err(|e| r.err(e.to_string()))?;
            let w: [f64; 3] = [r.get(7, "wx")?, r.get(8, "wy")?, r.get(9, "wz")?];
            let world = match (w.iter().all(|v| v.is_nan()), w.iter().all(|v| v.is_finite())) {
                (true, _) => None,
                (_, true) => Some(WorldPoint::new(w[0], w[1], w[2])),
                _ => return Err(r.err("world point must be all finite or all nan")),
            };
            Ok(TrackRow {
                frame: r.get(0, "frame")?,
                global_id: GlobalId(r.get(1, "global_id")?),
                camera_id: CameraId(r.get(2, "camera_id")?),
                bbox,
                world,
                class_id: ClassId(r.get(10, "class_id")?),
            })
        })
        .collect()
}

/// One evaluation point per global and frame. Rows of the same global and
/// frame must agree on the world point.
pub fn predictions_from_tracks(path: &Path, rows: &[TrackRow]) -> Result<Vec<EvalPoint>> {
    let mut points: std::collections::BTreeMap<(u32, u32), WorldPoint> = Default::default();
    for t in rows {
        let Some(p) = t.world else { continue };
        if let Some(prev) = points.insert((t.frame, t.global_id.0), p) {
            if prev != p {
                return Err(CliError::Usage(format!(
                    "{}: global {} has two world points at frame {}",
                    path.display(),
                    t.global_id,
                    t.frame
                )));
            }
        }
    }
    Ok(points.into_iter().map(|((frame, id), point)| EvalPoint { frame, id, point }).collect())
}

pub fn write_associations(path: &Path, decisions: &[MatchDecision]) -> Result<()> {
    let rows = decisions.iter().map(|d| {
        vec![
            d.stage.as_str().to_string(),
            s(d.local.camera_id),
            s(d.local.local_id),
            d.peer.map_or_else(String::new, |p| format!("{}/{}", p.camera_id, p.local_id)),
            d.global_id.map_or_else(String::new, s),
            s(d.traj_shared),
            s(d.traj_dist),
            s(d.app_sim),
            s(d.accepted),
            d.reason.as_str().to_string(),
        ]
    });
    write_table(path, &[], &owned(&ASSOC_COLUMNS), rows)
}

pub fn write_eval_report(path: &Path, r: &EvalReport, d_max: f64) -> Result<()> {
    let preamble = [format!("# localization similarity = max(0, 1 - distance / d_max), d_max = {d_max} m")];
    let header = owned(&["alpha", "hota", "deta", "assa", "loca", "tp", "fp", "fn"]);
    let mut rows: Vec<Vec<String>> = r
        .per_alpha
        .iter()
        .map(|a| vec![s(a.alpha), s(a.hota), s(a.deta), s(a.assa), String::new(), s(a.tp), s(a.fp), s(a.fn_)])
        .collect();
    rows.push(vec!["all".into(), s(r.hota), s(r.deta), s(r.assa), s(r.loca), String::new(), String::new(), String::new()]);
    write_table(path, &preamble, &header, rows)
}

/// Human-readable score table.
pub fn format_report(r: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:>6}  {:>7}  {:>7}  {:>7}  {:>7}\n", "", "HOTA", "DetA", "AssA", "LocA"));
    out.push_str(&format!(
        "{:>6}  {:>7.3}  {:>7.3}  {:>7.3}  {:>7.3}\n",
        "all",
        100.0 * r.hota,
        100.0 * r.deta,
        100.0 * r.assa,
        100.0 * r.loca
    ));
    out.push('\n');
    out.push_str(&format!("{:>6}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}\n", "alpha", "HOTA", "DetA", "AssA", "TP", "FP", "FN"));
    for a in &r.per_alpha {
        out.push_str(&format!(
            "{:>6.2}  {:>7.3}  {:>7.3}  {:>7.3}  {:>7}  {:>7}  {:>7}\n",
            a.alpha,
            100.0 * a.hota,
            100.0 * a.deta,
            100.0 * a.assa,
            a.tp,
            a.fp,
            a.fn_
        ));
    }
    out
}

/// Writes detections (sidecar embeddings), calibrations and ground truth.
pub fn export_scene(scene: &Scene, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_detections(dir, &scene.detections, EmbeddingStorage::Sidecar)?;
    write_calibrations(&dir.join(CALIBRATIONS), &scene.calibrations)?;
    write_ground_truth(&dir.join(GROUND_TRUTH), &scene.gt)
}

/// Reads back what [`export_scene`] wrote. Detection provenance is not
/// stored, so `truth` comes back empty.
pub fn import_scene(dir: &Path) -> Result<Scene> {
    Ok(Scene {
        gt: read_ground_truth(&dir.join(GROUND_TRUTH))?,
        calibrations: read_calibrations(&dir.join(CALIBRATIONS))?,
        detections: read_detections(dir)?,
        truth: Vec::new(),
    })
}

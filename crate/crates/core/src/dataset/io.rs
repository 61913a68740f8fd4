use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BubbleGraph, Edge, FloorplanRecord};
use crate::geometry::{Boundary, Floorplan, Point, Polygon, RoomType};
use crate::{Error, Result};

pub const COORDINATE_CONVENTION: &str = "normalized [-0.9,0.9]^2, y-up";

/// Half-extent every plan is fitted into.
const NORMALIZED_EXTENT: f64 = 0.9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoomWire {
    #[serde(rename = "type")]
    pub room_type: RoomType,
    pub corners: Vec<Point>,
}

/// One JSON line of a dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordWire {
    pub id: String,
    pub rooms: Vec<RoomWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Vec<Point>>,
    #[serde(default)]
    pub edges: Vec<Edge>,
    /// Optional explicit room count, checked against `rooms`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_rooms: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub record_count: usize,
    pub coordinate_convention: String,
    pub room_type_vocabulary: Vec<RoomType>,
    pub source_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// First invalid line aborts the load.
    #[default]
    Strict,
    /// Invalid lines are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<FloorplanRecord>,
    pub manifest: DatasetManifest,
    /// `(line number, message)` for every skipped line in lenient mode.
    pub skipped: Vec<(usize, String)>,
}

fn manifest_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.manifest.json"))
}

/// Centers and scales a plan into `[-0.9, 0.9]²` unless it already lies there.
///
/// Plans already inside the box are returned untouched, which makes normalization idempotent
/// bit-for-bit.
pub fn normalize_plan(plan: &Floorplan) -> Floorplan {
    let Some((lo, hi)) = plan.bbox() else {
        return plan.clone();
    };
    let inside = |v: f64| (-NORMALIZED_EXTENT..=NORMALIZED_EXTENT).contains(&v);
    if inside(lo.x) && inside(lo.y) && inside(hi.x) && inside(hi.y) {
        return plan.clone();
    }
    let center = Point::new(0.5 * (lo.x + hi.x), 0.5 * (lo.y + hi.y));
    let half = 0.5 * (hi.x - lo.x).max(hi.y - lo.y);
    let scale = if half > 0.0 { NORMALIZED_EXTENT / half } else { 1.0 };
    plan.map_points(|p| {
        let q = p.sub(center).scale(scale);
        Point::new(
            q.x.clamp(-NORMALIZED_EXTENT, NORMALIZED_EXTENT),
            q.y.clamp(-NORMALIZED_EXTENT, NORMALIZED_EXTENT),
        )
    })
}

/// Parses, validates and normalizes one record line.
pub fn parse_record(line: &str) -> Result<FloorplanRecord> {
    let wire: RecordWire = serde_json::from_str(line)?;
    record_from_wire(wire)
}

fn record_from_wire(w: RecordWire) -> Result<FloorplanRecord> {
    let id = w.id;
    let ctx = |e: Error| Error::validation(format!("record `{id}`: {e}"));
    if let Some(n) = w.num_rooms {
        if n != w.rooms.len() {
            return Err(Error::validation(format!(
                "record `{id}`: num_rooms {n} but {} rooms listed",
                w.rooms.len()
            )));
        }
    }
    let mut rooms = Vec::with_capacity(w.rooms.len());
    for r in w.rooms {
        rooms.push((r.room_type, Polygon::new(r.corners).map_err(ctx)?));
    }
    let boundary = match w.boundary {
        Some(c) if !c.is_empty() => Some(Boundary::new(Polygon::new(c).map_err(ctx)?)),
        _ => None,
    };
    let plan = normalize_plan(&Floorplan::new(rooms, boundary));
    let graph = BubbleGraph::new(plan.room_types(), w.edges).map_err(ctx)?;
    FloorplanRecord::new(id.clone(), plan, graph)
}

pub fn record_to_wire(r: &FloorplanRecord) -> RecordWire {
    RecordWire {
        id: r.id.clone(),
        rooms: r
            .plan
            .rooms
            .iter()
            .map(|room| RoomWire { room_type: room.room_type, corners: room.polygon.corners().to_vec() })
            .collect(),
        boundary: r.plan.boundary.as_ref().map(|b| b.polygon().corners().to_vec()),
        edges: r.graph.edges().to_vec(),
        num_rooms: None,
    }
}

pub fn record_to_json(r: &FloorplanRecord) -> String {
    serde_json::to_string(&record_to_wire(r)).expect("record serialization is infallible")
}

pub fn load_dataset(path: &Path, strictness: Strictness) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (n, line) in BufReader::new(bytes.as_slice()).lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match serde_json::from_str::<RecordWire>(&line) {
            Ok(w) => record_from_wire(w),
            Err(e) => Err(Error::Parse { line: lineno, message: e.to_string() }),
        };
        match parsed {
            Ok(r) => records.push(r),
            Err(e) if strictness == Strictness::Lenient => {
                warn!("{}:{lineno}: skipping record: {e}", path.display());
                skipped.push((lineno, e.to_string()));
            }
            Err(Error::Parse { line, message }) => return Err(Error::Parse { line, message }),
            Err(e) => {
                return Err(Error::validation(format!("{}:{lineno}: {e}", path.display())))
            }
        }
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mpath = manifest_path(path);
    if mpath.exists() {
        let stored: DatasetManifest = serde_json::from_slice(&fs::read(&mpath)?)?;
        if stored.record_count != records.len() + skipped.len() {
            return Err(Error::validation(format!(
                "manifest {} lists {} records, file has {}",
                mpath.display(),
                stored.record_count,
                records.len() + skipped.len()
            )));
        }
    }
    let manifest = DatasetManifest {
        name,
        record_count: records.len(),
        coordinate_convention: COORDINATE_CONVENTION.to_string(),
        room_type_vocabulary: RoomType::ALL.to_vec(),
        source_hash: hex::encode(Sha256::digest(&bytes)),
    };
    Ok(Dataset { records, manifest, skipped })
}

/// Writes `records` as JSON lines plus the `<stem>.manifest.json` sidecar.
pub fn save_dataset(path: &Path, records: &[FloorplanRecord]) -> Result<DatasetManifest> {
    let mut buf = Vec::new();
    for r in records {
        buf.write_all(record_to_json(r).as_bytes())?;
        buf.push(b'\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, &buf)?;
    let manifest = DatasetManifest {
        name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        record_count: records.len(),
        coordinate_convention: COORDINATE_CONVENTION.to_string(),
        room_type_vocabulary: RoomType::ALL.to_vec(),
        source_hash: hex::encode(Sha256::digest(&buf)),
    };
    fs::write(manifest_path(path), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

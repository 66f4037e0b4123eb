use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actions::{Action, Vec2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// Collected on the stand-in for the physical system.
    Reference,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub params_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub source: Source,
    /// False when the post-cast settle phase timed out.
    #[serde(default = "yes")]
    pub settled: bool,
}

fn yes() -> bool {
    true
}

/// One executed cast: the action, free-end positions every 100 ms of the
/// driven motion, and the settled final position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordWire", into = "RecordWire")]
pub struct TrajectoryRecord {
    pub action: Action,
    pub waypoints: Vec<Vec2>,
    pub final_pos: Vec2,
    pub duration_ms: u64,
    pub meta: RecordMeta,
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    action: [f64; 6],
    waypoints: Vec<[f64; 2]>,
    #[serde(rename = "final")]
    final_pos: [f64; 2],
    duration_ms: u64,
    meta: RecordMeta,
}

impl From<TrajectoryRecord> for RecordWire {
    fn from(r: TrajectoryRecord) -> Self {
        RecordWire {
            action: r.action.to_array(),
            waypoints: r.waypoints.iter().map(|p| [p.x, p.y]).collect(),
            final_pos: [r.final_pos.x, r.final_pos.y],
            duration_ms: r.duration_ms,
            meta: r.meta,
        }
    }
}

impl TryFrom<RecordWire> for TrajectoryRecord {
    type Error = Error;

    fn try_from(w: RecordWire) -> Result<Self> {
        let action = Action::from_array(w.action);
        action.validate()?;
        let expected = (w.duration_ms / 100) as usize;
        if w.waypoints.len() != expected {
            return Err(Error::invalid(format!(
                "record has {} waypoints, duration {} ms implies {expected}",
                w.waypoints.len(),
                w.duration_ms
            )));
        }
        Ok(TrajectoryRecord {
            action,
            waypoints: w.waypoints.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            final_pos: Vec2::new(w.final_pos[0], w.final_pos[1]),
            duration_ms: w.duration_ms,
            meta: w.meta,
        })
    }
}

impl TrajectoryRecord {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

/// Write records as JSON lines.
pub fn write_records(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a JSON-lines record file; blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = TrajectoryRecord::from_json_line(&line).map_err(|e| {
            Error::invalid(format!("{}:{}: {e}", path.display(), no + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

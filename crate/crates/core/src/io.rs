//! Trajectory CSV ingestion and export (`trajectory_id,t_s,x_m,y_m`).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Trajectory, TrajectoryPoint};

pub const TRAJECTORY_HEADER: [&str; 4] = ["trajectory_id", "t_s", "x_m", "y_m"];

pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trajectories(file)
}

/// Parses trajectory CSV. Ids may be interleaved; within one id rows must be in
/// strictly increasing time order. Trajectories are returned in order of first appearance.
pub fn read_trajectories(reader: impl Read) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != TRAJECTORY_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                TRAJECTORY_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<TrajectoryPoint>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("field `{}`: {e}", TRAJECTORY_HEADER[i]),
            })
        };
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty trajectory_id".into(),
            });
        }
        let point = TrajectoryPoint::new(num(1)?, num(2)?, num(3)?);
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        if let Some(prev) = entry.last() {
            if point.t == prev.t {
                return Err(Error::Validation(format!(
                    "trajectory {id}: duplicate timestamp {} (line {line})",
                    point.t
                )));
            }
            if point.t < prev.t {
                return Err(Error::Validation(format!(
                    "trajectory {id}: timestamps out of order at t={} (line {line})",
                    point.t
                )));
            }
        }
        entry.push(point);
    }

    order
        .into_iter()
        .map(|id| {
            let pts = rows.remove(&id).unwrap_or_default();
            Trajectory::new(id, pts)
        })
        .collect()
}

pub fn save_trajectories(path: impl AsRef<Path>, trajs: &[Trajectory]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_trajectories(&mut w, trajs).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes shortest round-trip float representations so a reload is bit-exact.
pub fn write_trajectories(w: &mut impl Write, trajs: &[Trajectory]) -> std::io::Result<()> {
    writeln!(w, "{}", TRAJECTORY_HEADER.join(","))?;
    for t in trajs {
        for p in t.points() {
            writeln!(w, "{},{},{},{}", t.id(), p.t, p.x, p.y)?;
        }
    }
    Ok(())
}

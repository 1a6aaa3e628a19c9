//! JSON-lines dataset files: one header line, then one record per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{TransitionRecord, WorldParams, RNG_ALGORITHM};
use crate::dynamics::{ControlInput, LieState};
use crate::error::{Error, Result};
use crate::se2::{Pose, Twist};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub rng: String,
    pub master_seed: u64,
    pub stream: String,
    pub world: WorldParams,
}

impl DatasetHeader {
    pub fn new(world: &WorldParams, stream: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            rng: RNG_ALGORITHM.to_string(),
            master_seed: world.seed,
            stream: stream.to_string(),
            world: world.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub q0: [f64; 3],
    pub dq0: [f64; 3],
    pub u: [f64; 2],
    pub q1: [f64; 3],
    pub dq1: [f64; 3],
    pub seed: u64,
}

fn pose_arr(p: &Pose) -> [f64; 3] {
    [p.x, p.y, p.theta]
}

fn twist_arr(t: &Twist) -> [f64; 3] {
    [t.vx, t.vy, t.wz]
}

impl From<&TransitionRecord> for RecordLine {
    fn from(r: &TransitionRecord) -> Self {
        Self {
            q0: pose_arr(&r.s0.pose),
            dq0: twist_arr(&r.s0.twist),
            u: [r.u_des.fx, r.u_des.tz],
            q1: pose_arr(&r.s1.pose),
            dq1: twist_arr(&r.s1.twist),
            seed: r.seed,
        }
    }
}

impl From<&RecordLine> for TransitionRecord {
    fn from(l: &RecordLine) -> Self {
        let state = |q: [f64; 3], v: [f64; 3]| LieState::new(Pose::new(q[0], q[1], q[2]), Twist::new(v[0], v[1], v[2]));
        Self {
            s0: state(l.q0, l.dq0),
            u_des: ControlInput::new(l.u[0], l.u[1]),
            s1: state(l.q1, l.dq1),
            seed: l.seed,
        }
    }
}

pub fn write_dataset<W: Write>(mut out: W, header: &DatasetHeader, records: &[TransitionRecord]) -> Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, &RecordLine::from(r))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<(DatasetHeader, Vec<TransitionRecord>)> {
    let mut lines = input.lines();
    let first = lines.next().ok_or(Error::Empty("dataset file has no header"))??;
    let header: DatasetHeader = serde_json::from_str(&first)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "dataset schema {} is not supported (expected {SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine = serde_json::from_str(&line)?;
        records.push(TransitionRecord::from(&rec));
    }
    Ok((header, records))
}

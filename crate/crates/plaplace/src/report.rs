//! Machine-readable outputs: JSON documents, CSV tables, the binary
//! snapshot dump and artifact checksums.
//!
//! Binary snapshot layout (all integers and floats little-endian):
//!
//! ```text
//! magic  8 bytes  b"ANNSNAP1"
//! mode   u32      0 radial, 1 polar
//! dim    u32
//! index  u32      annulus index i
//! ntheta u32
//! nr     u64      radial node count
//! side   u32      0 sub, 1 super
//! time   f64
//! r      nr × f64
//! values (nr · ntheta) × f64
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::barriers::BarrierSide;
use crate::solver::{AnnulusGrid, Field, GridMode};

const MAGIC: &[u8; 8] = b"ANNSNAP1";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed snapshot {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: io::Error) -> ReportError {
    ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes any report as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    let mut data = serde_json::to_vec_pretty(value)?;
    data.push(b'\n');
    fs::write(path, data).map_err(|e| io_err(path, e))
}

/// CSV rows `r[,theta],value` for one snapshot, with a comment header.
pub fn snapshot_csv(field: &Field) -> String {
    let grid = &field.grid;
    let mut out = format!(
        "# time={:.17e} mode={} n={} i={} side={}\n",
        field.time,
        match grid.mode {
            GridMode::Radial => "radial",
            GridMode::Polar => "polar",
        },
        grid.dim,
        grid.index,
        field.side.label(),
    );
    if grid.n_theta == 1 {
        out.push_str("r,value\n");
        for (j, &r) in grid.r.iter().enumerate() {
            out.push_str(&format!("{r:.17e},{:.17e}\n", field.node_value(j, 0)));
        }
    } else {
        out.push_str("r,theta,value\n");
        let dphi = std::f64::consts::TAU / grid.n_theta as f64;
        for (j, &r) in grid.r.iter().enumerate() {
            for m in 0..grid.n_theta {
                out.push_str(&format!(
                    "{r:.17e},{:.17e},{:.17e}\n",
                    m as f64 * dphi,
                    field.node_value(j, m)
                ));
            }
        }
    }
    out
}

pub fn write_snapshot_binary(path: &Path, field: &Field) -> Result<(), ReportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    let grid = &field.grid;
    let mut buf = Vec::with_capacity(64 + 8 * (grid.r.len() + field.values.len()));
    buf.extend_from_slice(MAGIC);
    let mode = match grid.mode {
        GridMode::Radial => 0u32,
        GridMode::Polar => 1,
    };
    buf.extend_from_slice(&mode.to_le_bytes());
    buf.extend_from_slice(&grid.dim.to_le_bytes());
    buf.extend_from_slice(&grid.index.to_le_bytes());
    buf.extend_from_slice(&(grid.n_theta as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.r.len() as u64).to_le_bytes());
    let side = match field.side {
        BarrierSide::Sub => 0u32,
        BarrierSide::Super => 1,
    };
    buf.extend_from_slice(&side.to_le_bytes());
    buf.extend_from_slice(&field.time.to_le_bytes());
    for &r in &grid.r {
        buf.extend_from_slice(&r.to_le_bytes());
    }
    for &v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))
}

pub fn read_snapshot_binary(path: &Path) -> Result<Field, ReportError> {
    let mut data = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| io_err(path, e))?;
    let bad = |reason: &str| ReportError::Malformed {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if data.len() < 48 || &data[..8] != MAGIC {
        return Err(bad("missing or short header"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(data[off..off + 4].try_into().unwrap());
    let mode = u32_at(8);
    let dim = u32_at(12);
    let index = u32_at(16);
    let ntheta = u32_at(20) as usize;
    let nr = u64::from_le_bytes(data[24..32].try_into().unwrap()) as usize;
    let side = u32_at(32);
    let time = f64::from_le_bytes(data[36..44].try_into().unwrap());
    let need = 44 + 8 * (nr + nr * ntheta);
    if data.len() != need {
        return Err(bad(&format!("expected {need} bytes, got {}", data.len())));
    }
    let f64_at = |off: usize| f64::from_le_bytes(data[off..off + 8].try_into().unwrap());
    let r: Vec<f64> = (0..nr).map(|j| f64_at(44 + 8 * j)).collect();
    let base = 44 + 8 * nr;
    let values: Vec<f64> = (0..nr * ntheta).map(|j| f64_at(base + 8 * j)).collect();
    let grid = AnnulusGrid {
        index,
        mode: if mode == 0 { GridMode::Radial } else { GridMode::Polar },
        dim,
        r,
        n_theta: ntheta,
    };
    Ok(Field {
        grid: Arc::new(grid),
        values,
        time,
        side: if side == 0 { BarrierSide::Sub } else { BarrierSide::Super },
    })
}

pub fn sha256_hex(path: &Path) -> Result<String, ReportError> {
    let mut f = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf).map_err(|e| io_err(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

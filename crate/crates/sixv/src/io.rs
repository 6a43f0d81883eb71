//! Grid JSON, event logs and CSV writers.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use sixv_core::dynamics::Event;
use sixv_core::jump::{Direction, JumpEnd, RateClass};
use sixv_core::lattice::{Boundary, EdgeGrid, Geometry};

/// Bumped whenever a JSON or CSV layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryJson {
    Periodic,
    StepEmpty,
    Empty,
    Bernoulli { bottom: f64, left: f64 },
    Custom,
}

impl From<Boundary> for BoundaryJson {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::Periodic => BoundaryJson::Periodic,
            Boundary::StepEmpty => BoundaryJson::StepEmpty,
            Boundary::Empty => BoundaryJson::Empty,
            Boundary::Bernoulli { bottom, left } => BoundaryJson::Bernoulli { bottom, left },
            Boundary::Custom => BoundaryJson::Custom,
        }
    }
}

impl From<BoundaryJson> for Boundary {
    fn from(b: BoundaryJson) -> Self {
        match b {
            BoundaryJson::Periodic => Boundary::Periodic,
            BoundaryJson::StepEmpty => Boundary::StepEmpty,
            BoundaryJson::Empty => Boundary::Empty,
            BoundaryJson::Bernoulli { bottom, left } => Boundary::Bernoulli { bottom, left },
            BoundaryJson::Custom => Boundary::Custom,
        }
    }
}

/// Serialised grid. Edge bits are packed LSB first, in storage order
/// (`h`: row major with stride `h_stride`; `v`: column major with stride `v_stride`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridJson {
    pub schema_version: u32,
    /// `torus`, `rect` or `quadrant`.
    pub geometry: String,
    pub width: usize,
    pub height: usize,
    pub boundary: BoundaryJson,
    pub h_stride: usize,
    pub v_stride: usize,
    pub h_edges: String,
    pub v_edges: String,
}

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= (b & 1) << (i % 8);
    }
    out
}

pub fn unpack_bits(bytes: &[u8], n: usize) -> Result<Vec<u8>> {
    if bytes.len() != n.div_ceil(8) {
        bail!("bit string holds {} bytes, expected {}", bytes.len(), n.div_ceil(8));
    }
    Ok((0..n).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect())
}

impl GridJson {
    pub fn from_grid(g: &EdgeGrid) -> GridJson {
        let geometry = match g.geometry {
            Geometry::Torus { .. } => "torus",
            Geometry::Rect { .. } => "rect",
            Geometry::QuadrantWindow { .. } => "quadrant",
        };
        GridJson {
            schema_version: SCHEMA_VERSION,
            geometry: geometry.into(),
            width: g.width(),
            height: g.height(),
            boundary: g.boundary.into(),
            h_stride: g.h_stride(),
            v_stride: g.v_stride(),
            h_edges: B64.encode(pack_bits(g.h_bits())),
            v_edges: B64.encode(pack_bits(g.v_bits())),
        }
    }

    pub fn to_grid(&self) -> Result<EdgeGrid> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("grid schema version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version);
        }
        let (w, h) = (self.width, self.height);
        let geometry = match self.geometry.as_str() {
            "torus" => Geometry::Torus { m: w, n: h },
            "rect" => Geometry::Rect { w, h },
            "quadrant" => Geometry::QuadrantWindow { w, h },
            other => bail!("unknown geometry {other:?}"),
        };
        let template = EdgeGrid::empty(geometry)?;
        if template.h_stride() != self.h_stride || template.v_stride() != self.v_stride {
            bail!("strides do not match the geometry");
        }
        let hb = unpack_bits(&B64.decode(&self.h_edges).context("h_edges")?, template.h_bits().len())?;
        let vb = unpack_bits(&B64.decode(&self.v_edges).context("v_edges")?, template.v_bits().len())?;
        Ok(EdgeGrid::from_bits(geometry, self.boundary.clone().into(), hb, vb)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventJson {
    pub time: f64,
    pub column: usize,
    pub row: usize,
    pub direction: String,
    pub class: String,
    pub extent: usize,
    /// `vertical`, `loop` or `free_exit`.
    pub end: String,
}

impl From<&Event> for EventJson {
    fn from(e: &Event) -> Self {
        EventJson {
            time: e.time,
            column: e.spec.x,
            row: e.spec.y,
            direction: match e.spec.dir {
                Direction::Up => "up",
                Direction::Down => "down",
            }
            .into(),
            class: match e.spec.class {
                RateClass::A => "a",
                RateClass::B => "b",
                RateClass::C => "c",
            }
            .into(),
            extent: e.extent,
            end: match e.end {
                JumpEnd::Vertical { .. } => "vertical",
                JumpEnd::Loop => "loop",
                JumpEnd::FreeExit => "free_exit",
            }
            .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub schema_version: u32,
    pub final_time: f64,
    pub status: String,
    pub events: Vec<EventJson>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&s)?)
}

pub fn write_grid(path: &Path, g: &EdgeGrid) -> Result<()> {
    write_json(path, &GridJson::from_grid(g))
}

pub fn read_grid(path: &Path) -> Result<EdgeGrid> {
    read_json::<GridJson>(path)?.to_grid()
}

/// CSV with a header row; every record must match the header length.
pub fn write_csv<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        let r = r.as_ref();
        if r.len() != header.len() {
            bail!("row has {} fields, header has {}", r.len(), header.len());
        }
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest round-trip decimal form, so CSV output is stable across runs.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sixv_core::sampler::{sample_kpz, random_torus};

    #[test]
    fn bit_packing_round_trip() {
        let bits: Vec<u8> = (0..37).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        assert_eq!(unpack_bits(&pack_bits(&bits), 37).unwrap(), bits);
        assert!(unpack_bits(&[0u8; 2], 37).is_err());
    }

    #[test]
    fn grid_json_round_trip() {
        for g in [sample_kpz(0.25, 0.5, 0.5, 13, 7, 0, 3).unwrap(), random_torus(5, 4, 50, 1).unwrap()] {
            let j = GridJson::from_grid(&g);
            let s = serde_json::to_string(&j).unwrap();
            let back: GridJson = serde_json::from_str(&s).unwrap();
            assert_eq!(back.to_grid().unwrap(), g);
        }
    }

    #[test]
    fn grid_json_rejects_bad_version_and_geometry() {
        let g = EdgeGrid::empty(Geometry::Rect { w: 3, h: 2 }).unwrap();
        let mut j = GridJson::from_grid(&g);
        j.schema_version = 99;
        assert!(j.to_grid().is_err());
        let mut j = GridJson::from_grid(&g);
        j.geometry = "sphere".into();
        assert!(j.to_grid().is_err());
        let mut j = GridJson::from_grid(&g);
        j.width = 4;
        assert!(j.to_grid().is_err());
    }
}

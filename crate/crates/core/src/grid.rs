//! Categorical and continuous grids and their on-disk format.
//!
//! Grids are stored row-major with the last axis fastest. By convention the
//! fastest axis is the x direction, the next one y, and (in 3D) the slowest
//! one z.
//!
//! File layout: a text header (magic, version, dimensionality, extents in
//! storage order, element kind) terminated by a `data` line, then the
//! payload. Categorical payloads are whitespace-separated integers;
//! continuous payloads are raw little-endian IEEE-754 f64.

use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &str = "geogan-grid";
const VERSION: u32 = 1;

/// Integer facies grid with a declared facies count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalGrid {
    extents: Vec<usize>,
    facies_count: usize,
    data: Vec<u8>,
}

impl CategoricalGrid {
    pub fn new(extents: &[usize], facies_count: usize, data: Vec<u8>) -> Result<Self> {
        if !(extents.len() == 2 || extents.len() == 3) || extents.iter().any(|&e| e == 0) {
            return Err(Error::BadShape(extents.to_vec()));
        }
        if data.len() != extents.iter().product::<usize>() {
            return Err(Error::Grid(format!(
                "payload length {} does not match extents {:?}",
                data.len(),
                extents
            )));
        }
        if facies_count < 1 || facies_count > u8::MAX as usize {
            return Err(Error::Grid(format!("bad facies count {facies_count}")));
        }
        if let Some(&v) = data.iter().find(|&&v| v as usize >= facies_count) {
            return Err(Error::Grid(format!(
                "facies code {v} out of range for facies count {facies_count}"
            )));
        }
        Ok(CategoricalGrid {
            extents: extents.to_vec(),
            facies_count,
            data,
        })
    }

    pub fn filled(extents: &[usize], facies_count: usize, value: u8) -> Result<Self> {
        let len = extents.iter().product();
        Self::new(extents, facies_count, vec![value; len])
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn facies_count(&self) -> usize {
        self.facies_count
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flatten a per-axis index (storage order, slowest first).
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.extents.len());
        let mut flat = 0;
        for (i, &c) in idx.iter().enumerate() {
            debug_assert!(c < self.extents[i]);
            flat = flat * self.extents[i] + c;
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> u8 {
        self.data[self.flat_index(idx)]
    }
}

/// Continuous-valued grid, same layout conventions.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousGrid {
    extents: Vec<usize>,
    data: Vec<f64>,
}

impl ContinuousGrid {
    pub fn new(extents: &[usize], data: Vec<f64>) -> Result<Self> {
        if !(extents.len() == 2 || extents.len() == 3) || extents.iter().any(|&e| e == 0) {
            return Err(Error::BadShape(extents.to_vec()));
        }
        if data.len() != extents.iter().product::<usize>() {
            return Err(Error::Grid(format!(
                "payload length {} does not match extents {:?}",
                data.len(),
                extents
            )));
        }
        Ok(ContinuousGrid {
            extents: extents.to_vec(),
            data,
        })
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Either payload kind, as read from or written to a grid file.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Categorical(CategoricalGrid),
    Continuous(ContinuousGrid),
}

impl Grid {
    pub fn extents(&self) -> &[usize] {
        match self {
            Grid::Categorical(g) => g.extents(),
            Grid::Continuous(g) => g.extents(),
        }
    }

    pub fn as_categorical(&self) -> Result<&CategoricalGrid> {
        match self {
            Grid::Categorical(g) => Ok(g),
            Grid::Continuous(_) => Err(Error::Grid(
                "expected a categorical grid, found continuous data".into(),
            )),
        }
    }
}

pub fn write_grid(path: &Path, grid: &Grid) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    let extents = grid.extents();
    write!(
        out,
        "{MAGIC} {VERSION}\ndims {}\nextents",
        extents.len()
    )?;
    for e in extents {
        write!(out, " {e}")?;
    }
    out.push(b'\n');
    match grid {
        Grid::Categorical(g) => {
            writeln!(out, "kind categorical {}", g.facies_count())?;
            writeln!(out, "data")?;
            // one text row per fastest-axis run to keep files diffable
            let row = *extents.last().unwrap();
            for (i, v) in g.data().iter().enumerate() {
                if i % row == row - 1 {
                    writeln!(out, "{v}")?;
                } else {
                    write!(out, "{v} ")?;
                }
            }
        }
        Grid::Continuous(g) => {
            writeln!(out, "kind continuous")?;
            writeln!(out, "data")?;
            for v in g.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    };
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<String> {
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos] != b'\n' {
            *pos += 1;
        }
        if *pos >= bytes.len() {
            return Err(bad("truncated header"));
        }
        let line = std::str::from_utf8(&bytes[start..*pos])
            .map_err(|_| bad("non-utf8 header"))?
            .to_string();
        *pos += 1;
        Ok(line)
    };

    let first = next_line(&mut pos)?;
    let mut parts = first.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(bad("missing grid magic"));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing format version"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }

    let dims_line = next_line(&mut pos)?;
    let dims: usize = dims_line
        .strip_prefix("dims ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad("bad dims line"))?;

    let extents_line = next_line(&mut pos)?;
    let extents: Vec<usize> = extents_line
        .strip_prefix("extents")
        .map(|rest| {
            rest.split_whitespace()
                .map(|v| v.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .transpose()
        .ok()
        .flatten()
        .ok_or_else(|| bad("bad extents line"))?;
    if extents.len() != dims {
        return Err(bad("extent count does not match dims"));
    }
    let cells: usize = extents.iter().product();

    let kind_line = next_line(&mut pos)?;
    let kind: Vec<&str> = kind_line.split_whitespace().collect();
    let data_line = next_line(&mut pos)?;
    if data_line.trim() != "data" {
        return Err(bad("missing data separator"));
    }

    match kind.as_slice() {
        ["kind", "categorical", f] => {
            let facies: usize = f.parse().map_err(|_| bad("bad facies count"))?;
            let text = std::str::from_utf8(&bytes[pos..]).map_err(|_| bad("non-utf8 payload"))?;
            let mut data = Vec::with_capacity(cells);
            for tok in text.split_ascii_whitespace() {
                let v: u8 = tok
                    .parse()
                    .map_err(|_| bad(&format!("bad categorical value {tok:?}")))?;
                data.push(v);
            }
            if data.len() != cells {
                return Err(bad(&format!(
                    "expected {cells} values, found {}",
                    data.len()
                )));
            }
            Ok(Grid::Categorical(CategoricalGrid::new(
                &extents, facies, data,
            )?))
        }
        ["kind", "continuous"] => {
            let payload = &bytes[pos..];
            if payload.len() != cells * 8 {
                return Err(bad(&format!(
                    "expected {} payload bytes, found {}",
                    cells * 8,
                    payload.len()
                )));
            }
            let data: Vec<f64> = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Grid::Continuous(ContinuousGrid::new(&extents, data)?))
        }
        _ => Err(bad("bad kind line")),
    }
}

/// 8-bit binary portable graymap of a 2D grid, for quick visual checks.
/// Categorical codes are spread over 0..=255; continuous values are clamped
/// to [0, 1] then scaled.
pub fn write_pgm(path: &Path, grid: &Grid) -> Result<()> {
    let extents = grid.extents();
    if extents.len() != 2 {
        return Err(Error::Grid("pgm export requires a 2D grid".into()));
    }
    let (h, w) = (extents[0], extents[1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    match grid {
        Grid::Categorical(g) => {
            let denom = (g.facies_count() - 1).max(1) as f64;
            out.extend(
                g.data()
                    .iter()
                    .map(|&v| ((v as f64 / denom) * 255.0).round() as u8),
            );
        }
        Grid::Continuous(g) => {
            out.extend(
                g.data()
                    .iter()
                    .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
            );
        }
    }
    fs::write(path, out)?;
    Ok(())
}

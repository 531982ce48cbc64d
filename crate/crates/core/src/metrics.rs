//! Structural quality indicators for categorical grids: facies fractions,
//! the two-point probability function (PF), the two-point cluster /
//! connectivity function (CF), and ensemble summary bands.
//!
//! Pair counting is non-periodic: pairs whose second cell falls outside the
//! grid are dropped from both numerator and denominator. Diagonal lags step
//! one cell along both involved axes per unit lag.

use crate::error::{Error, Result};
use crate::grid::CategoricalGrid;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Lag direction. x is the fastest storage axis, y the next, z the slowest;
/// diagonals combine two axes at 45 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    X,
    Y,
    Z,
    DXy,
    DXz,
    DYz,
}

impl Direction {
    pub const ALL_2D: [Direction; 3] = [Direction::X, Direction::Y, Direction::DXy];
    pub const ALL_3D: [Direction; 6] = [
        Direction::X,
        Direction::Y,
        Direction::Z,
        Direction::DXy,
        Direction::DXz,
        Direction::DYz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Direction::X => "x",
            Direction::Y => "y",
            Direction::Z => "z",
            Direction::DXy => "dxy",
            Direction::DXz => "dxz",
            Direction::DYz => "dyz",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Direction::X),
            "y" => Ok(Direction::Y),
            "z" => Ok(Direction::Z),
            "dxy" | "d_xy" => Ok(Direction::DXy),
            "dxz" | "d_xz" => Ok(Direction::DXz),
            "dyz" | "d_yz" => Ok(Direction::DYz),
            other => Err(Error::Grid(format!("unknown direction {other:?}"))),
        }
    }

    /// Unit step in storage-order axis indices (slowest first).
    fn step(self, dims: usize) -> Result<Vec<usize>> {
        let v = match (dims, self) {
            (2, Direction::X) => vec![0, 1],
            (2, Direction::Y) => vec![1, 0],
            (2, Direction::DXy) => vec![1, 1],
            (3, Direction::X) => vec![0, 0, 1],
            (3, Direction::Y) => vec![0, 1, 0],
            (3, Direction::Z) => vec![1, 0, 0],
            (3, Direction::DXy) => vec![0, 1, 1],
            (3, Direction::DXz) => vec![1, 0, 1],
            (3, Direction::DYz) => vec![1, 1, 0],
            _ => {
                return Err(Error::Grid(format!(
                    "direction {} is invalid for a {dims}D grid",
                    self.name()
                )))
            }
        };
        Ok(v)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One indicator curve: values over lags 0..=max_lag for one facies along
/// one direction. The value at lag 0 equals the facies fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalCurve {
    pub facies: u8,
    pub direction: Direction,
    pub values: Vec<f64>,
}

impl DirectionalCurve {
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }
}

/// Fraction of cells per facies code; the fractions sum to one.
pub fn facies_fractions(grid: &CategoricalGrid) -> Vec<f64> {
    let mut counts = vec![0usize; grid.facies_count()];
    for &v in grid.data() {
        counts[v as usize] += 1;
    }
    let n = grid.len() as f64;
    counts.iter().map(|&c| c as f64 / n).collect()
}

/// Default maximum lag: half the shortest extent involved in the direction.
pub fn default_max_lag(grid: &CategoricalGrid, direction: Direction) -> Result<usize> {
    let step = direction.step(grid.dims())?;
    let mut m = usize::MAX;
    for (axis, &s) in step.iter().enumerate() {
        if s > 0 {
            m = m.min(grid.extents()[axis] / 2);
        }
    }
    Ok(m)
}

fn check_lag(grid: &CategoricalGrid, step: &[usize], max_lag: usize) -> Result<()> {
    for (axis, &s) in step.iter().enumerate() {
        if s > 0 && max_lag * s >= grid.extents()[axis] {
            return Err(Error::OutOfRange(format!(
                "max lag {max_lag} reaches beyond extent {} on axis {axis}",
                grid.extents()[axis]
            )));
        }
    }
    Ok(())
}

/// Count (pairs with both cells in `facies`, all in-bounds pairs) at one lag.
/// With `labels` supplied, the numerator additionally requires both cells to
/// share a connected-component label.
fn pair_counts(
    grid: &CategoricalGrid,
    facies: u8,
    offset: &[usize],
    labels: Option<&[u32]>,
) -> (u64, u64) {
    let ex = grid.extents();
    let data = grid.data();
    let mut hits = 0u64;
    let mut total = 0u64;
    match ex {
        [h, w] => {
            let (oy, ox) = (offset[0], offset[1]);
            for y in 0..h - oy {
                let a0 = y * w;
                let b0 = (y + oy) * w + ox;
                for x in 0..w - ox {
                    total += 1;
                    let (a, b) = (a0 + x, b0 + x);
                    if data[a] == facies && data[b] == facies {
                        match labels {
                            Some(l) => {
                                if l[a] == l[b] {
                                    hits += 1;
                                }
                            }
                            None => hits += 1,
                        }
                    }
                }
            }
        }
        [d, h, w] => {
            let (oz, oy, ox) = (offset[0], offset[1], offset[2]);
            for z in 0..d - oz {
                for y in 0..h - oy {
                    let a0 = (z * h + y) * w;
                    let b0 = ((z + oz) * h + (y + oy)) * w + ox;
                    for x in 0..w - ox {
                        total += 1;
                        let (a, b) = (a0 + x, b0 + x);
                        if data[a] == facies && data[b] == facies {
                            match labels {
                                Some(l) => {
                                    if l[a] == l[b] {
                                        hits += 1;
                                    }
                                }
                                None => hits += 1,
                            }
                        }
                    }
                }
            }
        }
        _ => unreachable!("grids are 2D or 3D"),
    }
    (hits, total)
}

fn curve(
    grid: &CategoricalGrid,
    facies: u8,
    direction: Direction,
    max_lag: usize,
    labels: Option<&[u32]>,
) -> Result<DirectionalCurve> {
    if facies as usize >= grid.facies_count() {
        return Err(Error::Grid(format!(
            "facies {facies} out of range (count {})",
            grid.facies_count()
        )));
    }
    let step = direction.step(grid.dims())?;
    check_lag(grid, &step, max_lag)?;
    let mut values = Vec::with_capacity(max_lag + 1);
    for h in 0..=max_lag {
        let offset: Vec<usize> = step.iter().map(|&s| s * h).collect();
        let (hits, total) = pair_counts(grid, facies, &offset, labels);
        values.push(hits as f64 / total as f64);
    }
    Ok(DirectionalCurve {
        facies,
        direction,
        values,
    })
}

/// Two-point probability function PF(h): probability that two cells
/// separated by lag h along `direction` both belong to `facies`.
pub fn two_point_probability(
    grid: &CategoricalGrid,
    facies: u8,
    direction: Direction,
    max_lag: usize,
) -> Result<DirectionalCurve> {
    curve(grid, facies, direction, max_lag, None)
}

/// Label connected components of one facies phase under face adjacency
/// (4-neighborhood in 2D, 6 in 3D). Cells outside the phase get label 0,
/// components get dense labels 1..=C. Union-find over the flat grid.
pub fn label_components(grid: &CategoricalGrid, facies: u8) -> Vec<u32> {
    let n = grid.len();
    let data = grid.data();
    let mut parent: Vec<u32> = (0..n as u32).collect();

    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    fn union(parent: &mut [u32], a: u32, b: u32) {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra.max(rb) as usize] = ra.min(rb);
        }
    }

    let ex = grid.extents();
    match ex {
        [h, w] => {
            for y in 0..*h {
                for x in 0..*w {
                    let i = y * w + x;
                    if data[i] != facies {
                        continue;
                    }
                    if x > 0 && data[i - 1] == facies {
                        union(&mut parent, i as u32, (i - 1) as u32);
                    }
                    if y > 0 && data[i - w] == facies {
                        union(&mut parent, i as u32, (i - w) as u32);
                    }
                }
            }
        }
        [d, h, w] => {
            for z in 0..*d {
                for y in 0..*h {
                    for x in 0..*w {
                        let i = (z * h + y) * w + x;
                        if data[i] != facies {
                            continue;
                        }
                        if x > 0 && data[i - 1] == facies {
                            union(&mut parent, i as u32, (i - 1) as u32);
                        }
                        if y > 0 && data[i - w] == facies {
                            union(&mut parent, i as u32, (i - w) as u32);
                        }
                        if z > 0 && data[i - h * w] == facies {
                            union(&mut parent, i as u32, (i - h * w) as u32);
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }

    let mut labels = vec![0u32; n];
    let mut next = 0u32;
    let mut dense: Vec<u32> = vec![0; n];
    for i in 0..n {
        if data[i] != facies {
            continue;
        }
        let root = find(&mut parent, i as u32) as usize;
        if dense[root] == 0 {
            next += 1;
            dense[root] = next;
        }
        labels[i] = dense[root];
    }
    labels
}

/// Connectivity (two-point cluster) function CF(h): probability that two
/// cells at lag h both belong to `facies` and lie in the same connected
/// component, over all in-bounds pairs.
pub fn connectivity_function(
    grid: &CategoricalGrid,
    facies: u8,
    direction: Direction,
    max_lag: usize,
) -> Result<DirectionalCurve> {
    let labels = label_components(grid, facies);
    curve(grid, facies, direction, max_lag, Some(&labels))
}

/// Pointwise mean, minimum and maximum over an ensemble of curves sharing
/// facies, direction, and lag count.
pub fn ensemble_band(
    curves: &[DirectionalCurve],
) -> Result<(DirectionalCurve, DirectionalCurve, DirectionalCurve)> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Grid("empty curve set".into()))?;
    for c in curves {
        if c.facies != first.facies
            || c.direction != first.direction
            || c.values.len() != first.values.len()
        {
            return Err(Error::Grid(
                "curves in a band must share facies, direction and lags".into(),
            ));
        }
    }
    let lags = first.values.len();
    let mut mean = vec![0.0; lags];
    let mut min = vec![f64::INFINITY; lags];
    let mut max = vec![f64::NEG_INFINITY; lags];
    for c in curves {
        for (i, &v) in c.values.iter().enumerate() {
            mean[i] += v;
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
    }
    mean.iter_mut().for_each(|v| *v /= curves.len() as f64);
    let mk = |values: Vec<f64>| DirectionalCurve {
        facies: first.facies,
        direction: first.direction,
        values,
    };
    Ok((mk(mean), mk(min), mk(max)))
}

/// CSV with columns lag,value.
pub fn write_curve_csv(path: &Path, curve: &DirectionalCurve) -> Result<()> {
    let mut out = String::from("lag,value\n");
    for (lag, v) in curve.values.iter().enumerate() {
        out.push_str(&format!("{lag},{v}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// CSV with columns lag,mean,min,max.
pub fn write_band_csv(
    path: &Path,
    band: &(DirectionalCurve, DirectionalCurve, DirectionalCurve),
) -> Result<()> {
    let mut out: Vec<u8> = b"lag,mean,min,max\n".to_vec();
    for lag in 0..band.0.values.len() {
        writeln!(
            out,
            "{lag},{},{},{}",
            band.0.values[lag], band.1.values[lag], band.2.values[lag]
        )?;
    }
    fs::write(path, out)?;
    Ok(())
}

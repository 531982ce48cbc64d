//! Steady-state saturated groundwater flow on a 2D cell-centered grid.
//!
//! Conservative finite-volume discretization with harmonic-mean inter-cell
//! conductances. Fixed heads are imposed on the left/right domain faces
//! (half-cell resistance to the face) and optionally at individual cells;
//! top and bottom are no-flow. Wells enter as source terms. The symmetric
//! positive-definite system is solved by a banded Cholesky factorization
//! with iterative refinement down to a 1e-10 relative residual.

use crate::error::{Error, Result};
use crate::grid::CategoricalGrid;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Relative residual the solver must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Well {
    pub ix: usize,
    pub iy: usize,
    /// Volumetric rate in m^3/s; extraction is negative.
    pub rate: f64,
}

/// Model definition: conductivities, geometry, boundaries, wells and
/// observation points.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    pub nx: usize,
    pub ny: usize,
    /// Cell size (m) along x and y.
    pub dx: f64,
    pub dy: f64,
    /// Aquifer thickness (m).
    pub thickness: f64,
    /// Cell conductivity (m/s), row-major iy * nx + ix.
    pub k: Vec<f64>,
    /// Head imposed on the left domain face.
    pub left_head: Option<f64>,
    /// Head imposed on the right domain face.
    pub right_head: Option<f64>,
    /// Heads imposed exactly at individual cells.
    pub fixed_cells: Vec<(usize, usize, f64)>,
    pub wells: Vec<Well>,
    /// Observation cells (ix, iy); output order follows this list.
    pub observations: Vec<(usize, usize)>,
}

impl FlowModel {
    /// Uniform-geometry model with fixed heads derived from a lateral
    /// gradient: left face at gradient * nx * dx, right face at 0.
    pub fn with_gradient(nx: usize, ny: usize, dx: f64, dy: f64, thickness: f64, k: Vec<f64>, gradient: f64) -> Self {
        FlowModel {
            nx,
            ny,
            dx,
            dy,
            thickness,
            k,
            left_head: Some(gradient * nx as f64 * dx),
            right_head: Some(0.0),
            fixed_cells: Vec::new(),
            wells: Vec::new(),
            observations: Vec::new(),
        }
    }

    pub fn cell(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::BadShape(vec![self.ny, self.nx]));
        }
        if self.k.len() != self.nx * self.ny {
            return Err(Error::Grid(format!(
                "conductivity field has {} cells, grid has {}",
                self.k.len(),
                self.nx * self.ny
            )));
        }
        if self.k.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
            return Err(Error::OutOfRange("conductivity must be positive".into()));
        }
        if self.dx <= 0.0 || self.dy <= 0.0 || self.thickness <= 0.0 {
            return Err(Error::OutOfRange("cell size and thickness must be positive".into()));
        }
        for w in &self.wells {
            if w.ix >= self.nx || w.iy >= self.ny {
                return Err(Error::OutOfRange(format!(
                    "well at ({}, {}) outside {}x{} grid",
                    w.ix, w.iy, self.nx, self.ny
                )));
            }
        }
        for &(ix, iy, _) in &self.fixed_cells {
            if ix >= self.nx || iy >= self.ny {
                return Err(Error::OutOfRange(format!(
                    "fixed-head cell ({ix}, {iy}) outside grid"
                )));
            }
        }
        for &(ix, iy) in &self.observations {
            if ix >= self.nx || iy >= self.ny {
                return Err(Error::OutOfRange(format!(
                    "observation ({ix}, {iy}) outside grid"
                )));
            }
        }
        if self.left_head.is_none() && self.right_head.is_none() && self.fixed_cells.is_empty() {
            return Err(Error::Singular(
                "no fixed-head faces or cells; the system has no unique solution".into(),
            ));
        }
        Ok(())
    }
}

/// Solved heads (m) per cell, row-major like the conductivity field.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadField {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl HeadField {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }
}

/// Pointwise facies-to-conductivity lookup; `mapping[facies]` is K in m/s.
pub fn k_field_from_facies(grid: &CategoricalGrid, mapping: &[f64]) -> Result<Vec<f64>> {
    if grid.dims() != 2 {
        return Err(Error::Grid("flow solver requires a 2D grid".into()));
    }
    if mapping.len() < grid.facies_count() {
        return Err(Error::Grid(format!(
            "mapping covers {} facies, grid declares {}",
            mapping.len(),
            grid.facies_count()
        )));
    }
    Ok(grid.data().iter().map(|&f| mapping[f as usize]).collect())
}

/// Harmonic-mean conductance between two cells across a shared face of
/// width `width`, thickness `b`, and center distance `dist`.
#[inline]
fn conductance(width: f64, b: f64, dist: f64, k1: f64, k2: f64) -> f64 {
    width * b / (dist / (2.0 * k1) + dist / (2.0 * k2))
}

/// Symmetric banded matrix, lower band storage: `band[i * (hw + 1) + d]`
/// holds A[i, i - d].
struct Banded {
    n: usize,
    hw: usize,
    band: Vec<f64>,
}

impl Banded {
    fn zeros(n: usize, hw: usize) -> Self {
        Banded {
            n,
            hw,
            band: vec![0.0; n * (hw + 1)],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        if j > i {
            return self.at(j, i);
        }
        if i - j > self.hw {
            0.0
        } else {
            self.band[i * (self.hw + 1) + (i - j)]
        }
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(hi - lo <= self.hw);
        self.band[hi * (self.hw + 1) + (hi - lo)] += v;
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.band[hi * (self.hw + 1) + (hi - lo)] = v;
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.hw);
            for j in lo..=i {
                let a = self.band[i * (self.hw + 1) + (i - j)];
                out[i] += a * x[j];
                if i != j {
                    out[j] += a * x[i];
                }
            }
        }
    }

    /// In-place banded Cholesky: A = L L^T with L in the same layout.
    fn cholesky(mut self) -> Result<Banded> {
        let w = self.hw + 1;
        for j in 0..self.n {
            let lo = j.saturating_sub(self.hw);
            let mut d = self.band[j * w];
            for k in lo..j {
                let l = self.band[j * w + (j - k)];
                d -= l * l;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Singular(format!(
                    "non-positive pivot {d} at row {j}"
                )));
            }
            let dj = d.sqrt();
            self.band[j * w] = dj;
            let hi = (j + self.hw + 1).min(self.n);
            for i in j + 1..hi {
                let mut s = self.band[i * w + (i - j)];
                let klo = lo.max(i.saturating_sub(self.hw));
                for k in klo..j {
                    s -= self.band[i * w + (i - k)] * self.band[j * w + (j - k)];
                }
                self.band[i * w + (i - j)] = s / dj;
            }
        }
        Ok(self)
    }

    /// Solve L L^T x = b given the factored band.
    fn solve_factored(&self, b: &[f64]) -> Vec<f64> {
        let w = self.hw + 1;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.hw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.band[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.band[i * w];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.hw + 1).min(self.n);
            let mut s = y[i];
            for k in i + 1..hi {
                s -= self.band[k * w + (k - i)] * y[k];
            }
            y[i] = s / self.band[i * w];
        }
        y
    }
}

struct Assembled {
    a: Banded,
    rhs: Vec<f64>,
}

fn assemble(model: &FlowModel) -> Assembled {
    let (nx, ny) = (model.nx, model.ny);
    let n = nx * ny;
    let b = model.thickness;
    let mut a = Banded::zeros(n, nx);
    let mut rhs = vec![0.0; n];

    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            let ki = model.k[i];
            if ix + 1 < nx {
                let j = i + 1;
                let t = conductance(model.dy, b, model.dx, ki, model.k[j]);
                a.add(i, i, t);
                a.add(j, j, t);
                a.add(i, j, -t);
            }
            if iy + 1 < ny {
                let j = i + nx;
                let t = conductance(model.dx, b, model.dy, ki, model.k[j]);
                a.add(i, i, t);
                a.add(j, j, t);
                a.add(i, j, -t);
            }
            if ix == 0 {
                if let Some(h) = model.left_head {
                    // half-cell resistance to the face
                    let t = conductance(model.dy, b, model.dx, ki, ki) * 2.0;
                    a.add(i, i, t);
                    rhs[i] += t * h;
                }
            }
            if ix == nx - 1 {
                if let Some(h) = model.right_head {
                    let t = conductance(model.dy, b, model.dx, ki, ki) * 2.0;
                    a.add(i, i, t);
                    rhs[i] += t * h;
                }
            }
        }
    }

    for w in &model.wells {
        rhs[model.cell(w.ix, w.iy)] += w.rate;
    }

    // impose fixed-head cells exactly, keeping the matrix symmetric
    for &(ix, iy, h) in &model.fixed_cells {
        let i = model.cell(ix, iy);
        let lo = i.saturating_sub(nx);
        let hi = (i + nx + 1).min(n);
        for j in lo..hi {
            if j == i {
                continue;
            }
            let aij = a.at(i, j);
            if aij != 0.0 {
                rhs[j] -= aij * h;
                a.set(i, j, 0.0);
            }
        }
        a.set(i, i, 1.0);
        rhs[i] = h;
    }

    Assembled { a, rhs }
}

/// Solve for heads. The residual ||Ax - b|| is driven below
/// `RESIDUAL_TOL * ||b||` by iterative refinement on the Cholesky factor;
/// failure to converge is an error.
pub fn solve_heads(model: &FlowModel) -> Result<HeadField> {
    model.validate()?;
    let Assembled { a, rhs } = assemble(model);
    let n = rhs.len();
    let factor = {
        // keep the original matrix for residual checks
        let copy = Banded {
            n: a.n,
            hw: a.hw,
            band: a.band.clone(),
        };
        copy.cholesky()?
    };
    let mut x = factor.solve_factored(&rhs);
    let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut work = vec![0.0; n];
    for _ in 0..8 {
        a.mul(&x, &mut work);
        let mut res = vec![0.0; n];
        let mut norm_r = 0.0;
        for i in 0..n {
            res[i] = rhs[i] - work[i];
            norm_r += res[i] * res[i];
        }
        if norm_r.sqrt() <= RESIDUAL_TOL * norm_b {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("head field".into()));
            }
            return Ok(HeadField {
                nx: model.nx,
                ny: model.ny,
                values: x,
            });
        }
        let dx = factor.solve_factored(&res);
        x.iter_mut().zip(&dx).for_each(|(v, d)| *v += d);
    }
    Err(Error::NoConvergence(format!(
        "residual above {RESIDUAL_TOL} * ||b|| after refinement"
    )))
}

/// Heads at the model's observation cells, in list order.
pub fn observe(heads: &HeadField, model: &FlowModel) -> Vec<f64> {
    model
        .observations
        .iter()
        .map(|&(ix, iy)| heads.at(ix, iy))
        .collect()
}

/// Regular lattice of observation cells: `count` points per axis starting
/// at `start` with spacing `step`, row-major (y outer, x inner).
pub fn lattice_observations(start: usize, step: usize, count: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(count * count);
    for j in 0..count {
        for i in 0..count {
            out.push((start + i * step, start + j * step));
        }
    }
    out
}

/// Net inflow through the fixed-head boundaries plus wells, and the largest
/// single boundary flux magnitude. For a converged solution the net closes
/// to zero relative to the largest flux.
pub fn boundary_flux_balance(model: &FlowModel, heads: &HeadField) -> (f64, f64) {
    let b = model.thickness;
    let mut net = 0.0;
    let mut max_abs: f64 = 0.0;
    for iy in 0..model.ny {
        if let Some(h) = model.left_head {
            let i = model.cell(0, iy);
            let t = conductance(model.dy, b, model.dx, model.k[i], model.k[i]) * 2.0;
            let q = t * (h - heads.values[i]);
            net += q;
            max_abs = max_abs.max(q.abs());
        }
        if let Some(h) = model.right_head {
            let i = model.cell(model.nx - 1, iy);
            let t = conductance(model.dy, b, model.dx, model.k[i], model.k[i]) * 2.0;
            let q = t * (h - heads.values[i]);
            net += q;
            max_abs = max_abs.max(q.abs());
        }
    }
    for w in &model.wells {
        net += w.rate;
        max_abs = max_abs.max(w.rate.abs());
    }
    (net, max_abs)
}

/// Heads as CSV rows ix,iy,head.
pub fn write_heads_csv(path: &Path, heads: &HeadField) -> Result<()> {
    let mut out: Vec<u8> = b"ix,iy,head\n".to_vec();
    for iy in 0..heads.ny {
        for ix in 0..heads.nx {
            writeln!(out, "{ix},{iy},{}", heads.at(ix, iy))?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Observations as CSV rows index,ix,iy,head.
pub fn write_observations_csv(path: &Path, model: &FlowModel, values: &[f64]) -> Result<()> {
    let mut out: Vec<u8> = b"index,ix,iy,head\n".to_vec();
    for (i, (&(ix, iy), v)) in model.observations.iter().zip(values).enumerate() {
        writeln!(out, "{i},{ix},{iy},{v}")?;
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn uniform_model(nx: usize, ny: usize, k: f64, gradient: f64) -> FlowModel {
        FlowModel::with_gradient(nx, ny, 1.0, 1.0, 1.0, vec![k; nx * ny], gradient)
    }

    /// Dense Gaussian elimination with partial pivoting, the oracle for the
    /// banded Cholesky path.
    fn dense_solve(model: &FlowModel) -> Vec<f64> {
        let Assembled { a, rhs } = assemble(model);
        let n = rhs.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = a.at(i, j);
            }
        }
        let mut b = rhs;
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| {
                    m[p * n + col]
                        .abs()
                        .partial_cmp(&m[q * n + col].abs())
                        .unwrap()
                })
                .unwrap();
            if piv != col {
                for j in 0..n {
                    m.swap(col * n + j, piv * n + j);
                }
                b.swap(col, piv);
            }
            let d = m[col * n + col];
            for row in col + 1..n {
                let f = m[row * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    m[row * n + j] -= f * m[col * n + j];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= m[i * n + j] * x[j];
            }
            x[i] = s / m[i * n + i];
        }
        x
    }

    #[test]
    fn k_field_mapping() {
        let g = CategoricalGrid::new(&[2, 2], 2, vec![1, 1, 1, 1]).unwrap();
        let k = k_field_from_facies(&g, &[1e-4, 1e-2]).unwrap();
        assert!(k.iter().all(|&v| v == 1e-2));

        let mixed = CategoricalGrid::new(&[2, 2], 2, vec![0, 1, 1, 0]).unwrap();
        let k = k_field_from_facies(&mixed, &[1e-4, 1e-2]).unwrap();
        assert_eq!(k.iter().filter(|&&v| v == 1e-2).count(), 2);
        // mappings that only differ on absent facies agree
        let k2 = k_field_from_facies(&mixed, &[1e-4, 1e-2, 5.0]).unwrap();
        assert_eq!(k, k2);

        let tri = CategoricalGrid::new(&[1, 2], 3, vec![0, 2]).unwrap();
        assert!(k_field_from_facies(&tri, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn uniform_k_gives_exactly_linear_head() {
        // left face 1.25 m, right face 0 m over 125 columns of 1 m: the
        // head profile is linear with gradient 0.01 between cell centers.
        let model = uniform_model(125, 125, 1e-3, 0.01);
        assert_eq!(model.left_head, Some(1.25));
        let heads = solve_heads(&model).unwrap();
        for iy in 0..125 {
            for ix in 0..125 {
                let expected = 1.25 - 0.01 * (ix as f64 + 0.5);
                assert!(
                    (heads.at(ix, iy) - expected).abs() < 1e-8,
                    "cell ({ix},{iy}): {} vs {expected}",
                    heads.at(ix, iy)
                );
            }
        }
    }

    #[test]
    fn two_zone_series_flux_matches_analytic() {
        // left half K1, right half K2: the exact discrete flux equals the
        // series-resistance solution because harmonic means are exact in 1D.
        let (nx, ny) = (40, 8);
        let (k1, k2) = (1e-2, 1e-4);
        let mut k = vec![k1; nx * ny];
        for iy in 0..ny {
            for ix in nx / 2..nx {
                k[iy * nx + ix] = k2;
            }
        }
        let model = FlowModel::with_gradient(nx, ny, 1.0, 1.0, 1.0, k, 0.01);
        let heads = solve_heads(&model).unwrap();
        let dh = model.left_head.unwrap() - model.right_head.unwrap();
        // per-row resistance: nx/2 cells of each material, 1 m wide
        let resistance = (nx / 2) as f64 / k1 + (nx / 2) as f64 / k2;
        let analytic_per_row = dh / resistance;
        for iy in 0..ny {
            let i = model.cell(0, iy);
            let t = conductance(1.0, 1.0, 1.0, k1, k1) * 2.0;
            let q = t * (model.left_head.unwrap() - heads.values[i]);
            assert!(
                ((q - analytic_per_row) / analytic_per_row).abs() < 1e-10,
                "row {iy}: {q} vs {analytic_per_row}"
            );
        }
    }

    #[test]
    fn well_mass_balance_closes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (nx, ny) = (125, 125);
        let k: Vec<f64> = (0..nx * ny)
            .map(|_| if rng.gen_bool(0.3) { 1e-2 } else { 1e-4 })
            .collect();
        let mut model = FlowModel::with_gradient(nx, ny, 1.0, 1.0, 1.0, k, 0.01);
        model.wells.push(Well {
            ix: 62,
            iy: 62,
            rate: -0.001,
        });
        let heads = solve_heads(&model).unwrap();
        let (net, max_abs) = boundary_flux_balance(&model, &heads);
        assert!(net.abs() <= 1e-8 * max_abs, "net {net}, max {max_abs}");
    }

    #[test]
    fn matches_dense_solver_on_small_grids() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for &(nx, ny) in &[(7usize, 9usize), (30, 30)] {
            let k: Vec<f64> = (0..nx * ny)
                .map(|_| 10f64.powf(rng.gen_range(-4.0..-2.0)))
                .collect();
            let mut model = FlowModel::with_gradient(nx, ny, 1.0, 1.0, 1.0, k, 0.01);
            model.wells.push(Well {
                ix: nx / 2,
                iy: ny / 2,
                rate: -1e-4,
            });
            let fast = solve_heads(&model).unwrap();
            let slow = dense_solve(&model);
            for (a, b) in fast.values.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn maximum_principle_without_wells() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (nx, ny) = (20, 15);
        let k: Vec<f64> = (0..nx * ny)
            .map(|_| 10f64.powf(rng.gen_range(-5.0..-2.0)))
            .collect();
        let model = FlowModel::with_gradient(nx, ny, 1.0, 1.0, 1.0, k, 0.01);
        let heads = solve_heads(&model).unwrap();
        let (lo, hi) = (model.right_head.unwrap(), model.left_head.unwrap());
        assert!(heads.values.iter().all(|&h| h >= lo - 1e-12 && h <= hi + 1e-12));
    }

    #[test]
    fn heads_invariant_under_k_scaling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let (nx, ny) = (12, 10);
        let k: Vec<f64> = (0..nx * ny)
            .map(|_| 10f64.powf(rng.gen_range(-4.0..-2.0)))
            .collect();
        let m1 = FlowModel::with_gradient(nx, ny, 1.0, 1.0, 1.0, k.clone(), 0.01);
        let m2 = FlowModel::with_gradient(
            nx,
            ny,
            1.0,
            1.0,
            1.0,
            k.iter().map(|v| v * 37.5).collect(),
            0.01,
        );
        let h1 = solve_heads(&m1).unwrap();
        let h2 = solve_heads(&m2).unwrap();
        for (a, b) in h1.values.iter().zip(&h2.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn interior_mass_balance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let (nx, ny) = (33, 33);
        let k: Vec<f64> = (0..nx * ny)
            .map(|_| if rng.gen_bool(0.3) { 1e-2 } else { 1e-4 })
            .collect();
        let mut model = FlowModel::with_gradient(nx, ny, 1.0, 1.0, 1.0, k, 0.01);
        model.wells.push(Well {
            ix: 16,
            iy: 16,
            rate: -1e-3,
        });
        let heads = solve_heads(&model).unwrap();
        let b = model.thickness;
        let mut max_flux: f64 = 0.0;
        let mut fluxes = vec![0.0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let i = model.cell(ix, iy);
                let mut net = 0.0;
                let mut add = |j: usize, width: f64, dist: f64| {
                    let t = conductance(width, b, dist, model.k[i], model.k[j]);
                    let q = t * (heads.values[j] - heads.values[i]);
                    net += q;
                    max_flux = max_flux.max(q.abs());
                };
                if ix > 0 {
                    add(i - 1, model.dy, model.dx);
                }
                if ix + 1 < nx {
                    add(i + 1, model.dy, model.dx);
                }
                if iy > 0 {
                    add(i - nx, model.dx, model.dy);
                }
                if iy + 1 < ny {
                    add(i + nx, model.dx, model.dy);
                }
                fluxes[i] = net;
            }
        }
        for iy in 1..ny - 1 {
            for ix in 1..nx - 1 {
                let i = model.cell(ix, iy);
                let well: f64 = model
                    .wells
                    .iter()
                    .filter(|w| w.ix == ix && w.iy == iy)
                    .map(|w| w.rate)
                    .sum();
                assert!(
                    (fluxes[i] + well).abs() <= 1e-8 * max_flux,
                    "cell ({ix},{iy}) net {} well {well}",
                    fluxes[i]
                );
            }
        }
    }

    #[test]
    fn observe_order_and_fixed_cells() {
        let mut model = uniform_model(9, 9, 1e-3, 0.01);
        model.fixed_cells.push((4, 4, 0.5));
        model.observations = vec![(4, 4), (0, 0), (8, 8)];
        let heads = solve_heads(&model).unwrap();
        let obs = observe(&heads, &model);
        // the fixed-head cell reads back the imposed head exactly
        assert_eq!(obs[0], 0.5);

        let mut permuted = model.clone();
        permuted.observations = vec![(8, 8), (4, 4), (0, 0)];
        let obs2 = observe(&heads, &permuted);
        assert_eq!(obs2, vec![obs[2], obs[0], obs[1]]);
    }

    #[test]
    fn lattice_has_49_points() {
        let lat = lattice_observations(16, 15, 7);
        assert_eq!(lat.len(), 49);
        assert_eq!(lat[0], (16, 16));
        assert_eq!(lat[48], (106, 106));
        // row-major ordering
        assert_eq!(lat[1], (31, 16));
    }

    #[test]
    fn no_dirichlet_is_singular() {
        let mut model = uniform_model(5, 5, 1e-3, 0.01);
        model.left_head = None;
        model.right_head = None;
        assert!(matches!(solve_heads(&model), Err(Error::Singular(_))));
    }
}

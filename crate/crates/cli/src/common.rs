//! Shared loading and parsing helpers for the subcommands.

use crate::config::Section;
use crate::err::{CliError, CliResult, Ctx};
use geogan_core::flow::{lattice_observations, FlowModel, Well};
use geogan_core::grid::{read_grid, CategoricalGrid, Grid};
use geogan_core::mcmc::ConditioningPoint;
use geogan_core::simulate::{PostMode, PostprocessSpec};
use std::path::Path;

pub fn load_categorical(path: &Path) -> CliResult<CategoricalGrid> {
    match read_grid(path).cfg()? {
        Grid::Categorical(g) => Ok(g),
        Grid::Continuous(_) => Err(CliError::Config(format!(
            "{} holds continuous data, expected a categorical grid",
            path.display()
        ))),
    }
}

/// Flow model from a `[flow]` section. The conductivity field is
/// initialized to 1.0 everywhere; callers replace it from a facies grid.
pub fn flow_from_section(mut s: Section) -> CliResult<(FlowModel, Vec<f64>)> {
    let nx: usize = s.req("nx")?;
    let ny: usize = s.req("ny")?;
    let cell_size: f64 = s.or("cell_size", 1.0)?;
    let thickness: f64 = s.or("thickness", 1.0)?;
    let gradient: Option<f64> = s.opt("gradient")?;
    let left_head: Option<f64> = s.opt("left_head")?;
    let right_head: Option<f64> = s.opt("right_head")?;
    let k_facies: Vec<f64> = s.list("k_facies")?.ok_or_else(|| {
        CliError::Config("[flow] missing required key k_facies (one K per facies code)".into())
    })?;

    let mut model = FlowModel {
        nx,
        ny,
        dx: cell_size,
        dy: cell_size,
        thickness,
        k: vec![1.0; nx * ny],
        left_head: None,
        right_head: None,
        fixed_cells: Vec::new(),
        wells: Vec::new(),
        observations: Vec::new(),
    };
    match (gradient, left_head, right_head) {
        (Some(g), None, None) => {
            model.left_head = Some(g * nx as f64 * cell_size);
            model.right_head = Some(0.0);
        }
        (None, l, r) if l.is_some() || r.is_some() => {
            model.left_head = l;
            model.right_head = r;
        }
        (None, None, None) => {
            return Err(CliError::Config(
                "[flow] needs either gradient or explicit left_head/right_head".into(),
            ))
        }
        _ => {
            return Err(CliError::Config(
                "[flow] gradient and explicit face heads are mutually exclusive".into(),
            ))
        }
    }

    for w in s.take_all("well") {
        let toks: Vec<&str> = w.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(CliError::Config(format!(
                "[flow] well wants `ix iy rate`, got {w:?}"
            )));
        }
        model.wells.push(Well {
            ix: toks[0]
                .parse()
                .map_err(|_| CliError::Config(format!("[flow] bad well ix {w:?}")))?,
            iy: toks[1]
                .parse()
                .map_err(|_| CliError::Config(format!("[flow] bad well iy {w:?}")))?,
            rate: toks[2]
                .parse()
                .map_err(|_| CliError::Config(format!("[flow] bad well rate {w:?}")))?,
        });
    }

    if let Some(lat) = s.list::<usize>("obs_lattice")? {
        if lat.len() != 3 {
            return Err(CliError::Config(
                "[flow] obs_lattice wants `start step count`".into(),
            ));
        }
        model.observations = lattice_observations(lat[0], lat[1], lat[2]);
    }
    for o in s.take_all("obs") {
        let toks: Vec<&str> = o.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(CliError::Config(format!(
                "[flow] obs wants `ix iy`, got {o:?}"
            )));
        }
        model.observations.push((
            toks[0]
                .parse()
                .map_err(|_| CliError::Config(format!("[flow] bad obs {o:?}")))?,
            toks[1]
                .parse()
                .map_err(|_| CliError::Config(format!("[flow] bad obs {o:?}")))?,
        ));
    }
    s.finish()?;
    model.validate().cfg()?;
    Ok((model, k_facies))
}

/// Post-processing settings shared by generate and invert: a median kernel
/// extent (0 disables), thresholds, and an optional centered crop.
pub fn postprocess(
    dims: usize,
    median: usize,
    thresholds: Vec<f64>,
    crop: Option<Vec<usize>>,
    rank_values: Option<Vec<f64>>,
) -> CliResult<PostprocessSpec> {
    let spec = PostprocessSpec {
        median_kernel: if median > 0 {
            Some(vec![median; dims])
        } else {
            None
        },
        mode: match rank_values {
            Some(vals) => PostMode::Rank(vals),
            None => PostMode::Threshold(thresholds),
        },
        crop,
    };
    spec.validate(dims).cfg()?;
    Ok(spec)
}

/// Observed heads from a CSV written by the flow or truth tooling: header
/// line, then rows whose last column is the head value.
pub fn load_heads_csv(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let value = line.rsplit(',').next().unwrap_or_default();
        out.push(value.parse::<f64>().map_err(|_| {
            CliError::Config(format!(
                "{} line {}: bad head value {value:?}",
                path.display(),
                i + 1
            ))
        })?);
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "{} holds no observations",
            path.display()
        )));
    }
    Ok(out)
}

/// Conditioning points from CSV rows `ix,iy,facies` (with a header line).
pub fn load_conditioning_csv(path: &Path) -> CliResult<Vec<ConditioningPoint>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split(',').collect();
        if toks.len() != 3 {
            return Err(CliError::Config(format!(
                "{} line {}: want ix,iy,facies",
                path.display(),
                i + 1
            )));
        }
        let ix: usize = toks[0].trim().parse().map_err(|_| {
            CliError::Config(format!("{} line {}: bad ix", path.display(), i + 1))
        })?;
        let iy: usize = toks[1].trim().parse().map_err(|_| {
            CliError::Config(format!("{} line {}: bad iy", path.display(), i + 1))
        })?;
        let facies: u8 = toks[2].trim().parse().map_err(|_| {
            CliError::Config(format!("{} line {}: bad facies", path.display(), i + 1))
        })?;
        // grid storage order is [iy, ix]
        out.push(ConditioningPoint {
            idx: vec![iy, ix],
            facies,
        });
    }
    Ok(out)
}

pub fn parse_comma_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|tok| tok.trim().parse::<T>())
        .collect::<Result<Vec<T>, _>>()
        .map_err(|_| CliError::Config(format!("bad {what} list {s:?}")))
}

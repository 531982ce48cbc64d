//! `geogan metrics`: structural indicators for a realization ensemble
//! against a training-image reference.

use crate::common::{load_categorical, parse_comma_list};
use crate::err::{CliError, CliResult, Ctx};
use geogan_core::grid::CategoricalGrid;
use geogan_core::metrics::{
    connectivity_function, default_max_lag, ensemble_band, facies_fractions,
    two_point_probability, write_band_csv, write_curve_csv, Direction, DirectionalCurve,
};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(clap::Args, Debug)]
pub struct MetricsArgs {
    /// Directory of realization .grid files.
    #[arg(long, value_name = "DIR")]
    pub input_dir: PathBuf,
    /// Training-image grid for the reference curves.
    #[arg(long)]
    pub ti: PathBuf,
    /// Comma-separated facies codes (default: every facies of the TI).
    #[arg(long)]
    pub facies: Option<String>,
    /// Comma-separated directions among x,y,z,dxy,dxz,dyz
    /// (default: all valid for the grid dimensionality).
    #[arg(long)]
    pub directions: Option<String>,
    /// Largest lag; defaults to half the realization extent.
    #[arg(long)]
    pub max_lag: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

fn list_realizations(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "grid"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no .grid files in {}",
            dir.display()
        )));
    }
    Ok(paths)
}

type Indicator = fn(&CategoricalGrid, u8, Direction, usize) -> geogan_core::Result<DirectionalCurve>;

pub fn run(args: &MetricsArgs) -> CliResult<()> {
    let ti = load_categorical(&args.ti)?;
    let paths = list_realizations(&args.input_dir)?;
    let mut realizations = Vec::with_capacity(paths.len());
    for p in &paths {
        let g = load_categorical(p)?;
        if let Some(first) = realizations.first() {
            let first: &CategoricalGrid = first;
            if g.extents() != first.extents() {
                return Err(CliError::Config(format!(
                    "mixed grid shapes: {} is {:?}, expected {:?}",
                    p.display(),
                    g.extents(),
                    first.extents()
                )));
            }
        }
        if g.facies_count() != ti.facies_count() || g.dims() != ti.dims() {
            return Err(CliError::Config(format!(
                "{} does not match the TI facies count / dimensionality",
                p.display()
            )));
        }
        realizations.push(g);
    }

    let facies: Vec<u8> = match &args.facies {
        Some(f) => parse_comma_list(f, "facies")?,
        None => (0..ti.facies_count() as u8).collect(),
    };
    let directions: Vec<Direction> = match &args.directions {
        Some(d) => d
            .split(',')
            .map(|tok| Direction::parse(tok.trim()))
            .collect::<geogan_core::Result<_>>()
            .cfg()?,
        None => match ti.dims() {
            2 => Direction::ALL_2D.to_vec(),
            _ => Direction::ALL_3D.to_vec(),
        },
    };
    let max_lag = match args.max_lag {
        Some(l) => l,
        None => directions
            .iter()
            .map(|&d| default_max_lag(&realizations[0], d))
            .collect::<geogan_core::Result<Vec<_>>>()
            .cfg()?
            .into_iter()
            .min()
            .unwrap_or(0),
    };

    let curves_dir = args.out_dir.join("curves");
    std::fs::create_dir_all(&curves_dir).run()?;

    // fractions per realization plus the TI reference
    let mut fractions: Vec<u8> = b"realization,facies,fraction\n".to_vec();
    for (f, v) in facies_fractions(&ti).iter().enumerate() {
        writeln!(fractions, "ti,{f},{v}").run()?;
    }
    for (i, g) in realizations.iter().enumerate() {
        for (f, v) in facies_fractions(g).iter().enumerate() {
            writeln!(fractions, "r{i:03},{f},{v}").run()?;
        }
    }
    std::fs::write(args.out_dir.join("fractions.csv"), fractions).run()?;

    let indicators: [(&str, Indicator); 2] = [
        ("pf", two_point_probability as Indicator),
        ("cf", connectivity_function as Indicator),
    ];
    for (tag, compute) in indicators {
        let mut summary: Vec<u8> = b"facies,direction,lag,mean,min,max\n".to_vec();
        for &f in &facies {
            for &dir in &directions {
                let ti_curve = compute(&ti, f, dir, max_lag).run()?;
                write_curve_csv(
                    &curves_dir.join(format!("ti_{tag}_f{f}_{dir}.csv")),
                    &ti_curve,
                )
                .run()?;
                let mut ens = Vec::with_capacity(realizations.len());
                for (i, g) in realizations.iter().enumerate() {
                    let c = compute(g, f, dir, max_lag).run()?;
                    write_curve_csv(
                        &curves_dir.join(format!("r{i:03}_{tag}_f{f}_{dir}.csv")),
                        &c,
                    )
                    .run()?;
                    ens.push(c);
                }
                let band = ensemble_band(&ens).run()?;
                write_band_csv(
                    &args.out_dir.join(format!("band_{tag}_f{f}_{dir}.csv")),
                    &band,
                )
                .run()?;
                for lag in 0..=max_lag {
                    writeln!(
                        summary,
                        "{f},{dir},{lag},{},{},{}",
                        band.0.values[lag], band.1.values[lag], band.2.values[lag]
                    )
                    .run()?;
                }
            }
        }
        std::fs::write(args.out_dir.join(format!("{tag}_summary.csv")), summary).run()?;
    }

    println!(
        "metrics for {} realization(s): facies {:?}, directions {:?}, lags 0..={max_lag}",
        realizations.len(),
        facies,
        directions.iter().map(|d| d.name()).collect::<Vec<_>>()
    );
    println!("wrote summaries and bands to {}", args.out_dir.display());
    Ok(())
}

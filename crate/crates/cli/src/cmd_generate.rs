//! `geogan generate`: draw latent fields and write realization grid files.

use crate::common::{parse_comma_list, postprocess};
use crate::err::{CliError, CliResult, Ctx};
use geogan_core::checkpoint::load_checkpoint;
use geogan_core::convnet::Role;
use geogan_core::grid::{read_grid, write_grid, write_pgm, Grid};
use geogan_core::simulate::{generate, sample_latent};
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct GenerateArgs {
    /// Generator checkpoint to load.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Latent spatial extent along x.
    #[arg(long)]
    pub zx: usize,
    /// Latent extent along y (defaults to zx).
    #[arg(long)]
    pub zy: Option<usize>,
    /// Latent extent along z for 3D generators (defaults to zx).
    #[arg(long)]
    pub zz: Option<usize>,
    /// Latent channel count; must match the checkpoint when given.
    #[arg(long)]
    pub q: Option<usize>,
    /// Number of realizations; latent seeds are seed + index.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Median filter kernel extent (0 disables).
    #[arg(long, default_value_t = 0)]
    pub median: usize,
    /// Comma-separated thresholds, e.g. `0.5` or `0.33,0.67`.
    #[arg(long, default_value = "0.5")]
    pub thresholds: String,
    /// Continuous grid whose sorted values drive a rank transform instead
    /// of thresholding.
    #[arg(long, value_name = "GRID")]
    pub rank_ti: Option<PathBuf>,
    /// Comma-separated centered-crop extents in storage order.
    #[arg(long)]
    pub crop: Option<String>,
    /// Also export 2D realizations as 8-bit PGM images.
    #[arg(long)]
    pub pgm: bool,
}

pub fn run(args: &GenerateArgs) -> CliResult<()> {
    let (net, _meta) = load_checkpoint(&args.checkpoint).cfg()?;
    if net.role != Role::Generator {
        return Err(CliError::Config(format!(
            "{} is not a generator checkpoint",
            args.checkpoint.display()
        )));
    }
    let dims = net.dims();
    let q = net.in_channels();
    if let Some(want) = args.q {
        if want != q {
            return Err(CliError::Config(format!(
                "q = {want} is incompatible with the checkpoint (q = {q})"
            )));
        }
    }
    let mut extents = vec![args.zx, args.zy.unwrap_or(args.zx)];
    if dims == 3 {
        extents.push(args.zz.unwrap_or(args.zx));
    } else if args.zz.is_some() {
        return Err(CliError::Config(
            "zz given for a 2D generator checkpoint".into(),
        ));
    }

    let thresholds: Vec<f64> = parse_comma_list(&args.thresholds, "threshold")?;
    let crop: Option<Vec<usize>> = match &args.crop {
        Some(c) => Some(parse_comma_list(c, "crop")?),
        None => None,
    };
    let rank_values = match &args.rank_ti {
        None => None,
        Some(path) => {
            let mut values = match read_grid(path).cfg()? {
                Grid::Continuous(g) => g.data().to_vec(),
                Grid::Categorical(_) => {
                    return Err(CliError::Config(format!(
                        "{} is categorical; the rank transform wants a continuous grid",
                        path.display()
                    )))
                }
            };
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Some(values)
        }
    };
    let post = postprocess(dims, args.median, thresholds, crop, rank_values)?;

    std::fs::create_dir_all(&args.out_dir).run()?;
    for i in 0..args.count {
        let z = sample_latent(q, &extents, args.seed + i as u64).run()?;
        let grid = generate(&net, &z, &post).run()?;
        let path = args.out_dir.join(format!("realization_{i:04}.grid"));
        write_grid(&path, &grid).run()?;
        if args.pgm && grid.extents().len() == 2 {
            write_pgm(&args.out_dir.join(format!("realization_{i:04}.pgm")), &grid).run()?;
        }
    }
    println!(
        "wrote {} realization(s) to {}",
        args.count,
        args.out_dir.display()
    );
    Ok(())
}

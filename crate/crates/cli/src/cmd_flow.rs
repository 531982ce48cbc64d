//! `geogan flow`: solve steady-state heads for one facies grid using the
//! `[flow]` model definition.

use crate::common::{flow_from_section, load_categorical};
use crate::err::{CliError, CliResult, Ctx};
use geogan_core::flow::{
    boundary_flux_balance, k_field_from_facies, observe, solve_heads, write_heads_csv,
    write_observations_csv,
};
use std::path::PathBuf;

#[derive(clap::Args, Debug)]
pub struct FlowArgs {
    /// Run configuration holding the [flow] section.
    #[arg(long)]
    pub config: PathBuf,
    /// Categorical facies grid mapped to conductivities via k_facies.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

pub fn run(args: &FlowArgs) -> CliResult<()> {
    let cfg = crate::config::load(&args.config)?;
    let (mut model, k_facies) = flow_from_section(cfg.section("flow")?)?;
    let grid = load_categorical(&args.grid)?;
    if grid.extents() != [model.ny, model.nx] {
        return Err(CliError::Config(format!(
            "grid extents {:?} do not match the flow model ({} x {})",
            grid.extents(),
            model.ny,
            model.nx
        )));
    }
    model.k = k_field_from_facies(&grid, &k_facies).cfg()?;

    let heads = solve_heads(&model).run()?;
    std::fs::create_dir_all(&args.out_dir).run()?;
    write_heads_csv(&args.out_dir.join("heads.csv"), &heads).run()?;
    if !model.observations.is_empty() {
        let obs = observe(&heads, &model);
        write_observations_csv(&args.out_dir.join("observations.csv"), &model, &obs).run()?;
    }
    let (net, max_abs) = boundary_flux_balance(&model, &heads);
    println!(
        "solved {} x {} heads; boundary/well balance {net:.3e} (max flux {max_abs:.3e})",
        model.nx, model.ny
    );
    println!("wrote results to {}", args.out_dir.display());
    Ok(())
}

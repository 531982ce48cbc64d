//! `geogan invert`: Bayesian inversion of observed heads for the latent
//! field, plus a `--make-truth` mode that fabricates a synthetic reference
//! model and noisy data so experiments are self-contained.

use crate::common::{flow_from_section, load_conditioning_csv, load_heads_csv, postprocess};
use crate::config::RunConfig;
use crate::err::{CliError, CliResult, Ctx};
use geogan_core::checkpoint::load_checkpoint;
use geogan_core::convnet::{NetworkParams, Role};
use geogan_core::flow::{k_field_from_facies, observe, solve_heads, write_observations_csv, FlowModel};
use geogan_core::grid::{write_grid, write_pgm, Grid};
use geogan_core::mcmc::{
    run_inversion, write_archive, write_inversion_outputs, ConditioningPoint, ForwardModel,
    InversionConfig, InversionProblem, TemperingConfig,
};
use geogan_core::simulate::{sample_latent_with, PostprocessSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::{Path, PathBuf};

#[derive(clap::Args, Debug)]
pub struct InvertArgs {
    /// Run configuration holding the [invert] and [flow] sections.
    #[arg(long)]
    pub config: PathBuf,
    /// Draw a synthetic truth, simulate data, corrupt them with noise, and
    /// write truth artifacts instead of running the inversion.
    #[arg(long)]
    pub make_truth: bool,
}

struct InvertSetup {
    generator: NetworkParams,
    q: usize,
    latent_extents: Vec<usize>,
    post: PostprocessSpec,
    flow: FlowModel,
    k_mapping: Vec<f64>,
    conditioning: Vec<ConditioningPoint>,
    mcmc: InversionConfig,
    data_path: Option<PathBuf>,
    out_dir: PathBuf,
}

fn read_setup(cfg: &RunConfig) -> CliResult<InvertSetup> {
    let mut s = cfg.section("invert")?;
    let checkpoint: PathBuf = s.path_req("checkpoint")?;
    let out_dir: PathBuf = s.path_req("out_dir")?;
    let data_path = s.path_opt("data")?;
    let seed = s.seed(cfg.master_seed)?;
    let n_chains: usize = s.or("n_chains", 8)?;
    let n_iterations: usize = s.req("n_iterations")?;
    let mut mcmc = InversionConfig::new(n_chains, n_iterations, seed);
    mcmc.sigma_e = s.or("sigma_e", mcmc.sigma_e)?;
    mcmc.sigma_x = s.or("sigma_x", mcmc.sigma_x)?;
    let burn_in: usize = s.or("burn_in", n_iterations / 5)?;
    mcmc.tempering = TemperingConfig {
        t0: s.or("tempering_t0", 10.0)?,
        tau: s.or("tempering_tau", (burn_in as f64 / 5.0).max(1.0))?,
        burn_in,
    };
    mcmc.archive_thin = s.or("archive_thin", mcmc.archive_thin)?;
    mcmc.snooker_prob = s.or("snooker_prob", mcmc.snooker_prob)?;
    mcmc.jitter = s.or("jitter", mcmc.jitter)?;
    mcmc.rhat_interval = s.or("rhat_interval", mcmc.rhat_interval)?;
    mcmc.accuracy_window = s.or("accuracy_window", mcmc.accuracy_window)?;
    // accepted for orchestration symmetry; evaluation order is fixed and
    // execution is sequential either way
    let _workers: usize = s.or("workers", n_chains)?;

    let (generator, _meta) = load_checkpoint(&checkpoint).cfg()?;
    if generator.role != Role::Generator {
        return Err(CliError::Config(format!(
            "{} is not a generator checkpoint",
            checkpoint.display()
        )));
    }
    let dims = generator.dims();
    let q: usize = s.or("q", generator.in_channels())?;
    if q != generator.in_channels() {
        return Err(CliError::Config(format!(
            "q = {q} is incompatible with the checkpoint (q = {})",
            generator.in_channels()
        )));
    }
    let zx: usize = s.req("latent_zx")?;
    let mut latent_extents = vec![zx, s.or("latent_zy", zx)?];
    if dims == 3 {
        latent_extents.push(s.or("latent_zz", zx)?);
    }

    let median: usize = s.or("median", 0)?;
    let thresholds: Vec<f64> = s.list("thresholds")?.unwrap_or(vec![0.5]);
    let crop: Option<Vec<usize>> = s.list("crop")?;
    let post = postprocess(dims, median, thresholds, crop, None)?;

    let conditioning = match s.path_opt("conditioning")? {
        Some(p) => load_conditioning_csv(&p)?,
        None => Vec::new(),
    };
    s.finish()?;
    mcmc.validate().cfg()?;

    let (flow, k_mapping) = flow_from_section(cfg.section("flow")?)?;
    if flow.observations.is_empty() {
        return Err(CliError::Config(
            "[flow] defines no observation points".into(),
        ));
    }
    if dims != 2 {
        return Err(CliError::Config(
            "the flow forward model is 2D; the checkpoint is 3D".into(),
        ));
    }

    Ok(InvertSetup {
        generator,
        q,
        latent_extents,
        post,
        flow,
        k_mapping,
        conditioning,
        mcmc,
        data_path,
        out_dir,
    })
}

fn make_truth(setup: &InvertSetup, out_dir: &Path) -> CliResult<()> {
    let problem = InversionProblem {
        generator: &setup.generator,
        q: setup.q,
        latent_extents: setup.latent_extents.clone(),
        post: setup.post.clone(),
        flow: setup.flow.clone(),
        k_mapping: setup.k_mapping.clone(),
        conditioning: Vec::new(),
        sigma_x: setup.mcmc.sigma_x,
    };
    let mut truth_rng = ChaCha8Rng::seed_from_u64(setup.mcmc.seed);
    truth_rng.set_stream(77);
    let z = sample_latent_with(setup.q, &setup.latent_extents, &mut truth_rng).run()?;
    let grid = problem.realize(z.data()).run()?;

    let mut model = setup.flow.clone();
    model.k = k_field_from_facies(&grid, &setup.k_mapping).run()?;
    let heads = solve_heads(&model).run()?;
    let clean = observe(&heads, &model);

    let mut noise_rng = ChaCha8Rng::seed_from_u64(setup.mcmc.seed);
    noise_rng.set_stream(78);
    let normal = Normal::new(0.0, setup.mcmc.sigma_e).expect("positive sigma");
    let noisy: Vec<f64> = clean
        .iter()
        .map(|v| v + normal.sample(&mut noise_rng))
        .collect();

    std::fs::create_dir_all(out_dir).run()?;
    write_grid(&out_dir.join("truth.grid"), &Grid::Categorical(grid.clone())).run()?;
    write_pgm(&out_dir.join("truth.pgm"), &Grid::Categorical(grid.clone())).run()?;
    write_archive(&out_dir.join("truth_latent.bin"), z.dim(), &[z.data().to_vec()]).run()?;
    write_observations_csv(&out_dir.join("heads_clean.csv"), &model, &clean).run()?;
    write_observations_csv(&out_dir.join("heads_observed.csv"), &model, &noisy).run()?;
    let mut cond: Vec<u8> = b"ix,iy,facies\n".to_vec();
    for &(ix, iy) in &model.observations {
        use std::io::Write as _;
        writeln!(cond, "{ix},{iy},{}", grid.get(&[iy, ix])).run()?;
    }
    std::fs::write(out_dir.join("conditioning.csv"), cond).run()?;

    let rmse = (clean
        .iter()
        .zip(&noisy)
        .map(|(c, n)| (c - n) * (c - n))
        .sum::<f64>()
        / clean.len() as f64)
        .sqrt();
    println!(
        "wrote synthetic truth ({} observations, noise RMSE {rmse:.4} m) to {}",
        clean.len(),
        out_dir.display()
    );
    Ok(())
}

pub fn run(args: &InvertArgs) -> CliResult<()> {
    let cfg = crate::config::load(&args.config)?;
    let setup = read_setup(&cfg)?;

    if args.make_truth {
        return make_truth(&setup, &setup.out_dir.join("truth"));
    }

    let data_path = setup.data_path.clone().ok_or_else(|| {
        CliError::Config("[invert] missing required key data (observed heads CSV)".into())
    })?;
    let observed = load_heads_csv(&data_path)?;
    if observed.len() != setup.flow.observations.len() {
        return Err(CliError::Config(format!(
            "{} holds {} values but the flow model defines {} observation points",
            data_path.display(),
            observed.len(),
            setup.flow.observations.len()
        )));
    }

    let problem = InversionProblem {
        generator: &setup.generator,
        q: setup.q,
        latent_extents: setup.latent_extents.clone(),
        post: setup.post.clone(),
        flow: setup.flow.clone(),
        k_mapping: setup.k_mapping.clone(),
        conditioning: setup.conditioning.clone(),
        sigma_x: setup.mcmc.sigma_x,
    };
    // dimension and shape checks before any sampling starts
    let probe = vec![0.0; problem.q * problem.latent_extents.iter().product::<usize>()];
    problem.evaluate(&probe).cfg()?;

    let run = run_inversion(&setup.mcmc, &problem, &observed).run()?;
    write_inversion_outputs(&setup.out_dir, &run).run()?;

    let ens = &run.sampler.ensemble;
    let accept: usize = ens.accept_counts.iter().sum();
    let total = setup.mcmc.n_chains * setup.mcmc.n_iterations;
    println!(
        "{} chains x {} iterations, acceptance rate {:.3}, forward failures {}",
        setup.mcmc.n_chains,
        setup.mcmc.n_iterations,
        if total > 0 {
            accept as f64 / total as f64
        } else {
            0.0
        },
        ens.eval_failures
    );
    if setup.mcmc.n_iterations > 0 {
        println!("best sampled RMSE {:.5} m", ens.best_rmse());
    }
    if let Some((t, rhats)) = run.sampler.rhat_series.last() {
        let worst = rhats.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("R-hat at iteration {t}: max {worst:.4}");
    }
    if let Some(report) = &run.conditioning {
        println!(
            "conditioning over {} samples: mean accuracy {:.3}, all-honored fraction {:.3}",
            report.samples, report.mean_accuracy, report.all_honored_fraction
        );
    }
    println!("wrote inversion outputs to {}", setup.out_dir.display());
    Ok(())
}

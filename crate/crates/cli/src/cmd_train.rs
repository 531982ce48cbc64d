//! `geogan train --config <file>`: adversarial training from a `[train]`
//! section, producing per-epoch checkpoints, a loss trace and a manifest.

use crate::common::load_categorical;
use crate::config::RunConfig;
use crate::err::{CliResult, Ctx};
use geogan_core::train::{train, GanArchitecture, TrainConfig};
use std::io::Write;
use std::path::PathBuf;

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let mut s = cfg.section("train")?;
    let ti_path: PathBuf = s.path_req("ti")?;
    let checkpoint_dir: PathBuf = s.path_req("checkpoint_dir")?;
    let mut tc = TrainConfig::new(&checkpoint_dir);
    tc.epochs = s.or("epochs", tc.epochs)?;
    tc.minibatches_per_epoch = s.or("minibatches_per_epoch", tc.minibatches_per_epoch)?;
    tc.batch_size = s.or("batch_size", tc.batch_size)?;
    tc.latent_extent = s.or("latent_extent", tc.latent_extent)?;
    tc.q = s.or("q", tc.q)?;
    tc.learning_rate = s.or("learning_rate", tc.learning_rate)?;
    tc.adam_beta1 = s.or("adam_beta1", tc.adam_beta1)?;
    tc.adam_beta2 = s.or("adam_beta2", tc.adam_beta2)?;
    tc.adam_eps = s.or("adam_eps", tc.adam_eps)?;
    tc.reg_alpha = s.or("reg_alpha", tc.reg_alpha)?;
    tc.disc_input_noise_std = s.or("disc_input_noise_std", tc.disc_input_noise_std)?;
    tc.seed = s.seed(cfg.master_seed)?;
    let kernel: usize = s.or("kernel", 5)?;
    let generator_channels: Vec<usize> = s.list("generator_channels")?.unwrap_or(vec![512, 256, 128, 64, 1]);
    let discriminator_channels: Option<Vec<usize>> = s.list("discriminator_channels")?;
    s.finish()?;
    tc.validate().cfg()?;

    // validate all inputs before any output is created
    let ti = load_categorical(&ti_path)?;
    let mut arch = GanArchitecture::new(ti.dims(), kernel, generator_channels);
    arch.discriminator_channels = discriminator_channels;

    let outcome = train(&ti, &arch, &tc).run()?;

    let manifest = checkpoint_dir.join("checkpoints_manifest.csv");
    let mut out: Vec<u8> = b"epoch,path\n".to_vec();
    for (i, path) in outcome.checkpoints.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, path.display()).run()?;
    }
    std::fs::write(&manifest, out).run()?;

    let last = outcome.records.last().expect("at least one minibatch");
    println!(
        "trained {} epochs x {} minibatches (batch {}), final d_loss {:.4}, g_loss {:.4}",
        tc.epochs, tc.minibatches_per_epoch, tc.batch_size, last.d_loss, last.g_loss
    );
    println!(
        "wrote {} checkpoints, {} and {}",
        outcome.checkpoints.len(),
        outcome.loss_csv.display(),
        manifest.display()
    );
    Ok(())
}

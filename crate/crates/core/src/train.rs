//! Adversarial training: patch sampling, facies encoding, discriminator and
//! generator losses with l2 weight regularization, Adam updates, Gaussian
//! input-noise injection for the discriminator, per-epoch checkpointing.
//!
//! Each minibatch performs one discriminator update (generator fixed)
//! followed by one generator update (discriminator fixed). The generator
//! loss uses the non-saturating form -mean(log D(G(Z))).

use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::convnet::{
    backward, forward, forward_with_trace, init_params, mirror_discriminator_channels,
    output_size, ArchitectureSpec, NetworkGrads, NetworkParams,
};
use crate::error::{Error, Result};
use crate::grid::CategoricalGrid;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Discriminator outputs are clamped to [CLAMP, 1 - CLAMP] before any log,
/// which keeps both losses finite even for a saturated discriminator.
pub const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub minibatches_per_epoch: usize,
    pub batch_size: usize,
    /// Latent spatial extent z_x used for training patches; the patch
    /// extent is (z_x - 1) * 2^dp + 1.
    pub latent_extent: usize,
    /// Latent channel count q.
    pub q: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// l2 weight penalty applied to both networks.
    pub reg_alpha: f64,
    /// Std of the white noise added to every discriminator input.
    pub disc_input_noise_std: f64,
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
}

impl TrainConfig {
    pub fn new(checkpoint_dir: impl Into<PathBuf>) -> Self {
        TrainConfig {
            epochs: 50,
            minibatches_per_epoch: 100,
            batch_size: 25,
            latent_extent: 12,
            q: 1,
            learning_rate: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            reg_alpha: 1e-5,
            disc_input_noise_std: 0.1,
            seed: 0,
            checkpoint_dir: checkpoint_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 || self.minibatches_per_epoch < 1 {
            return Err(Error::OutOfRange(
                "epochs, minibatches and batch size must be >= 1".into(),
            ));
        }
        if self.reg_alpha < 0.0 || self.disc_input_noise_std < 0.0 {
            return Err(Error::OutOfRange(
                "regularization weight and noise std must be >= 0".into(),
            ));
        }
        if self.latent_extent < 1 || self.q < 1 {
            return Err(Error::OutOfRange("latent shape must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::OutOfRange("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Network pair blueprint; the discriminator ladder defaults to the
/// mirrored generator ladder.
#[derive(Debug, Clone)]
pub struct GanArchitecture {
    pub dims: usize,
    pub kernel: usize,
    pub generator_channels: Vec<usize>,
    pub discriminator_channels: Option<Vec<usize>>,
}

impl GanArchitecture {
    pub fn new(dims: usize, kernel: usize, generator_channels: Vec<usize>) -> Self {
        GanArchitecture {
            dims,
            kernel,
            generator_channels,
            discriminator_channels: None,
        }
    }

    pub fn dp(&self) -> usize {
        self.generator_channels.len()
    }
}

// ---------------------------------------------------------------------------
// Facies encoding
// ---------------------------------------------------------------------------

fn encode_value(v: u8, facies_count: usize) -> f64 {
    match facies_count {
        2 => 2.0 * v as f64 - 1.0,
        _ => v as f64 - 1.0,
    }
}

/// Map facies codes onto the tanh output range: binary {0,1} -> {-1,+1},
/// tri-categorical {0,1,2} -> {-1,0,+1}.
pub fn encode_facies(grid: &CategoricalGrid) -> Result<Tensor> {
    let f = grid.facies_count();
    if !(2..=3).contains(&f) {
        return Err(Error::UnsupportedFacies(f));
    }
    let mut shape = vec![1usize, 1];
    shape.extend_from_slice(grid.extents());
    Tensor::from_vec(
        &shape,
        grid.data().iter().map(|&v| encode_value(v, f)).collect(),
    )
}

/// Inverse of [`encode_facies`] by nearest encoded level.
pub fn decode_facies(t: &Tensor, facies_count: usize) -> Result<CategoricalGrid> {
    if !(2..=3).contains(&facies_count) {
        return Err(Error::UnsupportedFacies(facies_count));
    }
    let data: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| {
            if facies_count == 2 {
                u8::from(v >= 0.0)
            } else if v < -0.5 {
                0
            } else if v < 0.5 {
                1
            } else {
                2
            }
        })
        .collect();
    CategoricalGrid::new(t.spatial(), facies_count, data)
}

// ---------------------------------------------------------------------------
// Patch sampling
// ---------------------------------------------------------------------------

/// Cut `count` uniformly random axis-aligned square/cubic patches of the
/// given extent from the training image and encode them; the result has
/// shape (count, 1, extent, extent[, extent]).
pub fn sample_patches(
    ti: &CategoricalGrid,
    extent: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let f = ti.facies_count();
    if !(2..=3).contains(&f) {
        return Err(Error::UnsupportedFacies(f));
    }
    if let Some((axis, &e)) = ti.extents().iter().enumerate().find(|(_, &e)| e < extent) {
        return Err(Error::ShapeMismatch {
            axis,
            expected: extent,
            actual: e,
            context: "patch extent exceeds the training image".into(),
        });
    }
    let dims = ti.dims();
    let mut shape = vec![count, 1];
    shape.extend(std::iter::repeat(extent).take(dims));
    let patch_len = extent.pow(dims as u32);
    let mut data = Vec::with_capacity(count * patch_len);
    let ex = ti.extents();
    for _ in 0..count {
        let origin: Vec<usize> = ex
            .iter()
            .map(|&e| rng.gen_range(0..=e - extent))
            .collect();
        match dims {
            2 => {
                for y in 0..extent {
                    let base = (origin[0] + y) * ex[1] + origin[1];
                    data.extend(
                        ti.data()[base..base + extent]
                            .iter()
                            .map(|&v| encode_value(v, f)),
                    );
                }
            }
            3 => {
                for z in 0..extent {
                    for y in 0..extent {
                        let base =
                            ((origin[0] + z) * ex[1] + origin[1] + y) * ex[2] + origin[2];
                        data.extend(
                            ti.data()[base..base + extent]
                                .iter()
                                .map(|&v| encode_value(v, f)),
                        );
                    }
                }
            }
            _ => return Err(Error::BadShape(ex.to_vec())),
        }
    }
    Tensor::from_vec(&shape, data)
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Regularization and noise settings shared by both losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub reg_alpha: f64,
    pub noise_std: f64,
}

fn with_noise(x: &Tensor, std: f64, rng: &mut impl Rng) -> Tensor {
    if std == 0.0 {
        return x.clone();
    }
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut noisy = x.clone();
    noisy
        .data_mut()
        .iter_mut()
        .for_each(|v| *v += normal.sample(rng));
    noisy
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(CLAMP, 1.0 - CLAMP)
}

fn check_disc_input(x: &Tensor) -> Result<()> {
    if x.channels() != 1 {
        return Err(Error::ShapeMismatch {
            axis: 1,
            expected: 1,
            actual: x.channels(),
            context: "discriminator batches must be single-channel".into(),
        });
    }
    Ok(())
}

/// Discriminator loss: -mean(log D(real+noise)) - mean(log(1 - D(fake+noise)))
/// + alpha * sum of squared discriminator weights. Means run over the full
/// probability field and the batch.
pub fn d_loss(
    real: &Tensor,
    fake: &Tensor,
    d: &NetworkParams,
    lp: &LossParams,
    rng: &mut impl Rng,
) -> Result<f64> {
    check_disc_input(real)?;
    check_disc_input(fake)?;
    let fr = forward(d, &with_noise(real, lp.noise_std, rng))?;
    let ff = forward(d, &with_noise(fake, lp.noise_std, rng))?;
    let term_real = -fr.data().iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / fr.len() as f64;
    let term_fake = -ff
        .data()
        .iter()
        .map(|&p| (1.0 - clamp_prob(p)).ln())
        .sum::<f64>()
        / ff.len() as f64;
    Ok(term_real + term_fake + lp.reg_alpha * d.weight_sq_sum())
}

/// Non-saturating generator loss: -mean(log D(fake+noise)) + alpha * sum of
/// squared generator weights.
pub fn g_loss(
    fake: &Tensor,
    d: &NetworkParams,
    g: &NetworkParams,
    lp: &LossParams,
    rng: &mut impl Rng,
) -> Result<f64> {
    check_disc_input(fake)?;
    let ff = forward(d, &with_noise(fake, lp.noise_std, rng))?;
    let term = -ff.data().iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / ff.len() as f64;
    Ok(term + lp.reg_alpha * g.weight_sq_sum())
}

fn add_weight_reg(grads: &mut NetworkGrads, net: &NetworkParams, alpha: f64) {
    if alpha == 0.0 {
        return;
    }
    for (lg, layer) in grads.layers.iter_mut().zip(&net.layers) {
        lg.dw
            .iter_mut()
            .zip(layer.weights.data())
            .for_each(|(g, &w)| *g += 2.0 * alpha * w);
    }
}

/// Discriminator loss and its parameter gradients for one minibatch pair.
fn d_step(
    real: &Tensor,
    fake: &Tensor,
    d: &NetworkParams,
    lp: &LossParams,
    rng: &mut impl Rng,
) -> Result<(f64, NetworkGrads)> {
    check_disc_input(real)?;
    check_disc_input(fake)?;
    let tr_real = forward_with_trace(d, &with_noise(real, lp.noise_std, rng))?;
    let tr_fake = forward_with_trace(d, &with_noise(fake, lp.noise_std, rng))?;

    let fr = tr_real.output();
    let m_r = fr.len() as f64;
    let loss_real = -fr.data().iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / m_r;
    let grad_real = fr.map(|p| -1.0 / (m_r * clamp_prob(p)));

    let ff = tr_fake.output();
    let m_f = ff.len() as f64;
    let loss_fake = -ff
        .data()
        .iter()
        .map(|&p| (1.0 - clamp_prob(p)).ln())
        .sum::<f64>()
        / m_f;
    let grad_fake = ff.map(|p| 1.0 / (m_f * (1.0 - clamp_prob(p))));

    let (mut grads, _) = backward(d, &tr_real, &grad_real)?;
    let (gf, _) = backward(d, &tr_fake, &grad_fake)?;
    grads.add_assign(&gf);
    add_weight_reg(&mut grads, d, lp.reg_alpha);
    Ok((loss_real + loss_fake + lp.reg_alpha * d.weight_sq_sum(), grads))
}

/// Generator loss and gradients: differentiate -mean(log D(G(Z)+noise))
/// through the discriminator into the generator.
fn g_step(
    zbatch: &Tensor,
    g: &NetworkParams,
    d: &NetworkParams,
    lp: &LossParams,
    rng: &mut impl Rng,
) -> Result<(f64, NetworkGrads)> {
    let tr_g = forward_with_trace(g, zbatch)?;
    let fake_noisy = with_noise(tr_g.output(), lp.noise_std, rng);
    let tr_d = forward_with_trace(d, &fake_noisy)?;
    let ff = tr_d.output();
    let m = ff.len() as f64;
    let loss = -ff.data().iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / m;
    let grad_field = ff.map(|p| -1.0 / (m * clamp_prob(p)));
    let (_, dx_fake) = backward(d, &tr_d, &grad_field)?;
    let (mut grads, _) = backward(g, &tr_g, &dx_fake)?;
    add_weight_reg(&mut grads, g, lp.reg_alpha);
    Ok((loss + lp.reg_alpha * g.weight_sq_sum(), grads))
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Per-parameter first and second moment accumulators plus the step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: NetworkGrads,
    v: NetworkGrads,
    step: u64,
}

impl AdamState {
    pub fn new(net: &NetworkParams) -> Self {
        AdamState {
            m: NetworkGrads::zeros_like(net),
            v: NetworkGrads::zeros_like(net),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Standard Adam update with bias correction.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkGrads,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.layers.len() != params.layers.len() || state.m.layers.len() != params.layers.len() {
        return Err(Error::BadShape(vec![grads.layers.len()]));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (li, layer) in params.layers.iter_mut().enumerate() {
        let lg = &grads.layers[li];
        if lg.dw.len() != layer.weights.len() || lg.db.len() != layer.biases.len() {
            return Err(Error::BadShape(vec![lg.dw.len(), lg.db.len()]));
        }
        let (m, v) = (&mut state.m.layers[li], &mut state.v.layers[li]);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
        };
        for (i, p) in layer.weights.data_mut().iter_mut().enumerate() {
            update(p, lg.dw[i], &mut m.dw[i], &mut v.dw[i]);
        }
        for (i, p) in layer.biases.iter_mut().enumerate() {
            update(p, lg.db[i], &mut m.db[i], &mut v.db[i]);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub minibatch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// One generator checkpoint per epoch, in epoch order.
    pub checkpoints: Vec<PathBuf>,
    pub loss_csv: PathBuf,
    pub records: Vec<LossRecord>,
    pub generator: NetworkParams,
    pub discriminator: NetworkParams,
}

fn latent_batch(
    count: usize,
    q: usize,
    extent: usize,
    dims: usize,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let mut shape = vec![count, q];
    shape.extend(std::iter::repeat(extent).take(dims));
    let n: usize = shape.iter().product();
    Tensor::from_vec(&shape, (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
}

pub fn write_loss_csv(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut out: Vec<u8> = b"epoch,minibatch,d_loss,g_loss\n".to_vec();
    for r in records {
        writeln!(out, "{},{},{},{}", r.epoch, r.minibatch, r.d_loss, r.g_loss)?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Run the full adversarial training schedule. Writes one generator
/// checkpoint per epoch plus a loss-trace CSV into the checkpoint
/// directory. Fully deterministic for a fixed seed.
pub fn train(
    ti: &CategoricalGrid,
    arch: &GanArchitecture,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ti.dims() != arch.dims {
        return Err(Error::BadShape(ti.extents().to_vec()));
    }
    let dp = arch.dp() as u32;
    let patch_extent = output_size(cfg.latent_extent, dp);
    let g_arch = ArchitectureSpec::generator(
        arch.dims,
        cfg.q,
        arch.generator_channels.clone(),
        arch.kernel,
    );
    let d_channels = arch
        .discriminator_channels
        .clone()
        .unwrap_or_else(|| mirror_discriminator_channels(&arch.generator_channels));
    let d_arch = ArchitectureSpec::discriminator(arch.dims, d_channels, arch.kernel);
    let mut g = init_params(&g_arch, cfg.seed)?;
    let mut d = init_params(&d_arch, cfg.seed ^ 0x9E37_79B9_7F4A_7C15)?;
    let mut g_state = AdamState::new(&g);
    let mut d_state = AdamState::new(&d);
    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        eps: cfg.adam_eps,
    };
    let lp = LossParams {
        reg_alpha: cfg.reg_alpha,
        noise_std: cfg.disc_input_noise_std,
    };

    // independent deterministic streams per randomness source
    let mut patch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    patch_rng.set_stream(1);
    let mut latent_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    latent_rng.set_stream(2);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(3);

    fs::create_dir_all(&cfg.checkpoint_dir)?;
    let mut records = Vec::with_capacity(cfg.epochs * cfg.minibatches_per_epoch);
    let mut checkpoints = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        for minibatch in 0..cfg.minibatches_per_epoch {
            let real = sample_patches(ti, patch_extent, cfg.batch_size, &mut patch_rng)?;
            let z = latent_batch(
                cfg.batch_size,
                cfg.q,
                cfg.latent_extent,
                arch.dims,
                &mut latent_rng,
            )?;
            let fake = forward(&g, &z)?;
            let (dl, d_grads) = d_step(&real, &fake, &d, &lp, &mut noise_rng)?;
            adam_step(&mut d, &d_grads, &mut d_state, &adam)?;

            let z2 = latent_batch(
                cfg.batch_size,
                cfg.q,
                cfg.latent_extent,
                arch.dims,
                &mut latent_rng,
            )?;
            let (gl, g_grads) = g_step(&z2, &g, &d, &lp, &mut noise_rng)?;
            adam_step(&mut g, &g_grads, &mut g_state, &adam)?;

            if !dl.is_finite() || !gl.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, minibatch {minibatch}: d={dl}, g={gl}"
                )));
            }
            records.push(LossRecord {
                epoch,
                minibatch,
                d_loss: dl,
                g_loss: gl,
            });
        }
        let path = cfg
            .checkpoint_dir
            .join(format!("generator_epoch_{epoch:04}.ckpt"));
        save_checkpoint(
            &g,
            &CheckpointMeta {
                epoch,
                seed: cfg.seed,
            },
            &path,
        )?;
        checkpoints.push(path);
    }

    let loss_csv = cfg.checkpoint_dir.join("loss_trace.csv");
    write_loss_csv(&loss_csv, &records)?;
    Ok(TrainOutcome {
        checkpoints,
        loss_csv,
        records,
        generator: g,
        discriminator: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{discriminator_forward, Activation, ConvSpec, LayerParams, Role};
    use proptest::prelude::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn zero_weight_discriminator(dims: usize) -> NetworkParams {
        let arch = ArchitectureSpec::discriminator(dims, vec![2, 1], 3);
        let mut d = init_params(&arch, 0).unwrap();
        for l in &mut d.layers {
            l.weights.data_mut().iter_mut().for_each(|w| *w = 0.0);
        }
        d
    }

    /// Single 1x1 sigmoid layer with weight `w`: D(x) = sigmoid(w * x).
    fn scalar_discriminator(w: f64) -> NetworkParams {
        let spec = ConvSpec {
            kernel: vec![1, 1],
            stride: 1,
            padding: vec![0, 0],
            transposed: false,
            activation: Activation::Sigmoid,
            in_channels: 1,
            out_channels: 1,
        };
        let mut layer = LayerParams::zeros(spec).unwrap();
        layer.weights.data_mut()[0] = w;
        NetworkParams {
            role: Role::Discriminator,
            layers: vec![layer],
        }
    }

    #[test]
    fn encode_examples_and_roundtrip() {
        let g = CategoricalGrid::new(&[2, 2], 2, vec![0, 1, 1, 0]).unwrap();
        let t = encode_facies(&g).unwrap();
        assert_eq!(t.data(), &[-1.0, 1.0, 1.0, -1.0]);

        let tri = CategoricalGrid::filled(&[3, 3], 3, 1).unwrap();
        let tt = encode_facies(&tri).unwrap();
        assert!(tt.data().iter().all(|&v| v == 0.0));

        let four = CategoricalGrid::filled(&[2, 2], 4, 3).unwrap();
        assert!(matches!(
            encode_facies(&four),
            Err(Error::UnsupportedFacies(4))
        ));
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(values in proptest::collection::vec(0u8..3, 24)) {
            let g = CategoricalGrid::new(&[4, 6], 3, values).unwrap();
            let t = encode_facies(&g).unwrap();
            prop_assert_eq!(decode_facies(&t, 3).unwrap(), g);
        }
    }

    #[test]
    fn patches_full_extent_is_unique_crop() {
        let mut r = rng(1);
        let data: Vec<u8> = (0..36).map(|i| (i % 2) as u8).collect();
        let ti = CategoricalGrid::new(&[6, 6], 2, data).unwrap();
        let batch = sample_patches(&ti, 6, 5, &mut r).unwrap();
        assert_eq!(batch.shape(), &[5, 1, 6, 6]);
        let full = encode_facies(&ti).unwrap();
        for b in 0..5 {
            assert_eq!(batch.slab(b, 0), full.data());
        }
        assert!(batch.data().iter().all(|&v| v == 1.0 || v == -1.0));
        assert!(sample_patches(&ti, 7, 1, &mut r).is_err());
    }

    #[test]
    fn patch_batch_shape_3d() {
        let mut r = rng(2);
        let ti = CategoricalGrid::filled(&[8, 8, 8], 2, 1).unwrap();
        let batch = sample_patches(&ti, 5, 3, &mut r).unwrap();
        assert_eq!(batch.shape(), &[3, 1, 5, 5, 5]);
    }

    #[test]
    fn d_loss_half_probability_is_two_log_two() {
        let d = zero_weight_discriminator(2);
        let real = Tensor::filled(&[2, 1, 9, 9], 1.0).unwrap();
        let fake = Tensor::filled(&[2, 1, 9, 9], -1.0).unwrap();
        let lp = LossParams {
            reg_alpha: 0.0,
            noise_std: 0.1,
        };
        let v = d_loss(&real, &fake, &d, &lp, &mut rng(0)).unwrap();
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-9, "{v}");
    }

    #[test]
    fn d_loss_perfect_discriminator_tends_to_zero() {
        // D(x) = sigmoid(50 x): real inputs +1 -> ~1, fake inputs -1 -> ~0
        let d = scalar_discriminator(50.0);
        let real = Tensor::filled(&[1, 1, 3, 3], 1.0).unwrap();
        let fake = Tensor::filled(&[1, 1, 3, 3], -1.0).unwrap();
        let lp = LossParams {
            reg_alpha: 0.0,
            noise_std: 0.0,
        };
        let v = d_loss(&real, &fake, &d, &lp, &mut rng(0)).unwrap();
        assert!(v >= 0.0 && v < 1e-9, "{v}");
    }

    /// Independent termwise transcription of the two separable losses.
    fn losses_by_transcription(
        real: &Tensor,
        fake: &Tensor,
        d: &NetworkParams,
        g: &NetworkParams,
        alpha: f64,
    ) -> (f64, f64) {
        let mut ld = 0.0;
        let (field_r, _) = discriminator_forward(real, d).unwrap();
        for &p in field_r.data() {
            ld -= clamp_prob(p).ln() / field_r.len() as f64;
        }
        let (field_f, _) = discriminator_forward(fake, d).unwrap();
        let mut lg = 0.0;
        for &p in field_f.data() {
            ld -= (1.0 - clamp_prob(p)).ln() / field_f.len() as f64;
            lg -= clamp_prob(p).ln() / field_f.len() as f64;
        }
        let sq = |n: &NetworkParams| {
            n.layers
                .iter()
                .map(|l| l.weights.data().iter().map(|w| w * w).sum::<f64>())
                .sum::<f64>()
        };
        (ld + alpha * sq(d), lg + alpha * sq(g))
    }

    #[test]
    fn losses_match_termwise_transcription() {
        let mut r = rng(33);
        let d = init_params(&ArchitectureSpec::discriminator(2, vec![3, 1], 3), 5).unwrap();
        let g = init_params(&ArchitectureSpec::generator(2, 1, vec![3, 1], 3), 6).unwrap();
        let real = Tensor::from_vec(
            &[2, 1, 9, 9],
            (0..162).map(|_| r.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let z = latent_batch(2, 1, 3, 2, &mut r).unwrap();
        let fake = forward(&g, &z).unwrap();
        let lp = LossParams {
            reg_alpha: 1e-5,
            noise_std: 0.0,
        };
        let (ld_want, lg_want) = losses_by_transcription(&real, &fake, &d, &g, lp.reg_alpha);
        let ld = d_loss(&real, &fake, &d, &lp, &mut rng(0)).unwrap();
        let lg = g_loss(&fake, &d, &g, &lp, &mut rng(0)).unwrap();
        assert!((ld - ld_want).abs() < 1e-12, "{ld} vs {ld_want}");
        assert!((lg - lg_want).abs() < 1e-12, "{lg} vs {lg_want}");
    }

    #[test]
    fn g_loss_examples() {
        let d = zero_weight_discriminator(2);
        let g = init_params(&ArchitectureSpec::generator(2, 1, vec![2, 1], 3), 0).unwrap();
        let fake = Tensor::filled(&[1, 1, 9, 9], 0.3).unwrap();
        let lp0 = LossParams {
            reg_alpha: 0.0,
            noise_std: 0.1,
        };
        let v = g_loss(&fake, &d, &g, &lp0, &mut rng(0)).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-9);

        // saturated D -> loss ~ 0
        let dperf = scalar_discriminator(50.0);
        let ones = Tensor::filled(&[1, 1, 3, 3], 1.0).unwrap();
        let lp = LossParams {
            reg_alpha: 0.0,
            noise_std: 0.0,
        };
        let v0 = g_loss(&ones, &dperf, &g, &lp, &mut rng(0)).unwrap();
        assert!(v0 >= 0.0 && v0 < 1e-9);

        // the regularization term is exactly alpha * sum of squared weights
        let lp_a = LossParams {
            reg_alpha: 3e-4,
            noise_std: 0.0,
        };
        let with_reg = g_loss(&ones, &dperf, &g, &lp_a, &mut rng(0)).unwrap();
        assert!((with_reg - v0 - 3e-4 * g.weight_sq_sum()).abs() < 1e-12);
    }

    #[test]
    fn losses_stay_finite_when_discriminator_saturates() {
        let d = scalar_discriminator(1e6);
        let g = init_params(&ArchitectureSpec::generator(2, 1, vec![2, 1], 3), 0).unwrap();
        let real = Tensor::filled(&[1, 1, 2, 2], -1.0).unwrap(); // D(real) ~ 0
        let fake = Tensor::filled(&[1, 1, 2, 2], 1.0).unwrap(); // D(fake) ~ 1
        let lp = LossParams {
            reg_alpha: 0.0,
            noise_std: 0.0,
        };
        let ld = d_loss(&real, &fake, &d, &lp, &mut rng(0)).unwrap();
        let lg = g_loss(&real, &d, &g, &lp, &mut rng(0)).unwrap();
        assert!(ld.is_finite() && lg.is_finite());
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let arch = ArchitectureSpec::generator(2, 1, vec![2, 1], 3);
        let mut net = init_params(&arch, 8).unwrap();
        let before = net.clone();
        let grads = NetworkGrads::zeros_like(&net);
        let mut state = AdamState::new(&net);
        let cfg = AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        };
        adam_step(&mut net, &grads, &mut state, &cfg).unwrap();
        for (a, b) in net.layers.iter().zip(&before.layers) {
            assert_eq!(a.weights.data(), b.weights.data());
            assert_eq!(a.biases, b.biases);
        }
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let arch = ArchitectureSpec::generator(2, 1, vec![1], 3);
        let mut net = init_params(&arch, 8).unwrap();
        let w0 = net.layers[0].weights.data()[0];
        let mut grads = NetworkGrads::zeros_like(&net);
        grads.layers[0].dw[0] = 3.0;
        let mut state = AdamState::new(&net);
        let cfg = AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        };
        adam_step(&mut net, &grads, &mut state, &cfg).unwrap();
        let delta = net.layers[0].weights.data()[0] - w0;
        assert!((delta + 1e-3).abs() < 1e-3 * 1e-6, "delta {delta}");
    }

    #[test]
    fn adam_descends_quadratic() {
        // minimize f(w) = w^2 starting from w = 1: |w| strictly decreases
        let arch = ArchitectureSpec::generator(2, 1, vec![1], 3);
        let mut net = init_params(&arch, 8).unwrap();
        net.layers[0].weights.data_mut()[0] = 1.0;
        let mut state = AdamState::new(&net);
        let cfg = AdamConfig {
            learning_rate: 0.05,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let w = net.layers[0].weights.data()[0];
            let mut grads = NetworkGrads::zeros_like(&net);
            grads.layers[0].dw[0] = 2.0 * w;
            adam_step(&mut net, &grads, &mut state, &cfg).unwrap();
            let now = net.layers[0].weights.data()[0].abs();
            assert!(now < prev, "{now} !< {prev}");
            prev = now;
        }
    }

    fn tiny_ti(seed: u64) -> CategoricalGrid {
        let mut r = rng(seed);
        let data: Vec<u8> = (0..32 * 32)
            .map(|i| u8::from((i / 32 + usize::from(r.gen_bool(0.2))) % 4 < 2))
            .collect();
        CategoricalGrid::new(&[32, 32], 2, data).unwrap()
    }

    #[test]
    fn train_writes_checkpoints_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let ti = tiny_ti(1);
        let arch = GanArchitecture::new(2, 3, vec![4, 1]);
        let mut cfg = TrainConfig::new(dir.path().join("a"));
        cfg.epochs = 2;
        cfg.minibatches_per_epoch = 3;
        cfg.batch_size = 4;
        cfg.latent_extent = 3;
        cfg.seed = 11;
        let out = train(&ti, &arch, &cfg).unwrap();
        assert_eq!(out.checkpoints.len(), 2);
        assert_eq!(out.records.len(), 6);
        assert!(out.loss_csv.exists());
        for p in &out.checkpoints {
            let (net, meta) = crate::checkpoint::load_checkpoint(p).unwrap();
            assert_eq!(net.role, Role::Generator);
            assert_eq!(meta.seed, 11);
        }

        let mut cfg2 = cfg.clone();
        cfg2.checkpoint_dir = dir.path().join("b");
        let out2 = train(&ti, &arch, &cfg2).unwrap();
        assert_eq!(out.records, out2.records);
        // final checkpoints byte-identical
        let a = std::fs::read(&out.checkpoints[1]).unwrap();
        let b = std::fs::read(&out2.checkpoints[1]).unwrap();
        assert_eq!(a, b);

        let mut cfg3 = cfg.clone();
        cfg3.checkpoint_dir = dir.path().join("c");
        cfg3.seed = 12;
        let out3 = train(&ti, &arch, &cfg3).unwrap();
        assert_ne!(out.records, out3.records);
    }
}

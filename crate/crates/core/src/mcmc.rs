//! Multi-chain MCMC over the latent field: differential-evolution jumps
//! drawn from a thinned past-state archive plus occasional snooker moves
//! (the DREAM(ZS) scheme), a Gaussian data likelihood, an optional
//! direct-conditioning likelihood term, vanishing likelihood tempering
//! during burn-in, and the Gelman-Rubin convergence diagnostic.
//!
//! Chain states live in [-1, 1]^dim; out-of-bounds proposal components are
//! reflected back into the box. All randomness derives from per-chain
//! ChaCha streams split from the master seed, so runs are reproducible and
//! independent of evaluation order.

use crate::convnet::NetworkParams;
use crate::error::{Error, Result};
use crate::flow::{observe, solve_heads, FlowModel};
use crate::grid::{write_grid, CategoricalGrid, Grid};
use crate::simulate::{generate, LatentField, PostprocessSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Std of the tiny Gaussian jitter added to differential-evolution jumps.
const DE_EPS_STD: f64 = 1e-6;
/// Crossover probabilities the per-dimension mask is drawn from.
const CROSSOVERS: [f64; 3] = [1.0 / 3.0, 2.0 / 3.0, 1.0];

/// Likelihood tempering schedule: the effective noise std is
/// sigma_e * max(1, t0 * exp(-t / tau)) while t < burn_in, sigma_e after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperingConfig {
    pub t0: f64,
    pub tau: f64,
    pub burn_in: usize,
}

impl TemperingConfig {
    pub fn disabled() -> Self {
        TemperingConfig {
            t0: 1.0,
            tau: 1.0,
            burn_in: 0,
        }
    }

    /// Default schedule for an iteration budget: burn-in is 20% of the
    /// budget, the decay constant one fifth of the burn-in.
    pub fn for_budget(n_iterations: usize) -> Self {
        let burn_in = n_iterations / 5;
        TemperingConfig {
            t0: 10.0,
            tau: (burn_in as f64 / 5.0).max(1.0),
            burn_in,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    /// Data noise std (m).
    pub sigma_e: f64,
    /// Weight of the direct-conditioning term.
    pub sigma_x: f64,
    pub tempering: TemperingConfig,
    /// Append chain states to the archive every this many iterations.
    pub archive_thin: usize,
    pub snooker_prob: f64,
    /// Scale b* of the uniform jump-length perturbation.
    pub jitter: f64,
    pub seed: u64,
    /// Record the Gelman-Rubin diagnostic every this many iterations
    /// (0 records only the final value).
    pub rhat_interval: usize,
    /// Number of most recent archive states used for conditioning-accuracy
    /// reports.
    pub accuracy_window: usize,
}

impl InversionConfig {
    pub fn new(n_chains: usize, n_iterations: usize, seed: u64) -> Self {
        InversionConfig {
            n_chains,
            n_iterations,
            sigma_e: 0.01,
            sigma_x: 0.5,
            tempering: TemperingConfig::for_budget(n_iterations),
            archive_thin: 10,
            snooker_prob: 0.1,
            jitter: 1e-6,
            seed,
            rhat_interval: (n_iterations / 20).max(1),
            accuracy_window: 160,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 3 {
            return Err(Error::Sampler(
                "need at least 3 chains for pair sampling".into(),
            ));
        }
        if !(self.sigma_e > 0.0) || !(self.sigma_x > 0.0) {
            return Err(Error::Sampler("sigma_e and sigma_x must be positive".into()));
        }
        if self.tempering.t0 < 1.0 {
            return Err(Error::Sampler("tempering t0 must be >= 1".into()));
        }
        if self.tempering.burn_in > 0 && self.tempering.t0 > 1.0 && !(self.tempering.tau > 0.0) {
            return Err(Error::Sampler("tempering tau must be positive".into()));
        }
        if self.archive_thin == 0 {
            return Err(Error::Sampler("archive thinning interval must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.snooker_prob) {
            return Err(Error::Sampler("snooker probability must be in [0, 1]".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Likelihood pieces
// ---------------------------------------------------------------------------

/// Gaussian log-likelihood of uncorrelated residuals with known std:
/// -N/2 log(2 pi) - N log(sigma) - sum((d - F)^2) / (2 sigma^2).
pub fn log_likelihood(simulated: &[f64], observed: &[f64], sigma: f64) -> Result<f64> {
    if simulated.len() != observed.len() || simulated.is_empty() {
        return Err(Error::Sampler(format!(
            "length mismatch: {} simulated vs {} observed",
            simulated.len(),
            observed.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Sampler("sigma must be positive".into()));
    }
    let ssr: f64 = simulated
        .iter()
        .zip(observed)
        .map(|(s, d)| (d - s) * (d - s))
        .sum();
    Ok(gaussian_loglik_from_ssr(ssr, simulated.len(), sigma))
}

/// Same likelihood expressed through the residual sum of squares, which is
/// what the sampler caches so tempering can rescale sigma cheaply.
pub fn gaussian_loglik_from_ssr(ssr: f64, n: usize, sigma: f64) -> f64 {
    let n = n as f64;
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - n * sigma.ln() - ssr / (2.0 * sigma * sigma)
}

/// A known facies value at one grid cell (storage-order index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditioningPoint {
    pub idx: Vec<usize>,
    pub facies: u8,
}

/// Direct-conditioning log-likelihood: Gaussian mismatch between target
/// facies codes and the realization's codes at the conditioning cells,
/// weighted by sigma_x. An empty point list contributes exactly zero.
pub fn conditioning_loglik(
    realization: &CategoricalGrid,
    points: &[ConditioningPoint],
    sigma_x: f64,
) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    if !(sigma_x > 0.0) {
        return Err(Error::Sampler("sigma_x must be positive".into()));
    }
    let mut ssr = 0.0;
    for p in points {
        if p.idx.len() != realization.dims()
            || p.idx
                .iter()
                .zip(realization.extents())
                .any(|(&i, &e)| i >= e)
        {
            return Err(Error::OutOfRange(format!(
                "conditioning point {:?} outside grid {:?}",
                p.idx,
                realization.extents()
            )));
        }
        let actual = realization.get(&p.idx) as f64;
        let target = p.facies as f64;
        ssr += (target - actual) * (target - actual);
    }
    Ok(gaussian_loglik_from_ssr(ssr, points.len(), sigma_x))
}

/// Mismatch count between a realization and conditioning targets.
pub fn conditioning_mismatches(realization: &CategoricalGrid, points: &[ConditioningPoint]) -> usize {
    points
        .iter()
        .filter(|p| realization.get(&p.idx) != p.facies)
        .count()
}

// ---------------------------------------------------------------------------
// Proposals
// ---------------------------------------------------------------------------

/// Reflect a coordinate into [-1, 1]; periodic-4 unwrap followed by
/// reflection, an involution that preserves uniform measure.
#[inline]
pub fn fold_into_bounds(x: f64) -> f64 {
    let y = (x + 1.0).rem_euclid(4.0);
    if y <= 2.0 {
        y - 1.0
    } else {
        3.0 - y
    }
}

/// Jump scale of the parallel-direction move: 2.38 / sqrt(2 delta d').
#[inline]
pub fn de_gamma(delta: usize, d_prime: usize) -> f64 {
    2.38 / (2.0 * (delta * d_prime) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub candidate: Vec<f64>,
    /// Additive log-space correction to the acceptance ratio (nonzero only
    /// for snooker moves, whose line projection is not symmetric in volume).
    pub log_correction: f64,
}

fn distinct_indices<const N: usize>(n: usize, rng: &mut impl Rng) -> [usize; N] {
    let mut out = [0usize; N];
    let mut filled = 0;
    while filled < N {
        let cand = rng.gen_range(0..n);
        if !out[..filled].contains(&cand) {
            out[filled] = cand;
            filled += 1;
        }
    }
    out
}

/// Draw one candidate state: with probability 1 - snooker_prob a
/// differential-evolution jump built from archive difference pairs with a
/// per-dimension crossover mask, otherwise a snooker jump along the line to
/// a random archive state. Components are folded back into [-1, 1].
pub fn propose(
    state: &[f64],
    archive: &[Vec<f64>],
    snooker_prob: f64,
    jitter: f64,
    rng: &mut impl Rng,
) -> Result<Proposal> {
    if archive.len() < 3 {
        return Err(Error::Sampler(format!(
            "archive holds {} states, need at least 3",
            archive.len()
        )));
    }
    let dim = state.len();
    let snooker = rng.gen::<f64>() < snooker_prob;
    let mut candidate = state.to_vec();
    let mut log_correction = 0.0;

    if snooker {
        let [iz, i1, i2] = distinct_indices::<3>(archive.len(), rng);
        let z = &archive[iz];
        let line: Vec<f64> = state.iter().zip(z).map(|(a, b)| a - b).collect();
        let norm2: f64 = line.iter().map(|v| v * v).sum();
        if norm2 > 0.0 {
            let gamma_s = rng.gen_range(1.2..2.2);
            let proj = |w: &
[f64]| -> f64 {
                w.iter()
                    .zip(z)
                    .zip(&line)
                    .map(|((a, b), l)| (a - b) * l)
                    .sum::<f64>()
                    / norm2
            };
            let scale = gamma_s * (proj(&archive[i1]) - proj(&archive[i2]));
            for (c, l) in candidate.iter_mut().zip(&line) {
                *c += scale * l;
            }
            for c in candidate.iter_mut() {
                *c = fold_into_bounds(*c);
            }
            let dist_new: f64 = candidate
                .iter()
                .zip(z)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let dist_old = norm2.sqrt();
            log_correction = (dim as f64 - 1.0) * (dist_new.ln() - dist_old.ln());
            return Ok(Proposal {
                candidate,
                log_correction,
            });
        }
        // degenerate line: fall through to a pure jitter move
        let normal = Normal::new(0.0, DE_EPS_STD).expect("positive std");
        for c in candidate.iter_mut() {
            *c = fold_into_bounds(*c + normal.sample(rng));
        }
        return Ok(Proposal {
            candidate,
            log_correction,
        });
    }

    // parallel-direction move
    let delta = rng.gen_range(1..=3usize);
    let mut diff = vec![0.0; dim];
    for _ in 0..delta {
        let [r1, r2] = distinct_indices::<2>(archive.len(), rng);
        for (d, (a, b)) in diff.iter_mut().zip(archive[r1].iter().zip(&archive[r2])) {
            *d += a - b;
        }
    }
    let cr = CROSSOVERS[rng.gen_range(0..CROSSOVERS.len())];
    let mut mask: Vec<bool> = (0..dim).map(|_| rng.gen::<f64>() < cr).collect();
    if mask.iter().all(|&m| !m) {
        mask[rng.gen_range(0..dim)] = true;
    }
    let d_prime = mask.iter().filter(|&&m| m).count();
    let gamma = de_gamma(delta, d_prime);
    let normal = Normal::new(0.0, DE_EPS_STD).expect("positive std");
    for j in 0..dim {
        if mask[j] {
            let e = rng.gen_range(-jitter..=jitter);
            candidate[j] =
                fold_into_bounds(candidate[j] + (1.0 + e) * gamma * diff[j] + normal.sample(rng));
        }
    }
    Ok(Proposal {
        candidate,
        log_correction,
    })
}

/// Metropolis rule on log densities: accept with probability
/// min(1, exp(new - old)). Two impossible states reject with a warning.
pub fn metropolis_accept(log_post_new: f64, log_post_old: f64, rng: &mut impl Rng) -> bool {
    if log_post_new.is_nan() || log_post_old.is_nan() {
        log::warn!("NaN log-posterior in acceptance test; rejecting");
        return false;
    }
    if log_post_new == f64::NEG_INFINITY {
        if log_post_old == f64::NEG_INFINITY {
            log::warn!("both current and proposed states have zero posterior density");
        }
        return false;
    }
    if log_post_new >= log_post_old {
        return true;
    }
    rng.gen::<f64>() < (log_post_new - log_post_old).exp()
}

/// Effective noise std at iteration `t` under the tempering schedule;
/// monotone non-increasing and equal to sigma_e from burn-in on.
pub fn temper_sigma(t: usize, sigma_e: f64, temp: &TemperingConfig) -> f64 {
    if t >= temp.burn_in {
        return sigma_e;
    }
    sigma_e * (temp.t0 * (-(t as f64) / temp.tau).exp()).max(1.0)
}

// ---------------------------------------------------------------------------
// Gelman-Rubin
// ---------------------------------------------------------------------------

/// Potential scale reduction per dimension, computed on the second half of
/// each chain's trace. Zero within-chain variance reports +infinity.
pub fn gelman_rubin(theta_traces: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    let m = theta_traces.len();
    if m < 2 {
        return Err(Error::Sampler("need at least 2 chains".into()));
    }
    let len = theta_traces.iter().map(|t| t.len()).min().unwrap_or(0);
    let start = len / 2;
    let n = len - start;
    if n < 4 {
        return Err(Error::Sampler(format!(
            "need at least 4 retained samples per chain, have {n}"
        )));
    }
    let dim = theta_traces[0][0].len();
    let mut rhat = Vec::with_capacity(dim);
    for d in 0..dim {
        let mut means = Vec::with_capacity(m);
        let mut vars = Vec::with_capacity(m);
        for chain in theta_traces {
            let xs = &chain[chain.len() - n..];
            let mean = xs.iter().map(|x| x[d]).sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x[d] - mean) * (x[d] - mean)).sum::<f64>()
                / (n as f64 - 1.0);
            means.push(mean);
            vars.push(var);
        }
        let w = vars.iter().sum::<f64>() / m as f64;
        let grand = means.iter().sum::<f64>() / m as f64;
        let var_of_means =
            means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m as f64 - 1.0);
        if w == 0.0 {
            log::warn!("zero within-chain variance in dimension {d}");
            rhat.push(f64::INFINITY);
            continue;
        }
        let n = n as f64;
        let var_plus = (n - 1.0) / n * w + var_of_means;
        rhat.push((var_plus / w).sqrt());
    }
    Ok(rhat)
}

// ---------------------------------------------------------------------------
// Sampler driver
// ---------------------------------------------------------------------------

/// Output of one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardEval {
    pub simulated: Vec<f64>,
    pub cond_loglik: f64,
}

/// Anything the sampler can invert: maps a latent vector to simulated
/// observations plus an optional conditioning term.
pub trait ForwardModel {
    fn dim(&self) -> usize;
    fn evaluate(&self, theta: &[f64]) -> Result<ForwardEval>;
}

#[derive(Debug, Clone, Default)]
pub struct ChainTrace {
    /// Log posterior density (data term at the nominal sigma_e plus the
    /// conditioning term) of the chain state after each iteration.
    pub loglik: Vec<f64>,
    pub rmse: Vec<f64>,
    pub accepted: Vec<bool>,
}

/// States, archive, traces and diagnostics of the chain ensemble.
#[derive(Debug, Clone)]
pub struct ChainEnsemble {
    pub dim: usize,
    pub states: Vec<Vec<f64>>,
    pub archive: Vec<Vec<f64>>,
    pub traces: Vec<ChainTrace>,
    pub theta_traces: Vec<Vec<Vec<f64>>>,
    pub accept_counts: Vec<usize>,
    pub eval_failures: usize,
}

impl ChainEnsemble {
    /// Mean over the second half of every chain, per dimension.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        let mut count = 0usize;
        for chain in &self.theta_traces {
            for theta in &chain[chain.len() / 2..] {
                for (m, v) in mean.iter_mut().zip(theta) {
                    *m += v;
                }
                count += 1;
            }
        }
        if count > 0 {
            mean.iter_mut().for_each(|m| *m /= count as f64);
        }
        mean
    }

    /// Per-dimension variance over the second half of every chain.
    pub fn posterior_variance(&self) -> Vec<f64> {
        let mean = self.posterior_mean();
        let mut var = vec![0.0; self.dim];
        let mut count = 0usize;
        for chain in &self.theta_traces {
            for theta in &chain[chain.len() / 2..] {
                for ((v, m), x) in var.iter_mut().zip(&mean).zip(theta) {
                    *v += (x - m) * (x - m);
                }
                count += 1;
            }
        }
        if count > 1 {
            var.iter_mut().for_each(|v| *v /= (count - 1) as f64);
        }
        var
    }

    /// Best (smallest) RMSE seen anywhere in the run.
    pub fn best_rmse(&self) -> f64 {
        self.traces
            .iter()
            .flat_map(|t| t.rmse.iter())
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct SamplerRun {
    pub ensemble: ChainEnsemble,
    /// (iteration, R-hat per dimension) records.
    pub rhat_series: Vec<(usize, Vec<f64>)>,
}

struct StateInfo {
    theta: Vec<f64>,
    ssr: f64,
    cond: f64,
    rmse: f64,
    ok: bool,
}

fn eval_state(
    model: &dyn ForwardModel,
    observed: &[f64],
    theta: Vec<f64>,
    failures: &mut usize,
) -> Result<StateInfo> {
    match model.evaluate(&theta) {
        Ok(eval) => {
            if eval.simulated.len() != observed.len() {
                return Err(Error::Sampler(format!(
                    "forward model produced {} values for {} observations",
                    eval.simulated.len(),
                    observed.len()
                )));
            }
            let ssr: f64 = eval
                .simulated
                .iter()
                .zip(observed)
                .map(|(s, d)| (d - s) * (d - s))
                .sum();
            let rmse = (ssr / observed.len() as f64).sqrt();
            Ok(StateInfo {
                theta,
                ssr,
                cond: eval.cond_loglik,
                rmse,
                ok: true,
            })
        }
        Err(err) => {
            log::warn!("forward evaluation failed, treating state as impossible: {err}");
            *failures += 1;
            Ok(StateInfo {
                theta,
                ssr: f64::INFINITY,
                cond: 0.0,
                rmse: f64::INFINITY,
                ok: false,
            })
        }
    }
}

fn state_loglik(info: &StateInfo, n_obs: usize, sigma: f64) -> f64 {
    if !info.ok {
        return f64::NEG_INFINITY;
    }
    gaussian_loglik_from_ssr(info.ssr, n_obs, sigma) + info.cond
}

/// Run the sampler against an arbitrary forward model. Chains and archive
/// are initialized from the uniform prior; the archive starts with
/// 10 * dim prior draws and is appended every `archive_thin` iterations.
pub fn run_sampler(
    cfg: &InversionConfig,
    model: &dyn ForwardModel,
    observed: &[f64],
) -> Result<SamplerRun> {
    cfg.validate()?;
    let dim = model.dim();
    if dim == 0 {
        return Err(Error::Sampler("zero-dimensional parameter space".into()));
    }
    if observed.is_empty() {
        return Err(Error::Sampler("empty observation vector".into()));
    }
    let n_obs = observed.len();

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    master.set_stream(0);
    let mut chain_rngs: Vec<ChaCha8Rng> = (0..cfg.n_chains)
        .map(|c| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(1000 + c as u64);
            r
        })
        .collect();

    let uniform = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    };

    let mut archive: Vec<Vec<f64>> = (0..(10 * dim).max(3)).map(|_| uniform(&mut master)).collect();
    let mut eval_failures = 0usize;
    let mut states: Vec<StateInfo> = Vec::with_capacity(cfg.n_chains);
    for _ in 0..cfg.n_chains {
        let theta = uniform(&mut master);
        states.push(eval_state(model, observed, theta, &mut eval_failures)?);
    }

    let mut traces = vec![ChainTrace::default(); cfg.n_chains];
    let mut theta_traces: Vec<Vec<Vec<f64>>> = vec![Vec::new(); cfg.n_chains];
    let mut accept_counts = vec![0usize; cfg.n_chains];
    let mut rhat_series: Vec<(usize, Vec<f64>)> = Vec::new();

    for t in 0..cfg.n_iterations {
        let sigma_eff = temper_sigma(t, cfg.sigma_e, &cfg.tempering);
        for c in 0..cfg.n_chains {
            let rng = &mut chain_rngs[c];
            let proposal = propose(
                &states[c].theta,
                &archive,
                cfg.snooker_prob,
                cfg.jitter,
                rng,
            )?;
            let cand = eval_state(model, observed, proposal.candidate, &mut eval_failures)?;
            let accepted = if cand.ok {
                let new_ll = state_loglik(&cand, n_obs, sigma_eff) + proposal.log_correction;
                let old_ll = state_loglik(&states[c], n_obs, sigma_eff);
                metropolis_accept(new_ll, old_ll, rng)
            } else {
                false
            };
            if accepted {
                states[c] = cand;
                accept_counts[c] += 1;
            }
            let s = &states[c];
            traces[c]
                .loglik
                .push(state_loglik(s, n_obs, cfg.sigma_e));
            traces[c].rmse.push(s.rmse);
            traces[c].accepted.push(accepted);
            theta_traces[c].push(s.theta.clone());
        }
        if (t + 1) % cfg.archive_thin == 0 {
            archive.extend(states.iter().map(|s| s.theta.clone()));
        }
        if cfg.rhat_interval > 0 && (t + 1) % cfg.rhat_interval == 0 {
            if let Ok(r) = gelman_rubin(&theta_traces) {
                rhat_series.push((t + 1, r));
            }
        }
    }

    if rhat_series.last().map(|(t, _)| *t) != Some(cfg.n_iterations) {
        if let Ok(r) = gelman_rubin(&theta_traces) {
            rhat_series.push((cfg.n_iterations, r));
        }
    }

    Ok(SamplerRun {
        ensemble: ChainEnsemble {
            dim,
            states: states.into_iter().map(|s| s.theta).collect(),
            archive,
            traces,
            theta_traces,
            accept_counts,
            eval_failures,
        },
        rhat_series,
    })
}

// ---------------------------------------------------------------------------
// Generator + flow forward model and the full inversion
// ---------------------------------------------------------------------------

/// The full latent-to-heads forward problem: generator, post-processing,
/// facies-to-conductivity mapping, flow solve, observation extraction, and
/// the optional conditioning term.
pub struct InversionProblem<'a> {
    pub generator: &'a NetworkParams,
    pub q: usize,
    pub latent_extents: Vec<usize>,
    pub post: PostprocessSpec,
    pub flow: FlowModel,
    pub k_mapping: Vec<f64>,
    pub conditioning: Vec<ConditioningPoint>,
    pub sigma_x: f64,
}

impl InversionProblem<'_> {
    /// Realization for a latent vector, as used inside [`ForwardModel::evaluate`].
    pub fn realize(&self, theta: &[f64]) -> Result<CategoricalGrid> {
        let z = LatentField::from_values(self.q, &self.latent_extents, theta.to_vec())?;
        match generate(self.generator, &z, &self.post)? {
            Grid::Categorical(g) => Ok(g),
            Grid::Continuous(_) => Err(Error::Sampler(
                "inversion requires a thresholding post-process".into(),
            )),
        }
    }
}

impl ForwardModel for InversionProblem<'_> {
    fn dim(&self) -> usize {
        self.q * self.latent_extents.iter().product::<usize>()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<ForwardEval> {
        let grid = self.realize(theta)?;
        if grid.extents() != [self.flow.ny, self.flow.nx] {
            return Err(Error::ShapeMismatch {
                axis: 0,
                expected: self.flow.ny,
                actual: grid.extents()[0],
                context: "realization extents vs flow grid".into(),
            });
        }
        let mut model = self.flow.clone();
        model.k = crate::flow::k_field_from_facies(&grid, &self.k_mapping)?;
        let heads = solve_heads(&model)?;
        let simulated = observe(&heads, &model);
        let cond_loglik = conditioning_loglik(&grid, &self.conditioning, self.sigma_x)?;
        Ok(ForwardEval {
            simulated,
            cond_loglik,
        })
    }
}

/// Per-sample conditioning outcome over the report window.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningReport {
    pub samples: usize,
    /// Mean fraction of honored conditioning points.
    pub mean_accuracy: f64,
    /// Fraction of samples honoring every point.
    pub all_honored_fraction: f64,
    /// Mismatch count per sample.
    pub mismatches: Vec<usize>,
}

#[derive(Debug)]
pub struct InversionRun {
    pub sampler: SamplerRun,
    /// Realization of each chain's final state.
    pub final_realizations: Vec<CategoricalGrid>,
    pub conditioning: Option<ConditioningReport>,
}

/// Sample the posterior over the latent field and post-process the results:
/// final-state realizations plus, when conditioning points are present, an
/// accuracy report over the most recent archive window and final states.
pub fn run_inversion(
    cfg: &InversionConfig,
    problem: &InversionProblem<'_>,
    observed: &[f64],
) -> Result<InversionRun> {
    let sampler = run_sampler(cfg, problem, observed)?;
    let final_realizations: Vec<CategoricalGrid> = sampler
        .ensemble
        .states
        .iter()
        .map(|theta| problem.realize(theta))
        .collect::<Result<_>>()?;

    let conditioning = if problem.conditioning.is_empty() {
        None
    } else {
        let archive = &sampler.ensemble.archive;
        let window = cfg.accuracy_window.min(archive.len());
        let mut mismatches = Vec::with_capacity(window + final_realizations.len());
        for theta in archive[archive.len() - window..].iter() {
            let grid = problem.realize(theta)?;
            mismatches.push(conditioning_mismatches(&grid, &problem.conditioning));
        }
        for grid in &final_realizations {
            mismatches.push(conditioning_mismatches(grid, &problem.conditioning));
        }
        let n_points = problem.conditioning.len() as f64;
        let samples = mismatches.len();
        let mean_accuracy = mismatches
            .iter()
            .map(|&m| 1.0 - m as f64 / n_points)
            .sum::<f64>()
            / samples as f64;
        let all_honored_fraction =
            mismatches.iter().filter(|&&m| m == 0).count() as f64 / samples as f64;
        Some(ConditioningReport {
            samples,
            mean_accuracy,
            all_honored_fraction,
            mismatches,
        })
    };

    Ok(InversionRun {
        sampler,
        final_realizations,
        conditioning,
    })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Per-chain CSV traces: iteration, log-likelihood, RMSE, acceptance flag.
pub fn write_traces(dir: &Path, ensemble: &ChainEnsemble) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (c, trace) in ensemble.traces.iter().enumerate() {
        let mut out: Vec<u8> = b"iteration,log_likelihood,rmse,accepted\n".to_vec();
        for i in 0..trace.loglik.len() {
            writeln!(
                out,
                "{},{},{},{}",
                i + 1,
                trace.loglik[i],
                trace.rmse[i],
                u8::from(trace.accepted[i])
            )?;
        }
        fs::write(dir.join(format!("chain_{c:02}.csv")), out)?;
    }
    Ok(())
}

/// R-hat series CSV: iteration column then one column per dimension.
pub fn write_rhat(path: &Path, dim: usize, series: &[(usize, Vec<f64>)]) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    write!(out, "iteration")?;
    for d in 0..dim {
        write!(out, ",rhat_{d:02}")?;
    }
    out.push(b'\n');
    for (t, rhats) in series {
        write!(out, "{t}")?;
        for r in rhats {
            write!(out, ",{r}")?;
        }
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Thinned state archive: text header then raw little-endian f64 states.
pub fn write_archive(path: &Path, dim: usize, archive: &[Vec<f64>]) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    writeln!(out, "geogan-states 1")?;
    writeln!(out, "dim {dim}")?;
    writeln!(out, "count {}", archive.len())?;
    writeln!(out, "end")?;
    for state in archive {
        for v in state {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read back a state archive written by [`write_archive`].
pub fn read_archive(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    };
    let header_end = bytes
        .windows(4)
        .position(|w| w == b"end\n")
        .ok_or_else(|| bad("missing end marker"))?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| bad("non-utf8 header"))?;
    let mut lines = header.lines();
    if lines.next() != Some("geogan-states 1") {
        return Err(bad("missing magic"));
    }
    let dim: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("dim "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("bad dim"))?;
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("count "))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("bad count"))?;
    let payload = &bytes[header_end + 4..];
    if payload.len() != dim * count * 8 {
        return Err(bad("payload size mismatch"));
    }
    let mut states = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(dim * 8) {
        states.push(
            chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    Ok((dim, states))
}

/// Write every artifact of an inversion run into `dir`: traces, R-hat
/// series, state archive, final realizations and the conditioning report.
pub fn write_inversion_outputs(dir: &Path, run: &InversionRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_traces(dir, &run.sampler.ensemble)?;
    write_rhat(
        &dir.join("rhat.csv"),
        run.sampler.ensemble.dim,
        &run.sampler.rhat_series,
    )?;
    write_archive(
        &dir.join("archive.bin"),
        run.sampler.ensemble.dim,
        &run.sampler.ensemble.archive,
    )?;
    for (c, grid) in run.final_realizations.iter().enumerate() {
        write_grid(
            &dir.join(format!("realization_chain_{c:02}.grid")),
            &Grid::Categorical(grid.clone()),
        )?;
    }
    if let Some(report) = &run.conditioning {
        let mut out: Vec<u8> = b"sample,mismatches,honored_all\n".to_vec();
        for (i, &m) in report.mismatches.iter().enumerate() {
            writeln!(out, "{i},{m},{}", u8::from(m == 0))?;
        }
        writeln!(
            out,
            "# samples={} mean_accuracy={} all_honored_fraction={}",
            report.samples, report.mean_accuracy, report.all_honored_fraction
        )?;
        fs::write(dir.join("conditioning_report.csv"), out)?;
    }
    Ok(())
}

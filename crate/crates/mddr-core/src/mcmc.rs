//! Metropolis-adjusted Langevin sampling of the generalized posterior.
//!
//! Each iteration alternates one MALA update of the map parameters φ and one
//! of the unconstrained weights ϖ (Metropolis within Gibbs). Within one
//! update the current and proposed states are evaluated under the same
//! counter-based projection and solver streams, so the acceptance ratio uses
//! common random numbers; streams are refreshed between updates.
//!
//! Likelihood gradients are Monte Carlo (finite projections) and approximate
//! (a T-step barycenter solve), so the sampler is a pragmatic MALA: the
//! Metropolis correction is computed from the same approximate evaluations.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MddrError, Result};
use crate::model::{
    contract_atom_gradient, fitted_distribution, gen_log_lik_with, log_prior, log_prior_grad,
    simplex_chain_rule, simplex_forward, simplex_inverse, LikelihoodConfig, LinearMap,
    ModelParams, Observation, PriorConfig, TrackJacobians,
};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::sliced_ot::{sample_projections, sw_grad_points};

/// MALA settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MalaConfig {
    /// Step size η₁ for the map parameters φ.
    pub eta_phi: f64,
    /// Step size η₂ for the unconstrained weights ϖ.
    pub eta_omega: f64,
    /// Total chain length.
    pub n_steps: usize,
    /// Iterations discarded before storage.
    #[serde(default)]
    pub burn_in: usize,
    /// Storage stride after burn-in.
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Root seed for all chain streams.
    #[serde(default)]
    pub seed: u64,
}

fn default_thin() -> usize {
    1
}

impl Default for MalaConfig {
    fn default() -> Self {
        Self {
            eta_phi: 1e-3,
            eta_omega: 5e-3,
            n_steps: 100,
            burn_in: 0,
            thin: 1,
            seed: 0,
        }
    }
}

impl MalaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_phi > 0.0) {
            return Err(MddrError::invalid("mala.eta_phi must be > 0"));
        }
        if !(self.eta_omega > 0.0) {
            return Err(MddrError::invalid("mala.eta_omega must be > 0"));
        }
        if self.n_steps == 0 {
            return Err(MddrError::invalid("mala.n_steps must be >= 1"));
        }
        if self.burn_in >= self.n_steps {
            return Err(MddrError::invalid("mala.burn_in must be < mala.n_steps"));
        }
        if self.thin == 0 {
            return Err(MddrError::invalid("mala.thin must be >= 1"));
        }
        Ok(())
    }
}

/// One stored posterior draw.
#[derive(Debug, Clone)]
pub struct ChainSample {
    pub params: ModelParams,
    pub log_post: f64,
    pub accepted_phi: bool,
    pub accepted_omega: bool,
    pub step: usize,
}

/// Stream keys for one MH update: the root chain seed plus a monotone
/// substep counter (two substeps per iteration).
#[derive(Debug, Clone, Copy)]
pub struct StepStreams {
    pub root: u64,
    pub substep: u64,
}

impl StepStreams {
    pub fn likelihood_seed(&self) -> u64 {
        derive_seed(self.root, &[tag::LIKELIHOOD, self.substep])
    }

    pub fn solver_seed(&self, observation: usize) -> u64 {
        derive_seed(self.root, &[tag::OBSERVATION, self.substep, observation as u64])
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Block {
    Phi,
    Omega,
}

/// Full log-posterior and the gradient of one parameter block, evaluated
/// under frozen streams.
fn eval_block(
    params: &ModelParams,
    dataset: &[Observation],
    lik: &LikelihoodConfig,
    prior: &PriorConfig,
    block: Block,
    streams: &StepStreams,
) -> Result<(f64, Vec<f64>)> {
    let d = params.response_dim();
    let proj = sample_projections(lik.projections, d, streams.likelihood_seed())?;
    let track = match block {
        Block::Phi => TrackJacobians::phi(),
        Block::Omega => TrackJacobians::pi(),
    };
    let grad_len = match block {
        Block::Phi => params.phi_len(),
        Block::Omega => params.num_predictors(),
    };

    let per_obs: Vec<Result<(f64, Vec<f64>)>> = dataset
        .par_iter()
        .enumerate()
        .map(|(i, obs)| {
            let fitted = fitted_distribution(params, obs, lik, track, streams.solver_seed(i))?;
            let ll = gen_log_lik_with(&fitted.atoms, &obs.response, lik, &proj)?;
            let atom_grad = sw_grad_points(&fitted.atoms, &obs.response, &proj, lik.p)?;
            let jac = match block {
                Block::Phi => fitted.jac_phi.as_ref().expect("tracked"),
                Block::Omega => fitted.jac_pi.as_ref().expect("tracked"),
            };
            let mut grad = contract_atom_gradient(jac, &atom_grad);
            for g in &mut grad {
                *g *= -lik.w;
            }
            Ok((ll, grad))
        })
        .collect();

    let mut log_lik = 0.0;
    let mut lik_grad = vec![0.0; grad_len];
    for r in per_obs {
        let (ll, grad) = r?;
        log_lik += ll;
        for (acc, g) in lik_grad.iter_mut().zip(&grad) {
            *acc += g;
        }
    }

    let log_post = log_prior(params, prior)? + log_lik;
    let (prior_phi, prior_omega) = log_prior_grad(params, prior)?;
    let grad = match block {
        Block::Phi => {
            let mut g = prior_phi;
            for (acc, l) in g.iter_mut().zip(&lik_grad) {
                *acc += l;
            }
            g
        }
        Block::Omega => {
            let pi = simplex_forward(params.omega());
            let mut g = simplex_chain_rule(&lik_grad, &pi)?;
            for (acc, p) in g.iter_mut().zip(&prior_omega) {
                *acc += p;
            }
            g
        }
    };
    Ok((log_post, grad))
}

/// Gradient of the log generalized posterior with respect to the flat map
/// parameters φ, under the given streams.
pub fn grad_log_post_phi(
    params: &ModelParams,
    dataset: &[Observation],
    lik: &LikelihoodConfig,
    prior: &PriorConfig,
    streams: &StepStreams,
) -> Result<Vec<f64>> {
    Ok(eval_block(params, dataset, lik, prior, Block::Phi, streams)?.1)
}

/// Gradient with respect to the unconstrained weights ϖ (length K−1; empty
/// for a single-predictor model).
pub fn grad_log_post_omega(
    params: &ModelParams,
    dataset: &[Observation],
    lik: &LikelihoodConfig,
    prior: &PriorConfig,
    streams: &StepStreams,
) -> Result<Vec<f64>> {
    Ok(eval_block(params, dataset, lik, prior, Block::Omega, streams)?.1)
}

/// Log-posterior under the given streams (no gradient).
pub fn log_posterior(
    params: &ModelParams,
    dataset: &[Observation],
    lik: &LikelihoodConfig,
    prior: &PriorConfig,
    streams: &StepStreams,
) -> Result<f64> {
    let d = params.response_dim();
    let proj = sample_projections(lik.projections, d, streams.likelihood_seed())?;
    let per_obs: Vec<Result<f64>> = dataset
        .par_iter()
        .enumerate()
        .map(|(i, obs)| {
            let fitted = fitted_distribution(
                params,
                obs,
                lik,
                TrackJacobians::none(),
                streams.solver_seed(i),
            )?;
            gen_log_lik_with(&fitted.atoms, &obs.response, lik, &proj)
        })
        .collect();
    let mut total = log_prior(params, prior)?;
    for r in per_obs {
        total += r?;
    }
    Ok(total)
}

fn is_recoverable(err: &MddrError) -> bool {
    matches!(err, MddrError::SolverDiverged { .. } | MddrError::Numerical { .. })
}

/// Outcome of one MALA kernel step.
struct KernelOutcome {
    x: Vec<f64>,
    log_post: f64,
    accepted: bool,
}

/// One MALA update of a generic target: propose
/// x* = x + η∇log p(x) + √(2η)·ξ and accept with the Metropolis ratio under
/// the Gaussian proposal densities. Numerical failures or non-finite
/// log-posteriors at the proposal auto-reject instead of aborting.
fn mala_kernel<F>(x: &[f64], mut eval: F, eta: f64, rng: &mut ChaCha8Rng) -> Result<KernelOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (lp, grad) = eval(x)?;
    if x.is_empty() {
        return Ok(KernelOutcome { x: Vec::new(), log_post: lp, accepted: true });
    }
    let mut proposal = vec![0.0; x.len()];
    for (p, (xi, g)) in proposal.iter_mut().zip(x.iter().zip(&grad)) {
        let noise: f64 = rng.sample(StandardNormal);
        *p = xi + eta * g + (2.0 * eta).sqrt() * noise;
    }
    let u: f64 = rng.gen();

    let (lp_prop, grad_prop) = match eval(&proposal) {
        Ok(v) => v,
        Err(e) if is_recoverable(&e) => {
            log::warn!("proposal evaluation failed ({e}); rejecting");
            return Ok(KernelOutcome { x: x.to_vec(), log_post: lp, accepted: false });
        }
        Err(e) => return Err(e),
    };
    if !lp_prop.is_finite() {
        return Ok(KernelOutcome { x: x.to_vec(), log_post: lp, accepted: false });
    }

    // log q(a | b) = −‖a − b − η∇log p(b)‖² / (4η), up to a shared constant.
    let log_q = |a: &[f64], b: &[f64], grad_b: &[f64]| -> f64 {
        let mut norm_sq = 0.0;
        for ((ai, bi), gi) in a.iter().zip(b).zip(grad_b) {
            let diff = ai - bi - eta * gi;
            norm_sq += diff * diff;
        }
        -norm_sq / (4.0 * eta)
    };
    let log_alpha = lp_prop - lp + log_q(x, &proposal, &grad_prop) - log_q(&proposal, x, &grad);
    if u.ln() < log_alpha {
        Ok(KernelOutcome { x: proposal, log_post: lp_prop, accepted: true })
    } else {
        Ok(KernelOutcome { x: x.to_vec(), log_post: lp, accepted: false })
    }
}

/// Which block a [`mala_step`] updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateBlock {
    Phi,
    Omega,
}

/// One Metropolis-within-Gibbs update of the chosen block. Returns the
/// (possibly unchanged) parameters, the current log-posterior under this
/// update's streams, and the acceptance flag.
#[allow(clippy::too_many_arguments)]
pub fn mala_step(
    params: &ModelParams,
    which: UpdateBlock,
    dataset: &[Observation],
    lik: &LikelihoodConfig,
    prior: &PriorConfig,
    mala: &MalaConfig,
    streams: &StepStreams,
    rng: &mut ChaCha8Rng,
) -> Result<(ModelParams, f64, bool)> {
    let (block, eta, x) = match which {
        UpdateBlock::Phi => (Block::Phi, mala.eta_phi, params.flatten_phi()),
        UpdateBlock::Omega => (Block::Omega, mala.eta_omega, params.omega().to_vec()),
    };
    let assemble = |vec: &[f64]| -> Result<ModelParams> {
        let mut p = params.clone();
        match block {
            Block::Phi => p.set_phi(vec)?,
            Block::Omega => p.set_omega(vec.to_vec())?,
        }
        Ok(p)
    };
    let outcome = mala_kernel(
        &x,
        |vec| {
            let candidate = assemble(vec)?;
            eval_block(&candidate, dataset, lik, prior, block, streams)
        },
        eta,
        rng,
    )?;
    let new_params = if outcome.accepted { assemble(&outcome.x)? } else { params.clone() };
    Ok((new_params, outcome.log_post, outcome.accepted))
}

/// Draws initial parameters: maps from the prior scaled by 0.1 (to start the
/// solver in a stable region) and uniform weights (ϖ = 0).
pub fn init_params(
    response_dim: usize,
    predictor_dims: &[usize],
    prior: &PriorConfig,
    seed: u64,
) -> Result<ModelParams> {
    let mut rng = stream_rng(seed, &[tag::CHAIN_INIT]);
    let mut laplace = |rng: &mut ChaCha8Rng| -> f64 {
        let u: f64 = rng.gen_range(-0.5..0.5);
        -prior.laplace_scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    };
    let sd = prior.normal_variance.sqrt();
    let maps = predictor_dims
        .iter()
        .map(|&h| {
            let mut a = ndarray::Array2::<f64>::zeros((response_dim, h));
            for v in a.iter_mut() {
                *v = 0.1 * laplace(&mut rng);
            }
            let mut b = ndarray::Array1::<f64>::zeros(response_dim);
            for v in b.iter_mut() {
                let g: f64 = rng.sample(StandardNormal);
                *v = 0.1 * sd * g;
            }
            LinearMap::new(a, b)
        })
        .collect::<Result<Vec<_>>>()?;
    ModelParams::new(maps, vec![0.0; predictor_dims.len() - 1])
}

/// Runs the full chain: per iteration one φ update then one ϖ update, with a
/// fresh stream per update. Stores post-burn-in, thinned samples. Fully
/// deterministic given the seed; single-predictor models skip the vacuous
/// weight update.
pub fn run_chain(
    dataset: &[Observation],
    init: ModelParams,
    lik: &LikelihoodConfig,
    prior: &PriorConfig,
    mala: &MalaConfig,
) -> Result<Vec<ChainSample>> {
    lik.validate()?;
    mala.validate()?;
    prior.validate(init.num_predictors())?;
    if dataset.is_empty() {
        return Err(MddrError::invalid("run_chain needs at least one observation"));
    }
    let mut rng = stream_rng(mala.seed, &[tag::MALA]);
    let mut params = init;
    let mut samples = Vec::new();
    let with_step = |e: MddrError, step: usize| {
        MddrError::numerical(format!("MCMC step {step}"), e.to_string())
    };
    for step in 0..mala.n_steps {
        let phi_streams = StepStreams { root: mala.seed, substep: 2 * step as u64 };
        let (next, mut log_post, accepted_phi) = mala_step(
            &params,
            UpdateBlock::Phi,
            dataset,
            lik,
            prior,
            mala,
            &phi_streams,
            &mut rng,
        )
        .map_err(|e| with_step(e, step))?;
        params = next;

        let mut accepted_omega = true;
        if params.num_predictors() > 1 {
            let omega_streams = StepStreams { root: mala.seed, substep: 2 * step as u64 + 1 };
            let (next, lp, accepted) = mala_step(
                &params,
                UpdateBlock::Omega,
                dataset,
                lik,
                prior,
                mala,
                &omega_streams,
                &mut rng,
            )
            .map_err(|e| with_step(e, step))?;
            params = next;
            log_post = lp;
            accepted_omega = accepted;
        }

        if step >= mala.burn_in && (step - mala.burn_in) % mala.thin == 0 {
            samples.push(ChainSample {
                params: params.clone(),
                log_post,
                accepted_phi,
                accepted_omega,
                step,
            });
        }
    }
    Ok(samples)
}

/// Posterior mean and 95% highest-density interval of vector draws,
/// per coordinate. The interval is the shortest contiguous window holding
/// 95% of the sorted values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Vec<f64>,
    pub hpd_lower: Vec<f64>,
    pub hpd_upper: Vec<f64>,
}

/// Shortest contiguous interval containing `mass` of the sorted values.
pub fn hpd_interval(sorted: &[f64], mass: f64) -> (f64, f64) {
    let n = sorted.len();
    let window = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (sorted[0], sorted[n - 1]);
    let mut best_width = f64::INFINITY;
    for i in 0..=(n - window) {
        let width = sorted[i + window - 1] - sorted[i];
        if width < best_width {
            best_width = width;
            best = (sorted[i], sorted[i + window - 1]);
        }
    }
    best
}

const MIN_SUMMARY_SAMPLES: usize = 20;

/// Summarizes vector-valued draws (one inner Vec per chain sample).
pub fn summarize(draws: &[Vec<f64>]) -> Result<Summary> {
    if draws.len() < MIN_SUMMARY_SAMPLES {
        return Err(MddrError::TooFewSamples { need: MIN_SUMMARY_SAMPLES, have: draws.len() });
    }
    let dim = draws[0].len();
    if draws.iter().any(|d| d.len() != dim) {
        return Err(MddrError::invalid("summary draws must share a dimension"));
    }
    let mut mean = vec![0.0; dim];
    for d in draws {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v / draws.len() as f64;
        }
    }
    let mut lower = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut column: Vec<f64> = draws.iter().map(|d| d[c]).collect();
        column.sort_unstable_by(f64::total_cmp);
        let (lo, hi) = hpd_interval(&column, 0.95);
        lower.push(lo);
        upper.push(hi);
    }
    Ok(Summary { mean, hpd_lower: lower, hpd_upper: upper })
}

/// Posterior summary of the barycenter weights over a chain.
pub fn summarize_weights(chain: &[ChainSample]) -> Result<Summary> {
    let draws: Vec<Vec<f64>> = chain
        .iter()
        .map(|s| s.params.weights().as_slice().to_vec())
        .collect();
    summarize(&draws)
}

/// One line of the on-disk chain format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainRecord {
    pub step: usize,
    pub log_post: f64,
    pub accepted_phi: bool,
    pub accepted_omega: bool,
    pub pi: Vec<f64>,
    pub phi: Vec<f64>,
}

impl ChainRecord {
    pub fn from_sample(sample: &ChainSample) -> Self {
        Self {
            step: sample.step,
            log_post: sample.log_post,
            accepted_phi: sample.accepted_phi,
            accepted_omega: sample.accepted_omega,
            pi: sample.params.weights().as_slice().to_vec(),
            phi: sample.params.flatten_phi(),
        }
    }

    /// Rebuilds model parameters from a record given the model dimensions.
    pub fn to_params(&self, response_dim: usize, predictor_dims: &[usize]) -> Result<ModelParams> {
        let maps: Vec<LinearMap> = predictor_dims
            .iter()
            .map(|&h| LinearMap::zeros(response_dim, h))
            .collect();
        let omega = if self.pi.len() > 1 {
            simplex_inverse(&self.pi)?
        } else {
            Vec::new()
        };
        let mut params = ModelParams::new(maps, omega)?;
        params.set_phi(&self.phi)?;
        Ok(params)
    }
}

/// Writes one JSON record per line.
pub fn write_chain_ndjson<W: Write>(mut out: W, chain: &[ChainSample]) -> Result<()> {
    for sample in chain {
        let record = ChainRecord::from_sample(sample);
        serde_json::to_writer(&mut out, &record).map_err(|e| MddrError::Parse(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a newline-delimited chain file.
pub fn read_chain_ndjson<R: BufRead>(input: R) -> Result<Vec<ChainRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ChainRecord = serde_json::from_str(&line)
            .map_err(|e| MddrError::Parse(format!("chain line {}: {e}", lineno + 1)))?;
        records.push(record);
    }
    Ok(records)
}

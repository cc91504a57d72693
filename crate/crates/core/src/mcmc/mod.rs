//! Fusion-model sampler: Gibbs draws of the latent categories and adaptive
//! random-walk Metropolis–Hastings for every continuous block.
//!
//! Block order within one iteration: latent categories, `(beta0, beta)`,
//! regression cutoffs, `(omega0, omega)`, then for each true category the
//! annotation cutoffs together with the confidence mean, then every
//! annotator mean, then every shared annotator mean.

mod config;
mod gibbs;
mod sampler;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{McmcConfig, Variant};
pub use gibbs::{gibbs_sweep_y, gibbs_y_conditional};
pub use sampler::{adapt_scale, initial_state, Block, BlockSlot, Sampler};

pub(crate) use sampler::argmax;

use crate::error::{FusionError, Result};
use crate::model::{ordinal_pmf, Dataset, ParamState};
use crate::priors::PriorSpec;

/// Post-adaptation statistics of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    pub dimension: usize,
    /// Proposal scale, frozen at the end of burn-in.
    pub scale: f64,
    pub proposals: usize,
    pub accepted: usize,
}

impl BlockAcceptance {
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Result of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub variant: Variant,
    pub sequence_ids: Vec<String>,
    /// One-based iteration number of each kept sample.
    pub iterations: Vec<usize>,
    /// Kept post-burn-in states. The latent categories are summarized in
    /// `y_marginals` instead of being stored per sample, so `y` is empty.
    pub samples: Vec<ParamState>,
    pub acceptance: Vec<BlockAcceptance>,
    /// Posterior frequency of each latent category per sequence over the
    /// kept samples; absent when the categories are fixed.
    pub y_marginals: Option<Vec<Vec<f64>>>,
    /// Log-posterior (up to a constant) after every iteration.
    pub log_post_trace: Vec<f64>,
}

impl ChainOutput {
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.acceptance.iter().map(BlockAcceptance::rate).collect()
    }

    pub fn n_covariates(&self) -> usize {
        self.samples.first().map_or(0, |s| s.beta.len())
    }
}

/// Runs one chain of `cfg.iterations` sweeps from [`initial_state`],
/// adapting proposal scales during burn-in only.
pub fn run_chain(
    data: &Dataset,
    prior: &PriorSpec,
    cfg: &McmcConfig,
    variant: Variant,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut sampler = Sampler::new(data, prior, variant, cfg, None)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let l = data.n_categories();
    let n_blocks = sampler.slots().len();
    let mut accepted = vec![0usize; n_blocks];
    let mut counts = vec![vec![0usize; l]; data.len()];
    let mut out = ChainOutput {
        variant,
        sequence_ids: sampler.sequence_ids().to_vec(),
        iterations: Vec::with_capacity(cfg.n_kept()),
        samples: Vec::with_capacity(cfg.n_kept()),
        acceptance: Vec::new(),
        y_marginals: None,
        log_post_trace: Vec::with_capacity(cfg.iterations),
    };
    for t in 1..=cfg.iterations {
        sampler.sweep(&mut rng)?;
        if t <= cfg.burnin {
            sampler.adapt(t, cfg.adapt_rate);
        } else {
            for (c, &a) in accepted.iter_mut().zip(sampler.last_accepted()) {
                *c += a as usize;
            }
            if (t - cfg.burnin) % cfg.thin == 0 {
                let state = sampler.state();
                for (row, &y) in counts.iter_mut().zip(&state.y) {
                    row[y] += 1;
                }
                let mut kept = state.clone();
                kept.y = Vec::new();
                out.samples.push(kept);
                out.iterations.push(t);
            }
        }
        out.log_post_trace.push(sampler.log_posterior());
    }
    let post = cfg.iterations - cfg.burnin;
    out.acceptance = sampler
        .slots()
        .iter()
        .zip(&accepted)
        .map(|(slot, &a)| BlockAcceptance {
            block: slot.block.to_string(),
            dimension: slot.dimension,
            scale: slot.scale,
            proposals: post,
            accepted: a,
        })
        .collect();
    if variant.samples_latent() {
        let kept = out.samples.len() as f64;
        out.y_marginals = Some(
            counts
                .into_iter()
                .map(|row| row.into_iter().map(|c| c as f64 / kept).collect())
                .collect(),
        );
    }
    Ok(out)
}

/// Posterior predictive category probabilities for covariates `x0`: the
/// average over kept samples of the regression pmf.
pub fn posterior_predict(x0: &[f64], chain: &ChainOutput) -> Result<Vec<f64>> {
    let first = chain.samples.first().ok_or_else(|| {
        FusionError::NotApplicable("posterior prediction needs a non-empty chain".into())
    })?;
    if x0.len() != first.beta.len() {
        return Err(FusionError::DimensionMismatch {
            what: "prediction covariates",
            expected: first.beta.len(),
            found: x0.len(),
        });
    }
    let mut out = vec![0.0; first.n_categories()];
    for s in &chain.samples {
        let pmf = ordinal_pmf(s.linear_predictor(x0), &s.theta)?;
        for (o, p) in out.iter_mut().zip(pmf) {
            *o += p;
        }
    }
    let n = chain.samples.len() as f64;
    for o in out.iter_mut() {
        *o /= n;
    }
    Ok(out)
}

//! Importance-sampling estimators of the output density, the potential
//! `V_λ(x) = λ b(x) − ∫ p(y|x) log(p(y|x)/p_Y(y)) dy` and its gradient.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{ChannelModel, OutputMixture};
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::numeric::{normal_log_pdf, squared_norm, LogSumExp};
use crate::particles::ParticleSet;
use crate::rng::{stream_rng, DOMAIN_IMPORTANCE};

/// Log density ratios are clamped to `±LOG_RATIO_CLAMP` so far-tail samples
/// cannot produce `inf · 0`.
pub const LOG_RATIO_CLAMP: f64 = 500.0;

/// Importance distribution `q(y|x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Proposal {
    /// `q(y|x) = p(y|x)`: all weights are one.
    #[default]
    Channel,
    /// `N(center(x) + shift, scale² I)` around the channel's output centre.
    Gaussian { shift: f64, scale: f64 },
}

fn default_samples() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceConfig {
    #[serde(default)]
    pub proposal: Proposal,
    /// Samples per particle, `Ns`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Reuse each particle's noise stream at every iteration instead of
    /// drawing fresh samples, so `L̂` varies smoothly along the trajectory.
    #[serde(default)]
    pub common_random_numbers: bool,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            proposal: Proposal::Channel,
            samples: default_samples(),
            common_random_numbers: false,
        }
    }
}

impl ImportanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("importance.samples", "must be >= 1"));
        }
        if let Proposal::Gaussian { shift, scale } = self.proposal {
            if !shift.is_finite() {
                return Err(Error::config("importance.proposal.shift", "must be finite"));
            }
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::config("importance.proposal.scale", "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// `V̂(x)` and `∇V̂(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEstimate {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Output samples drawn for one query point together with `log q(y_i|x)` at
/// the point they were drawn for. Holding both fixed gives common random
/// numbers for finite-difference checks.
#[derive(Debug, Clone)]
pub struct ImportanceSamples {
    dim: usize,
    ys: Vec<f64>,
    log_q: Vec<f64>,
}

impl ImportanceSamples {
    pub fn len(&self) -> usize {
        self.log_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_q.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.ys[i * self.dim..(i + 1) * self.dim]
    }
}

/// `log[(1/N) Σ_j p(y|x_j)]` over the particles of `prev`, in log-sum-exp form
/// and particle index order.
pub fn mixture_output_logpdf(prev: &ParticleSet, y: &[f64], channel: &dyn ChannelModel) -> f64 {
    let mut acc = LogSumExp::new();
    for xj in prev.iter() {
        acc.push(channel.log_pdf(xj, y));
    }
    let v = acc.value() - (prev.len() as f64).ln();
    debug_assert!(!v.is_nan(), "mixture log-density is NaN");
    v
}

/// Draws `Ns` samples from `q(·|x)`.
pub fn draw_importance_samples(
    x: &[f64],
    channel: &dyn ChannelModel,
    cfg: &ImportanceConfig,
    rng: &mut dyn RngCore,
) -> Result<ImportanceSamples> {
    let m = channel.output_dim();
    let ns = cfg.samples;
    let mut ys = vec![0.0; ns * m];
    let mut log_q = Vec::with_capacity(ns);
    match cfg.proposal {
        Proposal::Channel => {
            for y in ys.chunks_exact_mut(m) {
                channel.sample_output(x, rng, y);
                log_q.push(channel.log_pdf(x, y));
            }
        }
        Proposal::Gaussian { shift, scale } => {
            let mut center = vec![0.0; m];
            channel.output_center(x, &mut center);
            let var = scale * scale;
            for y in ys.chunks_exact_mut(m) {
                let mut lq = 0.0;
                for (v, c) in y.iter_mut().zip(&center) {
                    let z: f64 = StandardNormal.sample(&mut *rng);
                    *v = c + shift + scale * z;
                    lq += normal_log_pdf(*v, c + shift, var);
                }
                log_q.push(lq);
            }
        }
    }
    if log_q.iter().any(|lq| !lq.is_finite()) {
        return Err(Error::ImportanceUnderflow(x.to_vec()));
    }
    Ok(ImportanceSamples { dim: m, ys, log_q })
}

/// Evaluates `V̂(x)` and `∇V̂(x)` on a fixed sample set.
///
/// With `w_i = p(y_i|x)/q(y_i)` and `r_i = log p(y_i|x) − log p_Y(y_i)`:
/// `V̂ = λ b(x) − mean(w_i r_i)` and
/// `∇V̂ = λ ∇b(x) − mean(w_i ∇_x log p(y_i|x) (r_i + 1))`, the samples being
/// constants.
pub fn potential_at_samples(
    x: &[f64],
    samples: &ImportanceSamples,
    mixture: &dyn OutputMixture,
    channel: &dyn ChannelModel,
    cost: &dyn CostModel,
    lambda: f64,
) -> PotentialEstimate {
    let n = x.len();
    let mut acc_value = 0.0;
    let mut acc_grad = vec![0.0; n];
    let mut g = vec![0.0; n];
    for i in 0..samples.len() {
        let y = samples.sample(i);
        let lp = channel.log_pdf(x, y);
        let lpy = mixture.log_pdf(y);
        let ratio = (lp - lpy).clamp(-LOG_RATIO_CLAMP, LOG_RATIO_CLAMP);
        let w = (lp - samples.log_q[i]).exp();
        acc_value += w * ratio;
        channel.grad_x_log_pdf(x, y, &mut g);
        let scale = w * (ratio + 1.0);
        for (a, gi) in acc_grad.iter_mut().zip(&g) {
            *a += scale * gi;
        }
    }
    let ns = samples.len() as f64;
    let mut gradient = vec![0.0; n];
    cost.grad_cost(x, &mut gradient);
    for (gr, a) in gradient.iter_mut().zip(&acc_grad) {
        *gr = lambda * *gr - a / ns;
    }
    PotentialEstimate {
        value: lambda * cost.cost(x) - acc_value / ns,
        gradient,
    }
}

/// Draws fresh importance samples for `x` and evaluates the potential.
pub fn estimate_potential(
    x: &[f64],
    prev: &ParticleSet,
    channel: &dyn ChannelModel,
    cost: &dyn CostModel,
    lambda: f64,
    cfg: &ImportanceConfig,
    rng: &mut dyn RngCore,
) -> Result<PotentialEstimate> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    if x.len() != channel.input_dim() {
        return Err(Error::Dimension {
            expected: channel.input_dim(),
            got: x.len(),
        });
    }
    let samples = draw_importance_samples(x, channel, cfg, rng)?;
    Ok(potential_at_samples(
        x,
        &samples,
        channel.mixture(prev).as_ref(),
        channel,
        cost,
        lambda,
    ))
}

/// Per-iteration summary of the particle system.
#[derive(Debug, Clone)]
pub struct Objectives {
    /// `L̂ = (1/N) Σ V̂(x_i)`.
    pub lagrangian: f64,
    /// `R̂ = λ B̂ − L̂`.
    pub rate: f64,
    /// `B̂ = (1/N) Σ b(x_i)`.
    pub cost: f64,
    /// `(1/N) Σ ‖∇V̂(x_i)‖²`.
    pub grad_norm: f64,
    /// Row-major `N × n` gradients `∇V̂(x_i)`.
    pub gradients: Vec<f64>,
}

/// Estimates the potential at every particle in parallel and reduces in index
/// order. Particle `i` draws from the stream `(seed, iter, i)`, so the result
/// does not depend on the worker count.
#[allow(clippy::too_many_arguments)]
pub fn estimate_objectives(
    particles: &ParticleSet,
    prev: &ParticleSet,
    channel: &dyn ChannelModel,
    cost: &dyn CostModel,
    lambda: f64,
    cfg: &ImportanceConfig,
    seed: u64,
    iter: u64,
) -> Result<Objectives> {
    let n = particles.dim();
    if n != channel.input_dim() || prev.dim() != n {
        return Err(Error::Dimension {
            expected: channel.input_dim(),
            got: n,
        });
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let mixture = channel.mixture(prev);
    let stream_iter = if cfg.common_random_numbers { 0 } else { iter };
    let estimates = (0..particles.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, DOMAIN_IMPORTANCE, stream_iter, i as u64);
            let x = particles.point(i);
            let samples = draw_importance_samples(x, channel, cfg, &mut rng)?;
            Ok(potential_at_samples(
                x,
                &samples,
                mixture.as_ref(),
                channel,
                cost,
                lambda,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let count = particles.len() as f64;
    let mut value_sum = 0.0;
    let mut grad_sum = 0.0;
    let mut gradients = Vec::with_capacity(particles.len() * n);
    for est in &estimates {
        value_sum += est.value;
        grad_sum += squared_norm(&est.gradient);
        gradients.extend_from_slice(&est.gradient);
    }
    let cost_sum: f64 = particles.iter().map(|x| cost.cost(x)).sum();
    let lagrangian = value_sum / count;
    let mean_cost = cost_sum / count;
    Ok(Objectives {
        lagrangian,
        rate: lambda * mean_cost - lagrangian,
        cost: mean_cost,
        grad_norm: grad_sum / count,
        gradients,
    })
}

//! Blahut-Arimoto for finite alphabets, in its KL-proximal form.
//!
//! One step reweights the input distribution by `exp(τ D_λ(x))` where
//! `D_λ(x) = Σ_y P(y|x) log(P(y|x)/P_Y(y)) − λ b(x)`; `τ = 1` is the classical
//! update. These solvers serve as an independent reference for the particle
//! solver through [`crate::channels::quantize_channel`].

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::DiscreteChannel;
use crate::error::{Error, Result};
use crate::numeric::LogSumExp;

/// Probability vector over the input alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("simplex entries must be finite and >= 0".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("simplex sums to {s}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `P_Y(y) = Σ_x P(x) P(y|x)`.
pub fn output_distribution(p: &Simplex, ch: &DiscreteChannel) -> Vec<f64> {
    let mut py = vec![0.0; ch.num_outputs()];
    for (i, &px) in p.as_slice().iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (o, w) in py.iter_mut().zip(ch.row(i)) {
            *o += px * w;
        }
    }
    py
}

/// `D(P(·|x) ‖ P_Y)` for every input `x`, with `0 log 0 = 0`.
pub fn divergences(ch: &DiscreteChannel, py: &[f64]) -> Vec<f64> {
    (0..ch.num_inputs())
        .map(|i| {
            ch.row(i)
                .iter()
                .zip(py)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, q)| w * (w.ln() - q.ln()))
                .sum()
        })
        .collect()
}

/// `I(X;Y)` in nats.
pub fn mutual_information(p: &Simplex, ch: &DiscreteChannel) -> f64 {
    let py = output_distribution(p, ch);
    divergences(ch, &py)
        .iter()
        .zip(p.as_slice())
        .map(|(d, px)| px * d)
        .sum()
}

pub fn mean_cost(p: &Simplex, ch: &DiscreteChannel) -> f64 {
    p.as_slice().iter().zip(ch.costs()).map(|(a, b)| a * b).sum()
}

/// One proximal step `P'(x) ∝ P(x) exp(τ D_λ(x))`, normalized in log space.
/// Zero entries stay zero.
pub fn ba_prox_step(p: &Simplex, ch: &DiscreteChannel, lambda: f64, tau: f64) -> Result<Simplex> {
    if p.as_slice().len() != ch.num_inputs() {
        return Err(Error::Dimension {
            expected: ch.num_inputs(),
            got: p.as_slice().len(),
        });
    }
    let py = output_distribution(p, ch);
    let d_lambda = lagrangian_divergences(ch, &py, lambda);
    step_with(p, &d_lambda, tau)
}

/// `D_λ(x) = D(W(·|x) ‖ P_Y) − λ b(x)`.
fn lagrangian_divergences(ch: &DiscreteChannel, py: &[f64], lambda: f64) -> Vec<f64> {
    divergences(ch, py)
        .iter()
        .zip(ch.costs())
        .map(|(d, b)| d - lambda * b)
        .collect()
}

fn step_with(p: &Simplex, d_lambda: &[f64], tau: f64) -> Result<Simplex> {
    let logits: Vec<f64> = d_lambda
        .iter()
        .zip(p.as_slice())
        .map(|(d, px)| px.ln() + tau * d)
        .collect();
    let mut acc = LogSumExp::new();
    logits.iter().for_each(|&l| acc.push(l));
    let norm = acc.value();
    if !norm.is_finite() {
        return Err(Error::InvalidInput("proximal step has an all-zero numerator".into()));
    }
    let mut out: Vec<f64> = logits.iter().map(|l| (l - norm).exp()).collect();
    // Fold the last rounding error back in so the sum is 1 to machine precision.
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    Ok(Simplex(out))
}

fn default_tau() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-9
}
fn default_max_iters() -> usize {
    100_000
}

/// Step size and stopping rule for [`ba_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaOptions {
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Stop when the duality gap `max_x D_λ(x) − Σ_x P(x) D_λ(x)` falls
    /// below this (nats).
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            tau: default_tau(),
            tol: default_tol(),
            max_iters: default_max_iters(),
        }
    }
}

impl BaOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::config("options.tau", "must be finite and > 0"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("options.tol", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("options.max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaSolution {
    pub lambda: f64,
    /// Mutual information at the returned input, nats.
    pub capacity: f64,
    pub cost: f64,
    pub input: Simplex,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates [`ba_prox_step`] from the uniform input.
pub fn ba_solve(ch: &DiscreteChannel, lambda: f64, opts: &BaOptions) -> Result<BaSolution> {
    ba_solve_from(ch, Simplex::uniform(ch.num_inputs()), lambda, opts)
}

/// Iterates [`ba_prox_step`] from `start` until the duality gap drops below
/// `opts.tol`. The gap bounds how far `I − λ B` is from its maximum. Without
/// convergence the last iterate is returned, flagged.
pub fn ba_solve_from(ch: &DiscreteChannel, start: Simplex, lambda: f64, opts: &BaOptions) -> Result<BaSolution> {
    opts.validate()?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::config("lambda", "must be finite and >= 0"));
    }
    if start.as_slice().len() != ch.num_inputs() {
        return Err(Error::Dimension {
            expected: ch.num_inputs(),
            got: start.as_slice().len(),
        });
    }
    let mut p = start;
    let mut iterations = 0;
    let converged = loop {
        let py = output_distribution(&p, ch);
        let d_lambda = lagrangian_divergences(ch, &py, lambda);
        let lower: f64 = d_lambda.iter().zip(p.as_slice()).map(|(d, px)| px * d).sum();
        let upper = d_lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if upper - lower < opts.tol {
            break true;
        }
        if iterations == opts.max_iters {
            break false;
        }
        p = step_with(&p, &d_lambda, opts.tau)?;
        iterations += 1;
    };
    Ok(BaSolution {
        lambda,
        capacity: mutual_information(&p, ch),
        cost: mean_cost(&p, ch),
        input: p,
        iterations,
        converged,
    })
}

/// One solve per multiplier, in parallel; results keep the input order.
pub fn ba_lambda_sweep(ch: &DiscreteChannel, lambdas: &[f64], opts: &BaOptions) -> Result<Vec<BaSolution>> {
    lambdas.par_iter().map(|&l| ba_solve(ch, l, opts)).collect()
}

fn stepped_cost(p: &Simplex, d: &[f64], costs: &[f64], lambda: f64, tau: f64) -> Result<(Simplex, f64)> {
    let shifted: Vec<f64> = d.iter().zip(costs).map(|(d, b)| d - lambda * b).collect();
    let next = step_with(p, &shifted, tau)?;
    let cost = next.as_slice().iter().zip(costs).map(|(p, b)| p * b).sum();
    Ok((next, cost))
}

/// Capacity at mean cost `budget`.
///
/// A single proximal iteration in which the multiplier is re-chosen at every
/// step so that the updated input meets the budget exactly (`λ = 0` when the
/// free step already does). The mean cost of the stepped input decreases in
/// `λ`, so each choice is a one-dimensional bisection that costs `O(|X|)` per
/// probe. Iteration stops when the dual bound
/// `max_x D_λ(x) + λ B − I(P)` falls below `opts.tol`.
pub fn ba_capacity_at_cost(ch: &DiscreteChannel, budget: f64, opts: &BaOptions) -> Result<BaSolution> {
    opts.validate()?;
    let costs = ch.costs();
    let min_cost = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(budget >= min_cost) {
        return Err(Error::InvalidInput(format!(
            "budget {budget} is below the cheapest input cost {min_cost}"
        )));
    }
    let mut p = Simplex::uniform(ch.num_inputs());
    let mut lambda = 0.0;
    let mut iterations = 0;
    let converged = loop {
        let py = output_distribution(&p, ch);
        let d = divergences(ch, &py);
        let info: f64 = d.iter().zip(p.as_slice()).map(|(d, px)| px * d).sum();
        let cost_now = mean_cost(&p, ch);
        if iterations > 0 && cost_now <= budget * (1.0 + 1e-12) + 1e-12 {
            let upper = d
                .iter()
                .zip(costs)
                .map(|(d, b)| d - lambda * b)
                .fold(f64::NEG_INFINITY, f64::max)
                + lambda * budget;
            if upper - info < opts.tol {
                break true;
            }
        }
        if iterations == opts.max_iters {
            break false;
        }
        let (free, free_cost) = stepped_cost(&p, &d, costs, 0.0, opts.tau)?;
        p = if free_cost <= budget {
            lambda = 0.0;
            free
        } else {
            let mut hi = lambda.max(1e-3);
            while stepped_cost(&p, &d, costs, hi, opts.tau)?.1 > budget {
                hi *= 2.0;
                if hi > 1e15 {
                    return Err(Error::InvalidInput("no multiplier reaches the budget".into()));
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if stepped_cost(&p, &d, costs, mid, opts.tau)?.1 > budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lambda = hi;
            stepped_cost(&p, &d, costs, hi, opts.tau)?.0
        };
        iterations += 1;
    };
    debug!("constrained Blahut-Arimoto: lambda={lambda} after {iterations} iterations");
    Ok(BaSolution {
        lambda,
        capacity: mutual_information(&p, ch),
        cost: mean_cost(&p, ch),
        input: p,
        iterations,
        converged,
    })
}

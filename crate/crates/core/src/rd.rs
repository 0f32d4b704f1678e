//! Rate-distortion by Wasserstein gradient descent on the reconstruction
//! measure.
//!
//! With a fixed source sample `{x_i}` and multiplier `λ`, the reconstruction
//! particles `{y_j}` descend the gradient of the first variation of
//! `G_λ(ν) = −(1/N_x) Σ_i log ∫ exp(−λ d(x_i, y)) ν(dy)`.

use std::io::Write;

use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::numeric::{squared_norm, LogSumExp};
use crate::particles::{init_particles, ParticleSet};
use crate::rng::{stream_rng, DOMAIN_SOURCE};
use crate::wgd::{transport_step, StopReason, STOP_WINDOW};

/// Nonnegative distortion `d(x, y)` differentiable in `y`.
pub trait Distortion: Send + Sync {
    fn distortion(&self, x: &[f64], y: &[f64]) -> f64;

    /// `∇_y d(x, y)` into `grad`.
    fn grad_y(&self, x: &[f64], y: &[f64], grad: &mut [f64]);
}

/// `d(x, y) = ‖x − y‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredError;

impl Distortion for SquaredError {
    #[inline]
    fn distortion(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn grad_y(&self, x: &[f64], y: &[f64], grad: &mut [f64]) {
        for ((g, a), b) in grad.iter_mut().zip(x).zip(y) {
            *g = 2.0 * (b - a);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistortionSpec {
    #[default]
    SquaredError,
}

impl DistortionSpec {
    pub fn build(&self) -> Box<dyn Distortion> {
        match self {
            DistortionSpec::SquaredError => Box::new(SquaredError),
        }
    }
}

/// `count` i.i.d. draws from `N(mean, variance · I_dim)`.
pub fn gaussian_source(dim: usize, mean: f64, variance: f64, count: usize, seed: u64) -> Result<ParticleSet> {
    if !(variance.is_finite() && variance >= 0.0) {
        return Err(Error::config("source.variance", "must be finite and >= 0"));
    }
    if count == 0 || dim == 0 {
        return Err(Error::config(
            "source.samples",
            "need at least one sample of dimension >= 1",
        ));
    }
    let mut rng = stream_rng(seed, DOMAIN_SOURCE, 0, 0);
    let sd = variance.sqrt();
    let pts = (0..count * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mean + sd * z
        })
        .collect();
    ParticleSet::new(dim, pts)
}

/// Source sample, distortion and multiplier.
pub struct RdProblem {
    pub source: ParticleSet,
    pub distortion: Box<dyn Distortion>,
    pub lambda: f64,
}

impl RdProblem {
    pub fn new(source: ParticleSet, distortion: Box<dyn Distortion>, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::config("lambda", "must be finite and >= 0"));
        }
        Ok(Self {
            source,
            distortion,
            lambda,
        })
    }
}

/// `log Z(x_i) = log[(1/N) Σ_j exp(−λ d(x_i, y_j))]` for every source point.
pub fn log_partition(problem: &RdProblem, recon: &ParticleSet) -> Result<Vec<f64>> {
    let ln_n = (recon.len() as f64).ln();
    let lambda = problem.lambda;
    (0..problem.source.len())
        .into_par_iter()
        .map(|i| {
            let x = problem.source.point(i);
            let mut acc = LogSumExp::new();
            for y in recon.iter() {
                acc.push(-lambda * problem.distortion.distortion(x, y));
            }
            let v = acc.value() - ln_n;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::PartitionUnderflow {
                    index: i,
                    point: x.to_vec(),
                })
            }
        })
        .collect()
}

fn first_variation_grad_with(y: &[f64], problem: &RdProblem, log_z: &[f64]) -> Vec<f64> {
    let lambda = problem.lambda;
    let mut out = vec![0.0; y.len()];
    if lambda == 0.0 {
        return out;
    }
    let mut g = vec![0.0; y.len()];
    for (x, lz) in problem.source.iter().zip(log_z) {
        let d = problem.distortion.distortion(x, y);
        let w = (-lambda * d - lz).exp();
        problem.distortion.grad_y(x, y, &mut g);
        for (o, gi) in out.iter_mut().zip(&g) {
            *o += w * gi;
        }
    }
    let scale = lambda / problem.source.len() as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    out
}

/// `∇_y δG_λ/δν (y) = (1/N_x) Σ_i λ ∇_y d(x_i, y) exp(−λ d(x_i, y)) / Z(x_i)`.
pub fn rd_first_variation_grad(y: &[f64], problem: &RdProblem, recon: &ParticleSet) -> Result<Vec<f64>> {
    if y.len() != problem.source.dim() || recon.dim() != problem.source.dim() {
        return Err(Error::Dimension {
            expected: problem.source.dim(),
            got: y.len(),
        });
    }
    let log_z = log_partition(problem, recon)?;
    Ok(first_variation_grad_with(y, problem, &log_z))
}

/// Rate and distortion of the kernel `π(j|i) ∝ exp(−λ d(x_i, y_j))`:
/// `D̂ = E_π[d]`, `R̂ = −mean_i log Z(x_i) − λ D̂`.
pub fn rd_readout(problem: &RdProblem, recon: &ParticleSet, log_z: &[f64]) -> (f64, f64) {
    let lambda = problem.lambda;
    let ln_n = (recon.len() as f64).ln();
    let per_source: Vec<f64> = (0..problem.source.len())
        .into_par_iter()
        .map(|i| {
            let x = problem.source.point(i);
            let lse = log_z[i] + ln_n;
            recon
                .iter()
                .map(|y| {
                    let d = problem.distortion.distortion(x, y);
                    (-lambda * d - lse).exp() * d
                })
                .sum::<f64>()
        })
        .collect();
    let nx = problem.source.len() as f64;
    let distortion = per_source.iter().sum::<f64>() / nx;
    let mean_log_z = log_z.iter().sum::<f64>() / nx;
    let rate = (-mean_log_z - lambda * distortion).max(0.0);
    (rate, distortion.max(0.0))
}

/// One row of the rate-distortion trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdRecord {
    pub iter: usize,
    pub lambda: f64,
    pub rate: f64,
    pub distortion: f64,
    pub grad_norm: f64,
}

impl RdRecord {
    pub const CSV_HEADER: &'static str = "iter,lambda,R_hat,D_hat,grad_norm";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?}",
            self.iter, self.lambda, self.rate, self.distortion, self.grad_norm
        )
    }

    pub fn write_csv<W: Write>(records: &[RdRecord], mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in records {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RdResult {
    pub rate: f64,
    pub distortion: f64,
    pub particles: ParticleSet,
    pub trace: Vec<RdRecord>,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone)]
pub struct RdFailure {
    pub error: Error,
    pub trace: Vec<RdRecord>,
}

impl std::fmt::Display for RdFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} trace rows)", self.error, self.trace.len())
    }
}

impl std::error::Error for RdFailure {}

impl From<Error> for RdFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            trace: Vec::new(),
        }
    }
}

/// Moves the reconstruction particles by explicit transport steps
/// `y_j ← y_j − τ_k ∇δG_λ/δν(y_j)` and reads out `(R̂, D̂)` on the final set.
/// `solver.init` seeds the reconstruction particles (`auto` means unit
/// variance).
pub fn rd_solve(problem: &RdProblem, solver: &SolverConfig) -> std::result::Result<RdResult, RdFailure> {
    solver.validate()?;
    let dim = problem.source.dim();
    let init = solver.init.resolve(dim, 1.0);
    let mut recon = init_particles(&init, solver.num_particles, dim, solver.seed)?;
    let mut trace = Vec::new();
    let fail = |error: Error, trace: &Vec<RdRecord>| RdFailure {
        error,
        trace: trace.clone(),
    };
    let mut window = std::collections::VecDeque::with_capacity(STOP_WINDOW);
    let mut stop_reason = StopReason::MaxIters;
    let mut iterations = 0;

    for k in 0..solver.max_iters {
        let log_z = log_partition(problem, &recon).map_err(|e| fail(e, &trace))?;
        let (rate, distortion) = rd_readout(problem, &recon, &log_z);
        let grads: Vec<Vec<f64>> = (0..recon.len())
            .into_par_iter()
            .map(|j| first_variation_grad_with(recon.point(j), problem, &log_z))
            .collect();
        let grad_norm = grads.iter().map(|g| squared_norm(g)).sum::<f64>() / recon.len() as f64;
        let rec = RdRecord {
            iter: k,
            lambda: problem.lambda,
            rate,
            distortion,
            grad_norm,
        };
        if ![rate, distortion, grad_norm].iter().all(|v| v.is_finite()) {
            trace.push(rec);
            return Err(fail(
                Error::NonFinite {
                    iter: k,
                    what: "rate-distortion estimate".into(),
                },
                &trace,
            ));
        }
        if k % solver.trace_stride == 0 {
            trace.push(rec);
        }
        iterations = k + 1;
        if window.len() == STOP_WINDOW {
            window.pop_front();
        }
        window.push_back(grad_norm);
        if window.len() == STOP_WINDOW && window.iter().sum::<f64>() / (STOP_WINDOW as f64) < solver.grad_tol {
            stop_reason = StopReason::GradTol;
            break;
        }
        let flat: Vec<f64> = grads.concat();
        recon = transport_step(&recon, &flat, solver.schedule.tau(k + 1)).map_err(|e| fail(e, &trace))?;
    }

    let log_z = log_partition(problem, &recon).map_err(|e| fail(e, &trace))?;
    let (rate, distortion) = rd_readout(problem, &recon, &log_z);
    Ok(RdResult {
        rate,
        distortion,
        particles: recon,
        trace,
        iterations,
        stop_reason,
    })
}

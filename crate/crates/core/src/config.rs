//! Run configuration and per-iteration trace records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::particles::InitSpec;
use crate::wgd::StepSchedule;

fn default_num_particles() -> usize {
    128
}
fn default_max_iters() -> usize {
    1000
}
fn default_grad_tol() -> f64 {
    1e-4
}
fn default_trace_stride() -> usize {
    1
}

/// Particle solver settings shared by the capacity and rate-distortion
/// drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_num_particles")]
    pub num_particles: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub seed: u64,
    /// Stop once the mean `grad_norm` over the trailing window drops below this.
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_trace_stride")]
    pub trace_stride: usize,
    /// Evaluate `p_Y` on a uniform subsample of this many particles.
    #[serde(default)]
    pub mixture_subsample: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            num_particles: default_num_particles(),
            max_iters: default_max_iters(),
            schedule: StepSchedule::default(),
            init: InitSpec::Auto,
            seed: 0,
            grad_tol: default_grad_tol(),
            trace_stride: default_trace_stride(),
            mixture_subsample: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_particles == 0 {
            return Err(Error::config("solver.num_particles", "must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("solver.max_iters", "must be >= 1"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::config("solver.grad_tol", "must be >= 0"));
        }
        if self.trace_stride == 0 {
            return Err(Error::config("solver.trace_stride", "must be >= 1"));
        }
        if self.mixture_subsample == Some(0) {
            return Err(Error::config("solver.mixture_subsample", "must be >= 1"));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DualMode {
    /// `λ` stays at `lambda0`.
    #[default]
    Fixed,
    /// `λ ← max(0, λ + α_k (B̂ − B))` after every particle step.
    DualAscent,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_lambda_max() -> f64 {
    1e6
}

/// Lagrange multiplier handling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    #[serde(default)]
    pub mode: DualMode,
    #[serde(default)]
    pub lambda0: f64,
    /// Cost budget `B`; required for dual ascent.
    #[serde(default)]
    pub budget: Option<f64>,
    /// Dual step `α_k = alpha / (k+1)^alpha_decay`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub alpha_decay: f64,
    /// Runs whose multiplier exceeds this are stopped as stalled.
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            mode: DualMode::Fixed,
            lambda0: 0.0,
            budget: None,
            alpha: default_alpha(),
            alpha_decay: 0.0,
            lambda_max: default_lambda_max(),
        }
    }
}

impl DualConfig {
    pub fn fixed(lambda: f64) -> Self {
        Self {
            lambda0: lambda,
            ..Self::default()
        }
    }

    pub fn ascent(lambda0: f64, budget: f64) -> Self {
        Self {
            mode: DualMode::DualAscent,
            lambda0,
            budget: Some(budget),
            ..Self::default()
        }
    }

    /// `α_k` for the zero-based iteration `k`.
    pub fn alpha_at(&self, k: usize) -> f64 {
        if self.alpha_decay == 0.0 {
            self.alpha
        } else {
            self.alpha / ((k + 1) as f64).powf(self.alpha_decay)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0.is_finite() && self.lambda0 >= 0.0) {
            return Err(Error::config("dual.lambda0", "must be finite and >= 0"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config("dual.alpha", "must be finite and > 0"));
        }
        if !(self.alpha_decay.is_finite() && self.alpha_decay >= 0.0) {
            return Err(Error::config("dual.alpha_decay", "must be finite and >= 0"));
        }
        if !(self.lambda_max > 0.0) {
            return Err(Error::config("dual.lambda_max", "must be > 0"));
        }
        match (self.mode, self.budget) {
            (DualMode::DualAscent, None) => Err(Error::config("dual.budget", "required for dual-ascent mode")),
            (_, Some(b)) if !b.is_finite() => Err(Error::config("dual.budget", "must be finite")),
            _ => Ok(()),
        }
    }
}

/// One row of the solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub lambda: f64,
    /// `L̂`, nats.
    pub lagrangian: f64,
    /// `R̂`, nats.
    pub rate: f64,
    /// `B̂`.
    pub cost: f64,
    pub grad_norm: f64,
    /// Squared Wasserstein length of the step taken after this record,
    /// `τ² · grad_norm` for the plain schedules.
    pub w2_step: f64,
}

impl IterationRecord {
    pub const CSV_HEADER: &'static str = "iter,lambda,L_hat,R_hat,B_hat,grad_norm,w2_step";

    pub fn is_finite(&self) -> bool {
        [
            self.lambda,
            self.lagrangian,
            self.rate,
            self.cost,
            self.grad_norm,
            self.w2_step,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.iter, self.lambda, self.lagrangian, self.rate, self.cost, self.grad_norm, self.w2_step
        )
    }
}

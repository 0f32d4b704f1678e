//! Wasserstein gradient descent on particle sets: transport steps, step-size
//! schedules, dual ascent on the cost multiplier and the main solve loop.

use std::io::Write;

use log::{debug, info};
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelModel;
use crate::config::{DualConfig, DualMode, IterationRecord, SolverConfig};
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::estimator::{estimate_objectives, ImportanceConfig, Objectives};
use crate::particles::{init_particles, InitSpec, ParticleSet};
use crate::rng::{stream_rng, DOMAIN_SUBSAMPLE};

/// Width of the trailing window used by the stopping rule and diagnostics.
pub const STOP_WINDOW: usize = 50;

/// Particle step sizes `τ_k`, `k ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant {
        tau0: f64,
    },
    /// `τ_k = τ_0 / k^γ`. With `γ ∈ (0.5, 1]`, `Σ τ_k = ∞` and `Σ τ_k² < ∞`.
    Polynomial {
        tau0: f64,
        gamma: f64,
    },
    /// Per-coordinate first/second-moment scaled steps with base rate `τ_0`.
    Adaptive {
        tau0: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Polynomial { tau0: 0.1, gamma: 0.7 }
    }
}

impl StepSchedule {
    /// `τ_k` for the one-based step `k`.
    pub fn tau(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Constant { tau0 } | StepSchedule::Adaptive { tau0, .. } => tau0,
            StepSchedule::Polynomial { tau0, gamma } => tau0 / (k.max(1) as f64).powf(gamma),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tau0 = match *self {
            StepSchedule::Constant { tau0 } => tau0,
            StepSchedule::Polynomial { tau0, gamma } => {
                if !(gamma > 0.5 && gamma <= 1.0) {
                    return Err(Error::config("solver.schedule.gamma", "must lie in (0.5, 1]"));
                }
                tau0
            }
            StepSchedule::Adaptive {
                tau0,
                beta1,
                beta2,
                eps,
            } => {
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
                    return Err(Error::config("solver.schedule.beta", "betas must lie in [0, 1)"));
                }
                if !(eps > 0.0) {
                    return Err(Error::config("solver.schedule.eps", "must be > 0"));
                }
                tau0
            }
        };
        if !(tau0.is_finite() && tau0 > 0.0) {
            return Err(Error::config("solver.schedule.tau0", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// `x_i ← x_i − τ ∇V̂(x_i)` for every particle.
pub fn transport_step(particles: &ParticleSet, grads: &[f64], tau: f64) -> Result<ParticleSet> {
    let n = particles.dim();
    if grads.len() != particles.as_slice().len() {
        return Err(Error::Dimension {
            expected: particles.as_slice().len(),
            got: grads.len(),
        });
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "step size must be finite and >= 0, got {tau}"
        )));
    }
    if let Some(pos) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index: pos / n });
    }
    if tau == 0.0 {
        return Ok(particles.clone());
    }
    let moved: Vec<f64> = particles
        .as_slice()
        .iter()
        .zip(grads)
        .map(|(x, g)| x - tau * g)
        .collect();
    if let Some(pos) = moved.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { index: pos / n });
    }
    Ok(ParticleSet::from_raw(n, moved))
}

/// `max(0, λ + α (B̂ − B))`.
pub fn dual_update(lambda: f64, cost_hat: f64, budget: f64, alpha: f64) -> f64 {
    (lambda + alpha * (cost_hat - budget)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    GradTol,
    Stalled,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::MaxIters => "max_iters",
            StopReason::GradTol => "grad_tol",
            StopReason::Stalled => "stalled",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub particles: ParticleSet,
    pub trace: Vec<IterationRecord>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Final values, re-estimated on the final particle set.
    pub lambda: f64,
    pub lagrangian: f64,
    pub rate: f64,
    pub cost: f64,
    pub grad_norm: f64,
}

/// A failed solve together with the trace recorded before the failure.
#[derive(Debug, Clone)]
pub struct SolveFailure {
    pub error: Error,
    pub trace: Vec<IterationRecord>,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} trace rows)", self.error, self.trace.len())
    }
}

impl std::error::Error for SolveFailure {}

impl From<Error> for SolveFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            trace: Vec::new(),
        }
    }
}

/// Receives trace rows as they are produced.
pub trait TraceSink {
    fn record(&mut self, rec: &IterationRecord) -> std::io::Result<()>;
}

/// Streams trace rows as CSV, flushing after every row so partial traces
/// survive an abort.
pub struct CsvTraceSink<W: Write> {
    out: W,
}

impl<W: Write> CsvTraceSink<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        writeln!(out, "{}", IterationRecord::CSV_HEADER)?;
        Ok(Self { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for CsvTraceSink<W> {
    fn record(&mut self, rec: &IterationRecord) -> std::io::Result<()> {
        writeln!(self.out, "{}", rec.csv_row())?;
        self.out.flush()
    }
}

struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _rec: &IterationRecord) -> std::io::Result<()> {
        Ok(())
    }
}

/// Turns `InitSpec::Auto` into an explicit Gaussian: variance matched to the
/// budget when dual ascent targets one and the cost supports it, unit
/// variance otherwise.
pub fn resolve_init(solver: &SolverConfig, dual: &DualConfig, cost: &dyn CostModel, dim: usize) -> InitSpec {
    let variance = match (dual.mode, dual.budget) {
        (DualMode::DualAscent, Some(b)) => cost.isotropic_variance_for(b, dim).unwrap_or(1.0),
        _ => 1.0,
    };
    solver.init.resolve(dim, variance)
}

fn mixture_reference(particles: &ParticleSet, subsample: Option<usize>, seed: u64, iter: u64) -> Option<ParticleSet> {
    let m = subsample?;
    let n = particles.len();
    if m >= n {
        return None;
    }
    let mut rng = stream_rng(seed, DOMAIN_SUBSAMPLE, iter, 0);
    let mut idx = sample_indices(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    let pts = idx.iter().flat_map(|&i| particles.point(i).iter().copied()).collect();
    Some(ParticleSet::from_raw(particles.dim(), pts))
}

struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn direction(&mut self, grads: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        grads
            .iter()
            .enumerate()
            .map(|(i, g)| {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps)
            })
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    particles: &ParticleSet,
    channel: &dyn ChannelModel,
    cost: &dyn CostModel,
    lambda: f64,
    solver: &SolverConfig,
    is_cfg: &ImportanceConfig,
    iter: usize,
) -> Result<Objectives> {
    let reference = mixture_reference(particles, solver.mixture_subsample, solver.seed, iter as u64);
    estimate_objectives(
        particles,
        reference.as_ref().unwrap_or(particles),
        channel,
        cost,
        lambda,
        is_cfg,
        solver.seed,
        iter as u64,
    )
}

/// Runs the particle descent without a trace sink.
pub fn solve(
    channel: &dyn ChannelModel,
    cost: &dyn CostModel,
    solver: &SolverConfig,
    dual: &DualConfig,
    is_cfg: &ImportanceConfig,
) -> std::result::Result<SolveResult, SolveFailure> {
    solve_with_sink(channel, cost, solver, dual, is_cfg, &mut NullSink)
}

/// Runs the particle descent, streaming every `trace_stride`-th record to
/// `sink`.
///
/// Each iteration estimates `V̂` and `∇V̂` at all particles against the output
/// mixture of the current set, records `(λ, L̂, R̂, B̂)`, moves the particles by
/// one transport step and then updates `λ`. The loop ends at `max_iters`,
/// when the trailing-window mean of `grad_norm` falls below `grad_tol`, or
/// when the multiplier runs away (`stalled`).
pub fn solve_with_sink(
    channel: &dyn ChannelModel,
    cost: &dyn CostModel,
    solver: &SolverConfig,
    dual: &DualConfig,
    is_cfg: &ImportanceConfig,
    sink: &mut dyn TraceSink,
) -> std::result::Result<SolveResult, SolveFailure> {
    solver.validate()?;
    dual.validate()?;
    is_cfg.validate()?;
    let dim = channel.input_dim();
    let init = resolve_init(solver, dual, cost, dim);
    let mut particles = init_particles(&init, solver.num_particles, dim, solver.seed)?;

    let mut trace = Vec::new();
    let fail = |error: Error, trace: &Vec<IterationRecord>| SolveFailure {
        error,
        trace: trace.clone(),
    };

    let mut lambda = dual.lambda0;
    let mut adam = match solver.schedule {
        StepSchedule::Adaptive { beta1, beta2, eps, .. } => Some(Adam {
            beta1,
            beta2,
            eps,
            m: vec![0.0; particles.as_slice().len()],
            v: vec![0.0; particles.as_slice().len()],
            t: 0,
        }),
        _ => None,
    };
    let infeasible = dual.mode == DualMode::DualAscent && dual.budget.is_some_and(|b| b < cost.infimum());
    let mut window: std::collections::VecDeque<f64> = std::collections::VecDeque::with_capacity(STOP_WINDOW);
    let mut stop_reason = StopReason::MaxIters;
    let mut iterations = 0;

    for k in 0..solver.max_iters {
        let obj = evaluate(&particles, channel, cost, lambda, solver, is_cfg, k).map_err(|e| fail(e, &trace))?;
        let tau = solver.schedule.tau(k + 1);
        let (direction, w2_step) = match adam.as_mut() {
            Some(a) => {
                let d = a.direction(&obj.gradients);
                let w2 = tau * tau * d.iter().map(|v| v * v).sum::<f64>() / particles.len() as f64;
                (d, w2)
            }
            None => (obj.gradients, tau * tau * obj.grad_norm),
        };
        let rec = IterationRecord {
            iter: k,
            lambda,
            lagrangian: obj.lagrangian,
            rate: obj.rate,
            cost: obj.cost,
            grad_norm: obj.grad_norm,
            w2_step,
        };
        if !rec.is_finite() {
            trace.push(rec);
            let _ = sink.record(&rec);
            return Err(fail(
                Error::NonFinite {
                    iter: k,
                    what: "objective estimate".into(),
                },
                &trace,
            ));
        }
        if k % solver.trace_stride == 0 {
            trace.push(rec);
            sink.record(&rec).map_err(|e| fail(e.into(), &trace))?;
        }
        if k % 100 == 0 {
            debug!(
                "iter {k}: lambda={lambda:.5} L={:.5} R={:.5} B={:.5} |grad|^2={:.3e}",
                rec.lagrangian, rec.rate, rec.cost, rec.grad_norm
            );
        }
        iterations = k + 1;

        if window.len() == STOP_WINDOW {
            window.pop_front();
        }
        window.push_back(rec.grad_norm);
        if window.len() == STOP_WINDOW && window.iter().sum::<f64>() / (STOP_WINDOW as f64) < solver.grad_tol {
            stop_reason = StopReason::GradTol;
            break;
        }
        if infeasible {
            stop_reason = StopReason::Stalled;
            break;
        }

        particles = transport_step(&particles, &direction, tau).map_err(|e| fail(e, &trace))?;

        if dual.mode == DualMode::DualAscent {
            let budget = dual.budget.expect("validated");
            lambda = dual_update(lambda, rec.cost, budget, dual.alpha_at(k));
            if lambda > dual.lambda_max {
                stop_reason = StopReason::Stalled;
                break;
            }
        }
    }

    let fin = evaluate(&particles, channel, cost, lambda, solver, is_cfg, iterations).map_err(|e| fail(e, &trace))?;
    if ![fin.lagrangian, fin.rate, fin.cost, fin.grad_norm]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(fail(
            Error::NonFinite {
                iter: iterations,
                what: "final evaluation".into(),
            },
            &trace,
        ));
    }
    info!(
        "{} finished after {iterations} iterations ({stop_reason}): R={:.5} B={:.5} lambda={lambda:.5}",
        channel.name(),
        fin.rate,
        fin.cost
    );
    Ok(SolveResult {
        particles,
        trace,
        iterations,
        stop_reason,
        lambda,
        lagrangian: fin.lagrangian,
        rate: fin.rate,
        cost: fin.cost,
        grad_norm: fin.grad_norm,
    })
}

/// Summary of how close a run is to a stationary point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaritySummary {
    /// Mean `grad_norm` over the trailing window.
    pub trailing_grad_norm: f64,
    /// Mean `w2_step` over the trailing window.
    pub trailing_w2_step: f64,
    pub min_grad_norm: f64,
    pub converged: bool,
}

/// Trailing-window statistics of a trace.
///
/// A run is flagged as not converged when the trailing `grad_norm` exceeds
/// ten times its minimum over the run, or when `grad_norm` more than doubles
/// from the first to the second quarter-span of the last half of the run.
pub fn stationarity_diagnostic(trace: &[IterationRecord]) -> Option<StationaritySummary> {
    if trace.is_empty() {
        return None;
    }
    let w = STOP_WINDOW.min(trace.len());
    let tail = &trace[trace.len() - w..];
    let mean = |rs: &[IterationRecord], f: fn(&IterationRecord) -> f64| rs.iter().map(f).sum::<f64>() / rs.len() as f64;
    let trailing_grad_norm = mean(tail, |r| r.grad_norm);
    let trailing_w2_step = mean(tail, |r| r.w2_step);
    let min_grad_norm = trace.iter().map(|r| r.grad_norm).fold(f64::INFINITY, f64::min);

    let half = &trace[trace.len() / 2..];
    let rising = if half.len() >= 2 {
        let (a, b) = half.split_at(half.len() / 2);
        mean(b, |r| r.grad_norm) > 2.0 * mean(a, |r| r.grad_norm)
    } else {
        false
    };
    let converged = trailing_grad_norm.is_finite() && trailing_grad_norm <= 10.0 * min_grad_norm && !rising;
    Some(StationaritySummary {
        trailing_grad_norm,
        trailing_w2_step,
        min_grad_norm,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::MimoAwgnChannel;
    use crate::cost::{PowerCost, ZeroCost};
    use proptest::prelude::*;

    fn record(k: usize, g: f64) -> IterationRecord {
        IterationRecord {
            iter: k,
            lambda: 0.0,
            lagrangian: 0.0,
            rate: 0.0,
            cost: 0.0,
            grad_norm: g,
            w2_step: 0.01 * g,
        }
    }

    #[test]
    fn transport_single_particle() {
        let ps = ParticleSet::new(1, vec![1.0]).unwrap();
        let out = transport_step(&ps, &[2.0], 0.1).unwrap();
        assert!((out.as_slice()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn transport_zero_gradient_is_fixed_point() {
        let ps = ParticleSet::new(2, vec![1.0, -3.0, 0.25, 7.0]).unwrap();
        assert_eq!(transport_step(&ps, &[0.0; 4], 0.3).unwrap(), ps);
    }

    #[test]
    fn transport_is_pointwise_map() {
        let ps = ParticleSet::new(1, vec![-1.0, 0.5, 2.0]).unwrap();
        let grad = |x: f64| 2.0 * x - 1.0;
        let g: Vec<f64> = ps.as_slice().iter().map(|&x| grad(x)).collect();
        let out = transport_step(&ps, &g, 0.2).unwrap();
        for (o, &x) in out.as_slice().iter().zip(ps.as_slice()) {
            assert_eq!(*o, x - 0.2 * grad(x));
        }
    }

    #[test]
    fn transport_rejects_non_finite_gradient() {
        let ps = ParticleSet::new(2, vec![0.0; 6]).unwrap();
        let g = [0.0, 0.0, 0.0, 0.0, f64::NAN, 0.0];
        assert_eq!(transport_step(&ps, &g, 0.1), Err(Error::NonFiniteGradient { index: 2 }));
    }

    #[test]
    fn dual_update_examples() {
        assert!((dual_update(1.0, 2.0, 1.0, 0.1) - 1.1).abs() < 1e-15);
        assert_eq!(dual_update(0.05, 0.0, 1.0, 0.1), 0.0);
        assert_eq!(dual_update(1.0, 1.0, 1.0, 0.1), 1.0);
    }

    #[test]
    fn polynomial_schedule_values() {
        let s = StepSchedule::Polynomial { tau0: 0.1, gamma: 0.7 };
        assert_eq!(s.tau(1), 0.1);
        assert!((s.tau(10) - 0.1 / 10f64.powf(0.7)).abs() < 1e-16);
        assert!(StepSchedule::Polynomial { tau0: 0.1, gamma: 0.5 }.validate().is_err());
        assert!(StepSchedule::Polynomial { tau0: 0.1, gamma: 1.0 }.validate().is_ok());
        assert!(StepSchedule::Constant { tau0: 0.0 }.validate().is_err());
    }

    #[test]
    fn polynomial_schedule_summability() {
        // Partial sums of τ_k grow without bound while those of τ_k² level off.
        let s = StepSchedule::Polynomial { tau0: 1.0, gamma: 0.7 };
        let partial = |n: usize, p: i32| (1..=n).map(|k| s.tau(k).powi(p)).sum::<f64>();
        assert!(partial(1_000_000, 1) > 3.0 * partial(10_000, 1));
        let tail_sq = partial(1_000_000, 2) - partial(100_000, 2);
        assert!(tail_sq < 0.02 * partial(100_000, 2));
    }

    #[test]
    fn diagnostic_on_zero_gradients() {
        let trace: Vec<_> = (0..100).map(|k| record(k, 0.0)).collect();
        let d = stationarity_diagnostic(&trace).unwrap();
        assert_eq!(d.trailing_grad_norm, 0.0);
        assert_eq!(d.trailing_w2_step, 0.0);
        assert!(d.converged);
        assert!(stationarity_diagnostic(&[]).is_none());
    }

    #[test]
    fn diagnostic_flags_growth() {
        let trace: Vec<_> = (0..200).map(|k| record(k, 1.05f64.powi(k as i32))).collect();
        assert!(!stationarity_diagnostic(&trace).unwrap().converged);
    }

    #[test]
    fn diverging_constant_step_is_flagged() {
        // Fixed λ with 2τλ > 2 makes x ← (1 − 2τλ)x blow up.
        let ch = MimoAwgnChannel::scalar();
        let solver = SolverConfig {
            num_particles: 8,
            max_iters: 60,
            schedule: StepSchedule::Constant { tau0: 0.5 },
            ..Default::default()
        };
        let is_cfg = ImportanceConfig {
            samples: 16,
            ..Default::default()
        };
        let res = solve(&ch, &PowerCost, &solver, &DualConfig::fixed(3.0), &is_cfg).unwrap();
        assert!(!stationarity_diagnostic(&res.trace).unwrap().converged);
    }

    #[test]
    fn overflowing_run_aborts_with_partial_trace() {
        let ch = MimoAwgnChannel::scalar();
        let solver = SolverConfig {
            num_particles: 8,
            max_iters: 1000,
            schedule: StepSchedule::Constant { tau0: 1.0 },
            ..Default::default()
        };
        let is_cfg = ImportanceConfig {
            samples: 8,
            ..Default::default()
        };
        let err = solve(&ch, &PowerCost, &solver, &DualConfig::fixed(100.0), &is_cfg).unwrap_err();
        assert!(!err.trace.is_empty());
        assert!(matches!(
            err.error,
            Error::NonFinite { .. } | Error::NonFiniteGradient { .. }
        ));
    }

    #[test]
    fn negative_budget_stalls() {
        let ch = MimoAwgnChannel::scalar();
        let solver = SolverConfig {
            num_particles: 4,
            max_iters: 100,
            ..Default::default()
        };
        let is_cfg = ImportanceConfig {
            samples: 8,
            ..Default::default()
        };
        let res = solve(&ch, &PowerCost, &solver, &DualConfig::ascent(0.0, -1.0), &is_cfg).unwrap();
        assert_eq!(res.stop_reason, StopReason::Stalled);
    }

    #[test]
    fn lambda_runaway_stalls() {
        let ch = MimoAwgnChannel::scalar();
        let solver = SolverConfig {
            num_particles: 4,
            max_iters: 100,
            ..Default::default()
        };
        let is_cfg = ImportanceConfig {
            samples: 8,
            ..Default::default()
        };
        let dual = DualConfig {
            lambda_max: 0.1,
            alpha: 1.0,
            ..DualConfig::ascent(0.0, 0.01)
        };
        let res = solve(&ch, &PowerCost, &solver, &dual, &is_cfg).unwrap();
        assert_eq!(res.stop_reason, StopReason::Stalled);
        assert!(res.iterations < 100);
    }

    #[test]
    fn grad_tol_stops_at_a_fixed_point() {
        // A single particle with no cost has V ≡ 0 up to sampling noise in the
        // gradient; with Ns large the window mean drops below a loose tolerance.
        let ch = MimoAwgnChannel::scalar();
        let solver = SolverConfig {
            num_particles: 1,
            max_iters: 500,
            grad_tol: 0.01,
            ..Default::default()
        };
        let is_cfg = ImportanceConfig {
            samples: 1000,
            ..Default::default()
        };
        let res = solve(&ch, &ZeroCost, &solver, &DualConfig::fixed(0.0), &is_cfg).unwrap();
        assert_eq!(res.stop_reason, StopReason::GradTol);
        assert_eq!(res.iterations, STOP_WINDOW);
        assert!(res.trace.len() <= solver.max_iters);
    }

    #[test]
    fn w2_step_identity_holds_in_trace() {
        let ch = MimoAwgnChannel::scalar();
        let solver = SolverConfig {
            num_particles: 16,
            max_iters: 20,
            ..Default::default()
        };
        let is_cfg = ImportanceConfig {
            samples: 32,
            ..Default::default()
        };
        let res = solve(&ch, &PowerCost, &solver, &DualConfig::ascent(0.0, 1.0), &is_cfg).unwrap();
        for r in &res.trace {
            let tau = solver.schedule.tau(r.iter + 1);
            assert_eq!(r.w2_step, tau * tau * r.grad_norm);
            assert!(r.lambda >= 0.0);
        }
    }

    #[test]
    fn adaptive_schedule_runs() {
        let ch = MimoAwgnChannel::scalar();
        let solver = SolverConfig {
            num_particles: 16,
            max_iters: 30,
            schedule: StepSchedule::Adaptive {
                tau0: 0.05,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            ..Default::default()
        };
        let is_cfg = ImportanceConfig {
            samples: 32,
            ..Default::default()
        };
        let res = solve(&ch, &PowerCost, &solver, &DualConfig::ascent(0.0, 1.0), &is_cfg).unwrap();
        assert_eq!(res.iterations, 30);
        assert!(res.rate.is_finite());
    }

    #[test]
    fn subsampled_mixture_is_deterministic() {
        let ps = ParticleSet::new(1, (0..20).map(f64::from).collect()).unwrap();
        let a = mixture_reference(&ps, Some(5), 3, 7).unwrap();
        let b = mixture_reference(&ps, Some(5), 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.as_slice().windows(2).all(|w| w[0] < w[1]));
        assert!(mixture_reference(&ps, Some(40), 3, 7).is_none());
    }

    proptest! {
        #[test]
        fn zero_step_is_identity(pts in proptest::collection::vec(-1e6f64..1e6, 1..30),
                                 gs in proptest::collection::vec(-1e6f64..1e6, 30)) {
            let ps = ParticleSet::new(1, pts.clone()).unwrap();
            let out = transport_step(&ps, &gs[..pts.len()], 0.0).unwrap();
            prop_assert_eq!(out, ps);
        }

        #[test]
        fn dual_update_never_negative(l in 0.0f64..10.0, b_hat in 0.0f64..10.0, b in -5.0f64..10.0, a in 1e-4f64..5.0) {
            prop_assert!(dual_update(l, b_hat, b, a) >= 0.0);
        }
    }
}

//! Subcommand drivers. Each one validates its config, runs the solver and
//! writes its artifacts into the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{error, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ccwgd_core::ba::{ba_capacity_at_cost, ba_lambda_sweep, ba_solve, BaSolution};
use ccwgd_core::channels::{FadingCsirChannel, FadingNoCsirChannel, MimoAwgnChannel};
use ccwgd_core::diagnostics::{grad_check_channel, grad_check_cost};
use ccwgd_core::rd::{rd_solve, RdProblem, RdRecord};
use ccwgd_core::rng::{stream_rng, DOMAIN_DIAGNOSTIC};
use ccwgd_core::wgd::{solve_with_sink, stationarity_diagnostic, CsvTraceSink, StationaritySummary, TraceSink};
use ccwgd_core::{ChannelModel, IterationRecord, PowerCost, SolveResult, StopReason};

use crate::config::{BaConfig, BaTarget, CapacityConfig, RdConfig, SweepConfig, SweepParam};
use crate::error::{CliError, Result};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(&path, e))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut w = create(path.clone())?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(&path, e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))
}

/// Contents of `result.json` for `capacity`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityReport {
    pub rate_nats: f64,
    pub cost: f64,
    pub lambda: f64,
    pub lagrangian: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub seed: u64,
    pub stationarity: Option<StationaritySummary>,
    pub config: CapacityConfig,
}

/// Solves one capacity problem, streaming records to `sink`.
pub fn solve_capacity(cfg: &CapacityConfig, sink: &mut dyn TraceSink) -> Result<SolveResult> {
    cfg.validate()?;
    let channel = cfg.channel.build()?;
    let cost = cfg.cost.build();
    solve_with_sink(
        channel.as_ref(),
        cost.as_ref(),
        &cfg.solver,
        &cfg.dual,
        &cfg.importance,
        sink,
    )
    .map_err(|f| {
        let last = f.trace.last().map(|r: &IterationRecord| r.iter);
        error!("solver stopped after {} trace rows (last iter {last:?})", f.trace.len());
        CliError::from(f.error)
    })
}

/// `capacity`: writes `trace.csv`, `particles.csv` and `result.json`.
pub fn run_capacity(cfg: &CapacityConfig, out: &Path) -> Result<CapacityReport> {
    cfg.validate()?;
    create_dir(out)?;
    let trace_path = out.join("trace.csv");
    let mut sink = CsvTraceSink::new(create(trace_path.clone())?).map_err(|e| CliError::io(&trace_path, e))?;
    let res = solve_capacity(cfg, &mut sink)?;
    drop(sink);

    let ppath = out.join("particles.csv");
    let mut pw = create(ppath.clone())?;
    res.particles
        .write_csv(&mut pw, cfg.solver.seed)
        .and_then(|_| pw.flush())
        .map_err(|e| CliError::io(&ppath, e))?;

    let report = CapacityReport {
        rate_nats: res.rate,
        cost: res.cost,
        lambda: res.lambda,
        lagrangian: res.lagrangian,
        grad_norm: res.grad_norm,
        iterations: res.iterations,
        stop_reason: res.stop_reason,
        seed: cfg.solver.seed,
        stationarity: stationarity_diagnostic(&res.trace),
        config: cfg.clone(),
    };
    if let Some(s) = &report.stationarity {
        if !s.converged {
            warn!("stationarity diagnostic: run does not look converged ({s:?})");
        }
    }
    write_json(out.join("result.json"), &report)?;
    Ok(report)
}

/// Contents of `result.json` for `rd`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RdReport {
    pub rate_nats: f64,
    pub distortion: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub seed: u64,
    pub config: RdConfig,
}

/// `rd`: writes `trace.csv`, `particles.csv` and `result.json`.
pub fn run_rd(cfg: &RdConfig, out: &Path) -> Result<RdReport> {
    cfg.solver.validate()?;
    let source = cfg.source.build()?;
    let problem = RdProblem::new(source, cfg.distortion.build(), cfg.lambda)
        .map_err(|e| CliError::Config(format!("key `lambda`: {e}")))?;
    create_dir(out)?;
    let trace_path = out.join("trace.csv");
    let write_trace = |records: &[RdRecord]| -> Result<()> {
        let mut w = create(trace_path.clone())?;
        RdRecord::write_csv(records, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&trace_path, e))
    };
    let res = match rd_solve(&problem, &cfg.solver) {
        Ok(r) => r,
        Err(f) => {
            write_trace(&f.trace)?;
            return Err(f.error.into());
        }
    };
    write_trace(&res.trace)?;
    let ppath = out.join("particles.csv");
    let mut pw = create(ppath.clone())?;
    res.particles
        .write_csv(&mut pw, cfg.solver.seed)
        .and_then(|_| pw.flush())
        .map_err(|e| CliError::io(&ppath, e))?;
    let report = RdReport {
        rate_nats: res.rate,
        distortion: res.distortion,
        lambda: cfg.lambda,
        iterations: res.iterations,
        stop_reason: res.stop_reason,
        seed: cfg.solver.seed,
        config: cfg.clone(),
    };
    write_json(out.join("result.json"), &report)?;
    Ok(report)
}

/// One `ba` solution as written to `result.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaPoint {
    pub lambda: f64,
    pub rate_nats: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub inputs: Vec<f64>,
    pub input_distribution: Vec<f64>,
}

impl BaPoint {
    fn new(sol: BaSolution, inputs: &[f64]) -> Self {
        Self {
            lambda: sol.lambda,
            rate_nats: sol.capacity,
            cost: sol.cost,
            iterations: sol.iterations,
            converged: sol.converged,
            inputs: inputs.to_vec(),
            input_distribution: sol.input.into_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaReport {
    pub points: Vec<BaPoint>,
    pub config: BaConfig,
}

pub const BA_SWEEP_HEADER: &str = "lambda,rate_nats,cost,iterations,converged";

/// `ba`: writes `result.json`, plus `ba_sweep.csv` with one row per
/// multiplier for a `lambdas` sweep.
pub fn run_ba(cfg: &BaConfig, out: &Path) -> Result<BaReport> {
    cfg.options.validate()?;
    let target = cfg.target()?;
    let ch = cfg.build_channel()?;
    let solutions = match &target {
        BaTarget::Lambda(l) => vec![ba_solve(&ch, *l, &cfg.options)?],
        BaTarget::Sweep(ls) => ba_lambda_sweep(&ch, ls, &cfg.options)?,
        BaTarget::Budget(b) => vec![ba_capacity_at_cost(&ch, *b, &cfg.options)?],
    };
    for s in solutions.iter().filter(|s| !s.converged) {
        warn!(
            "Blahut-Arimoto did not reach tol at lambda={} after {} iterations",
            s.lambda, s.iterations
        );
    }
    create_dir(out)?;
    if let BaTarget::Sweep(_) = target {
        let path = out.join("ba_sweep.csv");
        let mut w = create(path.clone())?;
        let mut body = format!("{BA_SWEEP_HEADER}\n");
        for s in &solutions {
            body.push_str(&format!(
                "{:?},{:?},{:?},{},{}\n",
                s.lambda, s.capacity, s.cost, s.iterations, s.converged
            ));
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&path, e))?;
    }
    let report = BaReport {
        points: solutions.into_iter().map(|s| BaPoint::new(s, ch.inputs())).collect(),
        config: cfg.clone(),
    };
    write_json(out.join("result.json"), &report)?;
    Ok(report)
}

pub const SWEEP_HEADER: &str = "param,rate_nats,cost,lambda,iterations";

/// One successful sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub rate_nats: f64,
    pub cost: f64,
    pub lambda: f64,
    pub iterations: usize,
}

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:?},{:?},{:?},{}",
            self.param, self.rate_nats, self.cost, self.lambda, self.iterations
        )
    }
}

/// `sweep`: solves every grid point in parallel and writes `sweep.csv` in grid
/// order. Failed points are logged and left out; if any failed the command
/// returns [`CliError::PartialSweep`] after writing the rest.
pub fn run_sweep(cfg: &SweepConfig, out: &Path) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    create_dir(out)?;
    struct Null;
    impl TraceSink for Null {
        fn record(&mut self, _: &IterationRecord) -> std::io::Result<()> {
            Ok(())
        }
    }
    let outcomes: Vec<(f64, Result<SolveResult>)> = cfg
        .values
        .par_iter()
        .map(|&v| (v, solve_capacity(&cfg.point(v), &mut Null)))
        .collect();

    let name = match cfg.param {
        SweepParam::Budget => "budget",
        SweepParam::Lambda => "lambda",
    };
    let mut rows = Vec::new();
    let mut failed = 0;
    for (v, outcome) in outcomes {
        match outcome {
            Ok(r) => {
                info!(
                    "{name}={v}: rate={:.6} cost={:.6} lambda={:.6}",
                    r.rate, r.cost, r.lambda
                );
                rows.push(SweepRow {
                    param: v,
                    rate_nats: r.rate,
                    cost: r.cost,
                    lambda: r.lambda,
                    iterations: r.iterations,
                });
            }
            Err(e) => {
                error!("{name}={v}: {e}");
                failed += 1;
            }
        }
    }
    let path = out.join("sweep.csv");
    let mut w = create(path.clone())?;
    let mut body = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        body.push_str(&r.csv_row());
        body.push('\n');
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path, e))?;
    if failed > 0 {
        return Err(CliError::PartialSweep {
            failed,
            total: cfg.values.len(),
        });
    }
    Ok(rows)
}

/// Relative-error tolerance used by `check`.
pub const CHECK_TOL: f64 = 1e-5;
const CHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub max_rel_error: f64,
    pub pass: bool,
}

/// Finite-difference checks of `∇_x log p(y|x)` for every channel and of the
/// power-cost gradient. Outputs are drawn from the channel at each input.
pub fn run_check(seed: u64) -> Result<Vec<CheckRow>> {
    let mimo = MimoAwgnChannel::random_normalized(2, 2, seed)?;
    let channels: Vec<Box<dyn ChannelModel>> = vec![
        Box::new(MimoAwgnChannel::scalar()),
        Box::new(mimo),
        Box::new(FadingCsirChannel),
        Box::new(FadingNoCsirChannel),
    ];
    let scalars = [-2.3, -0.8, 0.35, 1.1, 2.9];
    let mut rows = Vec::new();
    for ch in &channels {
        let n = ch.input_dim();
        let xs: Vec<Vec<f64>> = (0..scalars.len())
            .map(|i| (0..n).map(|c| scalars[(i + 2 * c) % scalars.len()]).collect())
            .collect();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = xs
            .into_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = stream_rng(seed, DOMAIN_DIAGNOSTIC, 1, i as u64);
                let mut y = vec![0.0; ch.output_dim()];
                ch.sample_output(&x, &mut rng, &mut y);
                (x, y)
            })
            .collect();
        let err = grad_check_channel(ch.as_ref(), &pairs, CHECK_STEP);
        rows.push(CheckRow {
            name: ch.name().to_string(),
            max_rel_error: err,
            pass: err <= CHECK_TOL,
        });
    }
    let pts: Vec<Vec<f64>> = scalars.iter().map(|&v| vec![v, -0.5 * v]).collect();
    let err = grad_check_cost(&PowerCost, &pts, CHECK_STEP);
    rows.push(CheckRow {
        name: "power-cost".into(),
        max_rel_error: err,
        pass: err <= CHECK_TOL,
    });
    Ok(rows)
}

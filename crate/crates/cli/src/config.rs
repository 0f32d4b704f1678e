//! JSON run configurations for every subcommand.
//!
//! Every struct rejects unknown keys. Serializing a parsed config writes all
//! defaults out explicitly, and that echo is what `result.json` stores so a
//! run can be repeated from it.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ccwgd_core::ba::BaOptions;
use ccwgd_core::channels::{linspace, quantize_channel, DiscreteChannel};
use ccwgd_core::rd::{gaussian_source, DistortionSpec};
use ccwgd_core::{ChannelSpec, CostSpec, DualConfig, ImportanceConfig, ParticleSet, SolverConfig};

use crate::error::{CliError, Result};

/// Deserializes `text`, reporting the failing key path and position.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        let key = if path == "." { "<root>".to_string() } else { path };
        CliError::Config(format!(
            "{origin}:{}:{}: key `{key}`: {}",
            inner.line(),
            inner.column(),
            strip_position(&inner.to_string())
        ))
    })?;
    de.end()
        .map_err(|e| CliError::Config(format!("{origin}:{}:{}: trailing characters", e.line(), e.column())))?;
    Ok(value)
}

fn strip_position(msg: &str) -> &str {
    msg.rfind(" at line ").map_or(msg, |i| &msg[..i])
}

/// Reads and parses a config file, then makes relative paths absolute against
/// the file's directory.
pub fn load<T: DeserializeOwned + ResolvePaths>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: T = parse_json(&text, &path.display().to_string())?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        base
    };
    cfg.resolve_paths(&std::fs::canonicalize(&base).unwrap_or(base));
    Ok(cfg)
}

pub trait ResolvePaths {
    fn resolve_paths(&mut self, _base: &Path) {}
}

fn absolutize(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// `capacity` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub channel: ChannelSpec,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default)]
    pub dual: DualConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub importance: ImportanceConfig,
}

impl ResolvePaths for CapacityConfig {}

impl CapacityConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.build()?;
        self.solver.validate()?;
        self.dual.validate()?;
        self.importance.validate()?;
        Ok(())
    }
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}

/// Source measure for `rd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    /// `count` i.i.d. draws from `N(mean, variance · I_dim)`.
    Gaussian {
        #[serde(default = "one")]
        dim: usize,
        #[serde(default)]
        mean: f64,
        #[serde(default = "unit")]
        variance: f64,
        count: usize,
        #[serde(default)]
        seed: u64,
    },
    Points {
        points: Vec<Vec<f64>>,
    },
    /// A particle CSV as written by `capacity`.
    File {
        path: PathBuf,
    },
}

impl SourceSpec {
    pub fn build(&self) -> Result<ParticleSet> {
        match self {
            SourceSpec::Gaussian {
                dim,
                mean,
                variance,
                count,
                seed,
            } => gaussian_source(*dim, *mean, *variance, *count, *seed)
                .map_err(|e| CliError::Config(format!("source: {e}"))),
            SourceSpec::Points { points } => {
                ParticleSet::from_rows(points).map_err(|e| CliError::Config(format!("source.points: {e}")))
            }
            SourceSpec::File { path } => {
                let f = std::fs::File::open(path)
                    .map_err(|e| CliError::Config(format!("source.path {}: {e}", path.display())))?;
                ParticleSet::read_csv(std::io::BufReader::new(f))
                    .map_err(|e| CliError::Config(format!("source.path {}: {e}", path.display())))
            }
        }
    }
}

/// `rd` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RdConfig {
    pub source: SourceSpec,
    #[serde(default)]
    pub distortion: DistortionSpec,
    pub lambda: f64,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ResolvePaths for RdConfig {
    fn resolve_paths(&mut self, base: &Path) {
        if let SourceSpec::File { path } = &mut self.source {
            absolutize(path, base);
        }
    }
}

/// Evenly spaced grid on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Transition matrix for `ba`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaChannelSpec {
    /// Inline row-stochastic matrix.
    Matrix { rows: Vec<Vec<f64>> },
    /// Headerless CSV, one input per line; `#` starts a comment.
    Csv { path: PathBuf },
    /// A scalar continuous channel quantized onto `inputs` points. The
    /// `outputs` grid gives `count` interior edges, with two unbounded bins at
    /// the ends.
    Quantized {
        channel: ChannelSpec,
        inputs: GridSpec,
        outputs: GridSpec,
        #[serde(default)]
        cost: CostSpec,
    },
}

/// `ba` subcommand. At most one of `lambda`, `lambdas` and `budget` may be
/// set; with none, `lambda = 0` gives the unconstrained capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaConfig {
    pub channel: BaChannelSpec,
    /// Per-input costs, overriding those of a quantized channel.
    #[serde(default)]
    pub costs: Option<Vec<f64>>,
    /// CSV file with the per-input costs (one row or one column).
    #[serde(default)]
    pub costs_path: Option<PathBuf>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub budget: Option<f64>,
    #[serde(default)]
    pub options: BaOptions,
}

impl ResolvePaths for BaConfig {
    fn resolve_paths(&mut self, base: &Path) {
        if let BaChannelSpec::Csv { path } = &mut self.channel {
            absolutize(path, base);
        }
        if let Some(p) = &mut self.costs_path {
            absolutize(p, base);
        }
    }
}

/// What a `ba` run computes.
#[derive(Debug, Clone, PartialEq)]
pub enum BaTarget {
    Lambda(f64),
    Sweep(Vec<f64>),
    Budget(f64),
}

impl BaConfig {
    pub fn target(&self) -> Result<BaTarget> {
        match (self.lambda, &self.lambdas, self.budget) {
            (None, None, None) => Ok(BaTarget::Lambda(0.0)),
            (Some(l), None, None) => Ok(BaTarget::Lambda(l)),
            (None, Some(ls), None) if !ls.is_empty() => Ok(BaTarget::Sweep(ls.clone())),
            (None, Some(_), None) => Err(CliError::Config("key `lambdas`: empty list".into())),
            (None, None, Some(b)) => Ok(BaTarget::Budget(b)),
            _ => Err(CliError::Config(
                "keys `lambda`, `lambdas` and `budget` are mutually exclusive".into(),
            )),
        }
    }

    pub fn build_channel(&self) -> Result<DiscreteChannel> {
        let (rows, inputs, mut costs) = match &self.channel {
            BaChannelSpec::Matrix { rows } => (rows.clone(), None, None),
            BaChannelSpec::Csv { path } => (read_matrix_csv(path)?, None, None),
            BaChannelSpec::Quantized {
                channel,
                inputs,
                outputs,
                cost,
            } => {
                if inputs.count == 0 || outputs.count == 0 {
                    return Err(CliError::Config("key `channel`: grid counts must be >= 1".into()));
                }
                let ch = channel.build()?;
                let grid = linspace(inputs.lo, inputs.hi, inputs.count);
                let mut edges = vec![f64::NEG_INFINITY];
                edges.extend(linspace(outputs.lo, outputs.hi, outputs.count));
                edges.push(f64::INFINITY);
                let q = quantize_channel(ch.as_ref(), &grid, &edges, cost.build().as_ref())
                    .map_err(|e| CliError::Config(format!("key `channel`: {e}")))?;
                let rows = (0..q.num_inputs()).map(|i| q.row(i).to_vec()).collect();
                (rows, Some(q.inputs().to_vec()), Some(q.costs().to_vec()))
            }
        };
        if let Some(c) = &self.costs {
            costs = Some(c.clone());
        }
        if let Some(p) = &self.costs_path {
            if self.costs.is_some() {
                return Err(CliError::Config(
                    "keys `costs` and `costs_path` are mutually exclusive".into(),
                ));
            }
            costs = Some(read_matrix_csv(p)?.concat());
        }
        let n = rows.len();
        let inputs = inputs.unwrap_or_else(|| (0..n).map(|i| i as f64).collect());
        let costs = costs.unwrap_or_else(|| vec![0.0; n]);
        DiscreteChannel::new(rows, inputs, costs).map_err(|e| CliError::Config(format!("key `channel`: {e}")))
    }
}

/// Reads a headerless numeric CSV. Blank lines and `#` comments are skipped.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|_| {
                    CliError::Config(format!(
                        "{}: record {}, field {}: `{field}` is not a number",
                        path.display(),
                        line + 1,
                        col + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!("{}: no rows", path.display())));
    }
    Ok(rows)
}

/// Parameter varied by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    /// `dual.budget` under dual ascent.
    Budget,
    /// A fixed multiplier, `dual.lambda0` in fixed mode.
    Lambda,
}

/// `sweep` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: CapacityConfig,
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl ResolvePaths for SweepConfig {}

impl SweepConfig {
    /// The capacity config for grid point `value`.
    pub fn point(&self, value: f64) -> CapacityConfig {
        let mut cfg = self.base.clone();
        match self.param {
            SweepParam::Budget => {
                cfg.dual.mode = ccwgd_core::DualMode::DualAscent;
                cfg.dual.budget = Some(value);
            }
            SweepParam::Lambda => {
                cfg.dual.mode = ccwgd_core::DualMode::Fixed;
                cfg.dual.lambda0 = value;
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(CliError::Config("key `values`: empty grid".into()));
        }
        for &v in &self.values {
            self.point(v)
                .validate()
                .map_err(|e| CliError::Config(format!("grid value {v}: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_names_path_and_line() {
        let text = "{\n  \"channel\": {\"kind\": \"awgn\"},\n  \"solver\": {\"max_iter\": 5}\n}";
        let err = parse_json::<CapacityConfig>(text, "cfg.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("cfg.json:3:"), "{msg}");
        assert!(msg.contains("solver"), "{msg}");
        assert!(msg.contains("max_iter"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn defaults_are_materialized_in_the_echo() {
        let cfg: CapacityConfig = parse_json(r#"{"channel": {"kind": "awgn"}}"#, "t").unwrap();
        let echo = serde_json::to_value(&cfg).unwrap();
        assert_eq!(echo["solver"]["num_particles"], 128);
        assert_eq!(echo["importance"]["samples"], 256);
        assert_eq!(echo["dual"]["alpha"], 0.05);
        let back: CapacityConfig = serde_json::from_value(echo).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn ba_targets_are_exclusive() {
        let cfg: BaConfig = parse_json(
            r#"{"channel": {"kind": "matrix", "rows": [[1, 0], [0, 1]]}, "lambda": 1, "budget": 1}"#,
            "t",
        )
        .unwrap();
        assert!(cfg.target().is_err());
    }

    #[test]
    fn non_stochastic_row_is_a_config_error() {
        let cfg: BaConfig =
            parse_json(r#"{"channel": {"kind": "matrix", "rows": [[0.5, 0.4], [0, 1]]}}"#, "t").unwrap();
        assert_eq!(cfg.build_channel().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn malformed_distortion_is_rejected() {
        let text = r#"{"source": {"kind": "gaussian", "count": 8}, "distortion": {"kind": "hamming"}, "lambda": 1}"#;
        let msg = parse_json::<RdConfig>(text, "t").unwrap_err().to_string();
        assert!(msg.contains("distortion"), "{msg}");
    }

    #[test]
    fn sweep_points_override_the_dual_settings() {
        let text = r#"{"base": {"channel": {"kind": "awgn"}}, "param": "budget", "values": [0.5, 2]}"#;
        let cfg: SweepConfig = parse_json(text, "t").unwrap();
        let p = cfg.point(2.0);
        assert_eq!(p.dual.budget, Some(2.0));
        assert_eq!(p.dual.mode, ccwgd_core::DualMode::DualAscent);
        cfg.validate().unwrap();
    }
}

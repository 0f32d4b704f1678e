//! Empirical input measures and their initialization.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, DOMAIN_INIT};

/// `N` points in `R^n` standing for the uniform empirical measure
/// `(1/N) Σ δ_{x_i}`. Weights are implicit and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    dim: usize,
    points: Vec<f64>,
}

impl ParticleSet {
    /// Builds a set from row-major coordinates.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("particle dimension must be >= 1".into()));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not form a nonempty set of {dim}-dimensional points",
                points.len()
            )));
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "particle {} has a non-finite coordinate",
                pos / dim
            )));
        }
        Ok(Self { dim, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(dim, rows.concat())
    }

    /// Skips the finiteness check. Callers guarantee the invariant.
    pub(crate) fn from_raw(dim: usize, points: Vec<f64>) -> Self {
        debug_assert!(dim > 0 && !points.is_empty() && points.len().is_multiple_of(dim));
        Self { dim, points }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.points
    }

    /// `(1/N) Σ ‖x_i‖²`.
    pub fn second_moment(&self) -> f64 {
        self.points.iter().map(|v| v * v).sum::<f64>() / self.len() as f64
    }

    /// Writes the CSV dump: a `# n=<n> N=<N> seed=<seed>` line, then one row
    /// per particle with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut out: W, seed: u64) -> std::io::Result<()> {
        writeln!(out, "# n={} N={} seed={}", self.dim, self.len(), seed)?;
        for p in self.iter() {
            let mut first = true;
            for v in p {
                if !first {
                    out.write_all(b",")?;
                }
                first = false;
                write!(out, "{v:?}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`ParticleSet::write_csv`]. Lines starting
    /// with `#` and blank lines are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidInput(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

/// Covariance of a Gaussian initial measure: isotropic variance or a full
/// symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariance {
    Isotropic(f64),
    Matrix(Vec<Vec<f64>>),
}

/// Initial measure `μ^(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    /// Isotropic Gaussian whose variance is picked by the solver: matched to
    /// the cost budget when there is one, unit otherwise.
    #[default]
    Auto,
    Gaussian {
        mean: Vec<f64>,
        cov: Covariance,
    },
    Points {
        points: Vec<Vec<f64>>,
    },
}

impl InitSpec {
    /// Zero-mean isotropic Gaussian.
    pub fn isotropic(dim: usize, variance: f64) -> Self {
        InitSpec::Gaussian {
            mean: vec![0.0; dim],
            cov: Covariance::Isotropic(variance),
        }
    }

    /// Replaces `Auto` by an explicit zero-mean Gaussian with `variance`.
    pub fn resolve(&self, dim: usize, variance: f64) -> Self {
        match self {
            InitSpec::Auto => Self::isotropic(dim, variance),
            other => other.clone(),
        }
    }
}

/// Factor `A` with `A Aᵀ = cov`; fails on asymmetric or indefinite input.
fn covariance_factor(cov: &Covariance, dim: usize) -> Result<DMatrix<f64>> {
    match cov {
        Covariance::Isotropic(v) => {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::config("solver.init.cov", "variance must be finite and >= 0"));
            }
            Ok(DMatrix::identity(dim, dim) * v.sqrt())
        }
        Covariance::Matrix(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(Error::config(
                    "solver.init.cov",
                    format!("covariance must be {dim}x{dim}"),
                ));
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("solver.init.cov", "entries must be finite"));
            }
            let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            if (&m - m.transpose()).iter().any(|v| v.abs() > 1e-12 * scale) {
                return Err(Error::config("solver.init.cov", "covariance is not symmetric"));
            }
            let eig = SymmetricEigen::new(m);
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < -1e-12 * scale {
                return Err(Error::config(
                    "solver.init.cov",
                    format!("covariance is not positive semidefinite (eigenvalue {min:e})"),
                ));
            }
            let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
        }
    }
}

/// Draws the initial particle set. Sampling is sequential on a single seeded
/// stream, so the result does not depend on the thread count.
pub fn init_particles(init: &InitSpec, num_particles: usize, dim: usize, seed: u64) -> Result<ParticleSet> {
    if num_particles == 0 {
        return Err(Error::config("solver.num_particles", "must be >= 1"));
    }
    match init {
        InitSpec::Points { points } => {
            if points.len() != num_particles {
                return Err(Error::config(
                    "solver.num_particles",
                    format!("{num_particles} particles requested but init lists {}", points.len()),
                ));
            }
            if points.iter().any(|p| p.len() != dim) {
                return Err(Error::config(
                    "solver.init.points",
                    format!("every point must have dimension {dim}"),
                ));
            }
            ParticleSet::from_rows(points).map_err(|e| Error::config("solver.init.points", e.to_string()))
        }
        InitSpec::Auto => init_particles(&InitSpec::isotropic(dim, 1.0), num_particles, dim, seed),
        InitSpec::Gaussian { mean, cov } => {
            if mean.len() != dim {
                return Err(Error::config(
                    "solver.init.mean",
                    format!("mean must have dimension {dim}"),
                ));
            }
            let factor = covariance_factor(cov, dim)?;
            let mut rng = stream_rng(seed, DOMAIN_INIT, 0, 0);
            let mut points = Vec::with_capacity(num_particles * dim);
            let mut z = vec![0.0; dim];
            for _ in 0..num_particles {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                for r in 0..dim {
                    let mut v = mean[r];
                    for (c, zc) in z.iter().enumerate() {
                        v += factor[(r, c)] * zc;
                    }
                    points.push(v);
                }
            }
            ParticleSet::new(dim, points).map_err(|e| Error::config("solver.init", e.to_string()))
        }
    }
}

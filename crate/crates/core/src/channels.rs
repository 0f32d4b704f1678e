//! Channel models with analytic log-densities and input gradients, plus a
//! quantizer that turns a scalar channel into a transition matrix.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::numeric::{LogSumExp, LN_2PI};
use crate::particles::ParticleSet;
use crate::rng::{stream_rng, DOMAIN_CHANNEL};

/// A memoryless channel given by its conditional density `p(y|x)`.
///
/// Implementations write into caller-provided buffers so the estimator's
/// inner loops stay allocation-free.
pub trait ChannelModel: Send + Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    /// `log p(y|x)`.
    fn log_pdf(&self, x: &[f64], y: &[f64]) -> f64;

    /// `∇_x log p(y|x)`, written into `grad` (length `input_dim`).
    fn grad_x_log_pdf(&self, x: &[f64], y: &[f64], grad: &mut [f64]);

    /// Draws `y ~ p(·|x)` into `y` (length `output_dim`).
    fn sample_output(&self, x: &[f64], rng: &mut dyn RngCore, y: &mut [f64]);

    /// A location for the output given `x`; Gaussian importance proposals are
    /// centred here.
    fn output_center(&self, x: &[f64], center: &mut [f64]);

    fn name(&self) -> &str;

    /// The output density induced by the empirical measure on `prev`.
    /// Channels override this with a version that precomputes per-particle
    /// quantities; the default evaluates `log_pdf` component by component.
    fn mixture<'a>(&'a self, prev: &'a ParticleSet) -> Box<dyn OutputMixture + 'a> {
        Box::new(GenericMixture { channel: self, prev })
    }
}

/// `log p_Y(y) = log[(1/N) Σ_j p(y|x_j)]` for a fixed particle set.
pub trait OutputMixture: Sync {
    fn log_pdf(&self, y: &[f64]) -> f64;
}

struct GenericMixture<'a, C: ?Sized> {
    channel: &'a C,
    prev: &'a ParticleSet,
}

impl<C: ChannelModel + ?Sized> OutputMixture for GenericMixture<'_, C> {
    fn log_pdf(&self, y: &[f64]) -> f64 {
        let mut acc = LogSumExp::new();
        for xj in self.prev.iter() {
            acc.push(self.channel.log_pdf(xj, y));
        }
        acc.value() - (self.prev.len() as f64).ln()
    }
}

/// Two-pass log-sum-exp of `count` terms produced by `term(j)`, which must be
/// cheap enough to evaluate twice.
#[inline]
fn lse_by<F: Fn(usize) -> f64>(count: usize, term: F) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for j in 0..count {
        let t = term(j);
        // `!(t <= max)` also catches NaN.
        if !(t <= max) {
            max = t;
        }
    }
    if max.is_nan() || max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    let mut sum = 0.0;
    for j in 0..count {
        sum += (term(j) - max).exp();
    }
    max + sum.ln()
}

/// Equal-weight mixture of unit-covariance Gaussians at precomputed centres.
struct GaussianCentersMixture {
    dim: usize,
    centers: Vec<f64>,
    log_const: f64,
}

impl OutputMixture for GaussianCentersMixture {
    fn log_pdf(&self, y: &[f64]) -> f64 {
        let m = self.dim;
        let lse = if m == 1 {
            let y0 = y[0];
            lse_by(self.centers.len(), |j| {
                let e = y0 - self.centers[j];
                -0.5 * e * e
            })
        } else {
            lse_by(self.centers.len() / m, |j| {
                let c = &self.centers[j * m..(j + 1) * m];
                -0.5 * c.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum::<f64>()
            })
        };
        lse + self.log_const
    }
}

/// `y = Hx + z`, `z ~ N(0, I_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoAwgnChannel {
    rows: usize,
    cols: usize,
    h: Vec<f64>,
    log_norm: f64,
}

impl MimoAwgnChannel {
    /// `h` is row-major `rows × cols`.
    pub fn new(rows: usize, cols: usize, h: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || h.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "channel matrix needs {rows}x{cols} entries, got {}",
                h.len()
            )));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("channel matrix has non-finite entries".into()));
        }
        Ok(Self {
            rows,
            cols,
            h,
            log_norm: -0.5 * rows as f64 * LN_2PI,
        })
    }

    /// Scalar AWGN `y = x + z`.
    pub fn scalar() -> Self {
        Self::new(1, 1, vec![1.0]).expect("1x1 identity is valid")
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("channel matrix rows differ in length".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Gaussian random matrix rescaled so its squared singular values sum to
    /// one (unit Frobenius norm).
    pub fn random_normalized(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, DOMAIN_CHANNEL, 0, 0);
        let mut h: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        let fro = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        if fro == 0.0 {
            return Err(Error::InvalidInput("random channel matrix is zero".into()));
        }
        h.iter_mut().for_each(|v| *v /= fro);
        Self::new(rows, cols, h)
    }

    pub fn matrix(&self) -> &[f64] {
        &self.h
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Singular values of `H`, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let m = nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.h);
        let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    #[inline]
    fn residual(&self, x: &[f64], y: &[f64], r: usize) -> f64 {
        let row = &self.h[r * self.cols..(r + 1) * self.cols];
        let hx: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
        y[r] - hx
    }
}

impl ChannelModel for MimoAwgnChannel {
    fn input_dim(&self) -> usize {
        self.cols
    }

    fn output_dim(&self) -> usize {
        self.rows
    }

    #[inline]
    fn log_pdf(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut sq = 0.0;
        for r in 0..self.rows {
            let e = self.residual(x, y, r);
            sq += e * e;
        }
        self.log_norm - 0.5 * sq
    }

    fn grad_x_log_pdf(&self, x: &[f64], y: &[f64], grad: &mut [f64]) {
        // Hᵀ(y − Hx)
        grad.fill(0.0);
        for r in 0..self.rows {
            let e = self.residual(x, y, r);
            let row = &self.h[r * self.cols..(r + 1) * self.cols];
            for (g, a) in grad.iter_mut().zip(row) {
                *g += a * e;
            }
        }
    }

    fn sample_output(&self, x: &[f64], rng: &mut dyn RngCore, y: &mut [f64]) {
        self.output_center(x, y);
        for v in y.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += z;
        }
    }

    fn output_center(&self, x: &[f64], center: &mut [f64]) {
        for (r, c) in center.iter_mut().enumerate() {
            let row = &self.h[r * self.cols..(r + 1) * self.cols];
            *c = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn mixture<'a>(&'a self, prev: &'a ParticleSet) -> Box<dyn OutputMixture + 'a> {
        let mut centers = vec![0.0; prev.len() * self.rows];
        for (c, x) in centers.chunks_exact_mut(self.rows).zip(prev.iter()) {
            self.output_center(x, c);
        }
        Box::new(GaussianCentersMixture {
            dim: self.rows,
            centers,
            log_const: self.log_norm - (prev.len() as f64).ln(),
        })
    }

    fn name(&self) -> &str {
        if self.rows == 1 && self.cols == 1 {
            "awgn"
        } else {
            "mimo-awgn"
        }
    }
}

/// Rayleigh fading `y = s·x + z` with the fading coefficient observed at the
/// receiver. The output is the pair `(y, s)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FadingCsirChannel;

impl ChannelModel for FadingCsirChannel {
    fn input_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        2
    }

    #[inline]
    fn log_pdf(&self, x: &[f64], y: &[f64]) -> f64 {
        let (out, s) = (y[0], y[1]);
        let e = out - s * x[0];
        -0.5 * (e * e + s * s) - LN_2PI
    }

    fn grad_x_log_pdf(&self, x: &[f64], y: &[f64], grad: &mut [f64]) {
        let (out, s) = (y[0], y[1]);
        grad[0] = s * (out - s * x[0]);
    }

    fn sample_output(&self, x: &[f64], rng: &mut dyn RngCore, y: &mut [f64]) {
        let s: f64 = StandardNormal.sample(&mut *rng);
        let z: f64 = StandardNormal.sample(rng);
        y[0] = s * x[0] + z;
        y[1] = s;
    }

    fn output_center(&self, _x: &[f64], center: &mut [f64]) {
        center.fill(0.0);
    }

    fn name(&self) -> &str {
        "fading-csir"
    }

    fn mixture<'a>(&'a self, prev: &'a ParticleSet) -> Box<dyn OutputMixture + 'a> {
        Box::new(CsirMixture {
            xs: prev.as_slice(),
            log_n: (prev.len() as f64).ln(),
        })
    }
}

struct CsirMixture<'a> {
    xs: &'a [f64],
    log_n: f64,
}

impl OutputMixture for CsirMixture<'_> {
    fn log_pdf(&self, y: &[f64]) -> f64 {
        let (out, s) = (y[0], y[1]);
        let lse = lse_by(self.xs.len(), |j| {
            let e = out - s * self.xs[j];
            -0.5 * e * e
        });
        lse - 0.5 * s * s - LN_2PI - self.log_n
    }
}

/// Rayleigh fading without receiver CSI, marginalized in closed form:
/// `y | x ~ N(0, 1 + x²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FadingNoCsirChannel;

impl ChannelModel for FadingNoCsirChannel {
    fn input_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        1
    }

    #[inline]
    fn log_pdf(&self, x: &[f64], y: &[f64]) -> f64 {
        let v = 1.0 + x[0] * x[0];
        -0.5 * (y[0] * y[0] / v + LN_2PI + v.ln())
    }

    fn grad_x_log_pdf(&self, x: &[f64], y: &[f64], grad: &mut [f64]) {
        let v = 1.0 + x[0] * x[0];
        grad[0] = x[0] * (y[0] * y[0] - v) / (v * v);
    }

    fn sample_output(&self, x: &[f64], rng: &mut dyn RngCore, y: &mut [f64]) {
        let s: f64 = StandardNormal.sample(&mut *rng);
        let z: f64 = StandardNormal.sample(rng);
        y[0] = s * x[0] + z;
    }

    fn output_center(&self, _x: &[f64], center: &mut [f64]) {
        center[0] = 0.0;
    }

    fn name(&self) -> &str {
        "fading-nocsir"
    }

    fn mixture<'a>(&'a self, prev: &'a ParticleSet) -> Box<dyn OutputMixture + 'a> {
        let inv_var = prev.iter().map(|x| 1.0 / (1.0 + x[0] * x[0])).collect();
        let log_scale = prev.iter().map(|x| -0.5 * (1.0 + x[0] * x[0]).ln()).collect();
        Box::new(NoCsirMixture {
            inv_var,
            log_scale,
            log_const: -0.5 * LN_2PI - (prev.len() as f64).ln(),
        })
    }
}

struct NoCsirMixture {
    inv_var: Vec<f64>,
    log_scale: Vec<f64>,
    log_const: f64,
}

impl OutputMixture for NoCsirMixture {
    fn log_pdf(&self, y: &[f64]) -> f64 {
        let y2 = y[0] * y[0];
        let lse = lse_by(self.inv_var.len(), |j| self.log_scale[j] - 0.5 * y2 * self.inv_var[j]);
        lse + self.log_const
    }
}

/// Matrix spec for `mimo-awgn`: an explicit row-major matrix or a seeded
/// random one normalized to unit Frobenius norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Explicit(Vec<Vec<f64>>),
    Random { rows: usize, cols: usize, seed: u64 },
}

/// Channel selection in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelSpec {
    Awgn,
    MimoAwgn { matrix: MatrixSpec },
    FadingCsir,
    FadingNocsir,
}

impl ChannelSpec {
    pub fn build(&self) -> Result<Box<dyn ChannelModel>> {
        Ok(match self {
            ChannelSpec::Awgn => Box::new(MimoAwgnChannel::scalar()),
            ChannelSpec::MimoAwgn { matrix } => Box::new(
                match matrix {
                    MatrixSpec::Explicit(rows) => MimoAwgnChannel::from_rows(rows),
                    MatrixSpec::Random { rows, cols, seed } => MimoAwgnChannel::random_normalized(*rows, *cols, *seed),
                }
                .map_err(|e| Error::config("channel.matrix", e.to_string()))?,
            ),
            ChannelSpec::FadingCsir => Box::new(FadingCsirChannel),
            ChannelSpec::FadingNocsir => Box::new(FadingNoCsirChannel),
        })
    }
}

/// Finite-alphabet channel: row-stochastic `P(y|x)` plus the input points it
/// was built from and their costs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannel {
    n_in: usize,
    n_out: usize,
    matrix: Vec<f64>,
    inputs: Vec<f64>,
    costs: Vec<f64>,
}

impl DiscreteChannel {
    /// Validates nonnegativity and that every row sums to 1 within 1e-12.
    pub fn new(rows: Vec<Vec<f64>>, inputs: Vec<f64>, costs: Vec<f64>) -> Result<Self> {
        let n_in = rows.len();
        let n_out = rows.first().map(Vec::len).unwrap_or(0);
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidInput("transition matrix is empty".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_out {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} entries, expected {n_out}",
                    r.len()
                )));
            }
            if r.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("row {i} sums to {s}, not 1")));
            }
        }
        if inputs.len() != n_in || costs.len() != n_in {
            return Err(Error::InvalidInput(format!(
                "need {n_in} input points and costs, got {} and {}",
                inputs.len(),
                costs.len()
            )));
        }
        if costs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidInput("costs must be finite and >= 0".into()));
        }
        Ok(Self {
            n_in,
            n_out,
            matrix: rows.concat(),
            inputs,
            costs,
        })
    }

    /// Matrix with input labels `0..n` and zero costs.
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        Self::new(rows, (0..n).map(|i| i as f64).collect(), vec![0.0; n])
    }

    pub fn num_inputs(&self) -> usize {
        self.n_in
    }

    pub fn num_outputs(&self) -> usize {
        self.n_out
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.n_out..(i + 1) * self.n_out]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }
}

/// Adaptive Simpson quadrature on a finite interval.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    // Pre-split so narrow peaks inside wide intervals are not missed.
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = if k + 1 == PANELS { b } else { lo + h };
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            step(f, lo, hi, fa, fm, fb, whole, tol / PANELS as f64, 40)
        })
        .sum()
}

/// `∫_lo^hi f`, with either end allowed to be infinite.
fn integrate<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => simpson(f, lo, hi, tol),
        (true, false) => {
            // y = lo + t/(1−t)
            let g = |t: f64| {
                if t >= 1.0 {
                    return 0.0;
                }
                let u = 1.0 - t;
                f(lo + t / u) / (u * u)
            };
            simpson(&g, 0.0, 1.0, tol)
        }
        (false, true) => {
            let g = |t: f64| {
                if t >= 1.0 {
                    return 0.0;
                }
                let u = 1.0 - t;
                f(hi - t / u) / (u * u)
            };
            simpson(&g, 0.0, 1.0, tol)
        }
        (false, false) => integrate(f, lo, 0.0, 0.5 * tol) + integrate(f, 0.0, hi, 0.5 * tol),
    }
}

/// Minimum fraction of channel mass the output bins must capture per input.
pub const QUANTIZE_MIN_COVERAGE: f64 = 0.9999;

/// Quantizes a scalar-input, scalar-output channel onto an input grid and an
/// output binning. `output_edges` are bin boundaries and may start at `-inf`
/// and end at `+inf`.
pub fn quantize_channel(
    channel: &dyn ChannelModel,
    input_grid: &[f64],
    output_edges: &[f64],
    cost: &dyn CostModel,
) -> Result<DiscreteChannel> {
    if channel.input_dim() != 1 || channel.output_dim() != 1 {
        return Err(Error::InvalidInput("quantization needs a scalar channel".into()));
    }
    if input_grid.is_empty() || input_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(
            "input grid must be nonempty and strictly increasing".into(),
        ));
    }
    if output_edges.len() < 2 || output_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(
            "output edges must be strictly increasing (>= 2 edges)".into(),
        ));
    }
    if input_grid.iter().any(|v| !v.is_finite()) || output_edges.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput(
            "grids must not contain NaN or infinite inputs".into(),
        ));
    }
    let mut rows = Vec::with_capacity(input_grid.len());
    for &x in input_grid {
        let xs = [x];
        let density = |y: f64| channel.log_pdf(&xs, &[y]).exp();
        let mut row: Vec<f64> = output_edges
            .windows(2)
            .map(|w| integrate(&density, w[0], w[1], 1e-13).max(0.0))
            .collect();
        let mass: f64 = row.iter().sum();
        if !(mass >= QUANTIZE_MIN_COVERAGE) {
            return Err(Error::Coverage {
                input: x,
                coverage: mass,
            });
        }
        row.iter_mut().for_each(|p| *p /= mass);
        rows.push(row);
    }
    let costs = input_grid.iter().map(|&x| cost.cost(&[x])).collect();
    DiscreteChannel::new(rows, input_grid.to_vec(), costs)
}

/// `count` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

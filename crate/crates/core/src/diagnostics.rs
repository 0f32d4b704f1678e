//! Verification utilities: exact 1-D Wasserstein distance, finite-difference
//! gradient checks, mass-point clustering and the water-filling capacity of
//! real MIMO-AWGN channels.

use serde::{Deserialize, Serialize};

use crate::channels::{ChannelModel, MimoAwgnChannel};
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::particles::ParticleSet;

/// `W_2` between two equal-size 1-D empirical measures (sorted matching).
pub fn w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty sample sets".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let ms = sa.iter().zip(&sb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok(ms.sqrt())
}

/// Largest relative error between `grad` and central differences of `f`
/// over all points and coordinates. The step for coordinate `c` is
/// `h · max(1, |x_c|)`; the error is `|analytic − fd| / (|analytic| + 1e-12)`.
pub fn grad_check<F, G>(f: F, grad: G, points: &[Vec<f64>], h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    let mut worst: f64 = 0.0;
    for x in points {
        let mut analytic = vec![0.0; x.len()];
        grad(x, &mut analytic);
        let mut xp = x.clone();
        for c in 0..x.len() {
            let step = h * x[c].abs().max(1.0);
            xp[c] = x[c] + step;
            let up = f(&xp);
            xp[c] = x[c] - step;
            let down = f(&xp);
            xp[c] = x[c];
            let fd = (up - down) / (2.0 * step);
            let err = (analytic[c] - fd).abs() / (analytic[c].abs() + 1e-12);
            worst = worst.max(err);
        }
    }
    worst
}

/// [`grad_check`] of `∇_x log p(y|x)` at `(x, y)` pairs.
pub fn grad_check_channel(channel: &dyn ChannelModel, pairs: &[(Vec<f64>, Vec<f64>)], h: f64) -> f64 {
    pairs
        .iter()
        .map(|(x, y)| {
            grad_check(
                |x| channel.log_pdf(x, y),
                |x, g| channel.grad_x_log_pdf(x, y, g),
                std::slice::from_ref(x),
                h,
            )
        })
        .fold(0.0, f64::max)
}

pub fn grad_check_cost(cost: &dyn CostModel, points: &[Vec<f64>], h: f64) -> f64 {
    grad_check(|x| cost.cost(x), |x, g| cost.grad_cost(x, g), points, h)
}

/// A group of particles treated as one mass point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub center: Vec<f64>,
    pub mass: f64,
}

/// Greedy radius clustering.
///
/// Repeatedly takes the first unassigned particle, gathers every unassigned
/// particle within `radius` of it and records the group's mean; clusters
/// whose centres end up within `radius` of each other are then merged.
/// Masses are particle fractions and sum to one.
pub fn cluster_particles(particles: &ParticleSet, radius: f64) -> Result<Vec<Cluster>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("radius must be > 0".into()));
    }
    let n = particles.len();
    let dim = particles.dim();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let r2 = radius * radius;
    let mut assigned = vec![false; n];
    // (sum of coordinates, count)
    let mut groups: Vec<(Vec<f64>, usize)> = Vec::new();
    for seed in 0..n {
        if assigned[seed] {
            continue;
        }
        let anchor = particles.point(seed);
        let mut sum = vec![0.0; dim];
        let mut count = 0;
        #[allow(clippy::needless_range_loop)]
        for j in seed..n {
            if !assigned[j] && dist2(anchor, particles.point(j)) <= r2 {
                assigned[j] = true;
                count += 1;
                for (s, v) in sum.iter_mut().zip(particles.point(j)) {
                    *s += v;
                }
            }
        }
        groups.push((sum, count));
    }
    loop {
        let centers: Vec<Vec<f64>> = groups
            .iter()
            .map(|(s, c)| s.iter().map(|v| v / *c as f64).collect())
            .collect();
        let pair = (0..groups.len())
            .flat_map(|i| (i + 1..groups.len()).map(move |j| (i, j)))
            .find(|&(i, j)| dist2(&centers[i], &centers[j]) <= r2);
        match pair {
            Some((i, j)) => {
                let (sj, cj) = groups.remove(j);
                groups[i].1 += cj;
                for (a, b) in groups[i].0.iter_mut().zip(sj) {
                    *a += b;
                }
            }
            None => break,
        }
    }
    Ok(groups
        .into_iter()
        .map(|(s, c)| Cluster {
            center: s.iter().map(|v| v / c as f64).collect(),
            mass: c as f64 / n as f64,
        })
        .collect())
}

/// Water-filling capacity (nats) of the real channel `y = Hx + z`,
/// `z ~ N(0, I)`, under `E‖x‖² ≤ power`: `Σ ½ log(1 + p_i s_i²)` with
/// `p_i = max(0, μ − 1/s_i²)` and `Σ p_i = power`.
pub fn water_filling_capacity(singular_values: &[f64], power: f64) -> f64 {
    let mut gains: Vec<f64> = singular_values.iter().map(|s| s * s).filter(|g| *g > 0.0).collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    if gains.is_empty() || power <= 0.0 {
        return 0.0;
    }
    // Largest active set whose water level clears every inverse gain.
    let mut level = 0.0;
    for k in (1..=gains.len()).rev() {
        let inv_sum: f64 = gains[..k].iter().map(|g| 1.0 / g).sum();
        let mu = (power + inv_sum) / k as f64;
        if mu > 1.0 / gains[k - 1] {
            level = mu;
            break;
        }
    }
    gains
        .iter()
        .map(|g| {
            let p = (level - 1.0 / g).max(0.0);
            0.5 * (1.0 + p * g).ln()
        })
        .sum()
}

/// [`water_filling_capacity`] of a MIMO-AWGN channel.
pub fn mimo_capacity(channel: &MimoAwgnChannel, power: f64) -> f64 {
    water_filling_capacity(&channel.singular_values(), power)
}

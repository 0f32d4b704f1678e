//! Input cost functions `b: R^n → [0, ∞)`.

use serde::{Deserialize, Serialize};

/// Differentiable, nonnegative input cost.
pub trait CostModel: Send + Sync {
    fn cost(&self, x: &[f64]) -> f64;

    fn grad_cost(&self, x: &[f64], grad: &mut [f64]);

    /// Infimum of the cost over the input space. A budget below it is
    /// infeasible.
    fn infimum(&self) -> f64 {
        0.0
    }

    /// Variance of a zero-mean isotropic Gaussian on `R^dim` whose expected
    /// cost equals `budget`, if the cost admits one.
    fn isotropic_variance_for(&self, _budget: f64, _dim: usize) -> Option<f64> {
        None
    }
}

/// `b(x) = ‖x‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PowerCost;

impl CostModel for PowerCost {
    fn cost(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn grad_cost(&self, x: &[f64], grad: &mut [f64]) {
        for (g, v) in grad.iter_mut().zip(x) {
            *g = 2.0 * v;
        }
    }

    fn isotropic_variance_for(&self, budget: f64, dim: usize) -> Option<f64> {
        (budget > 0.0).then(|| budget / dim as f64)
    }
}

/// `b(x) = 0`: unconstrained capacity.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroCost;

impl CostModel for ZeroCost {
    fn cost(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn grad_cost(&self, _x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
    }
}

/// Cost selection in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostSpec {
    #[default]
    Power,
    None,
}

impl CostSpec {
    pub fn build(&self) -> Box<dyn CostModel> {
        match self {
            CostSpec::Power => Box::new(PowerCost),
            CostSpec::None => Box::new(ZeroCost),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_cost_and_gradient() {
        let x = [1.0, -2.0];
        assert_eq!(PowerCost.cost(&x), 5.0);
        let mut g = [0.0; 2];
        PowerCost.grad_cost(&x, &mut g);
        assert_eq!(g, [2.0, -4.0]);
        assert_eq!(PowerCost.isotropic_variance_for(2.0, 2), Some(1.0));
        assert_eq!(PowerCost.isotropic_variance_for(0.0, 2), None);
    }

    #[test]
    fn zero_cost_is_flat() {
        let mut g = [7.0; 3];
        ZeroCost.grad_cost(&[1.0, 2.0, 3.0], &mut g);
        assert_eq!(g, [0.0; 3]);
        assert_eq!(ZeroCost.cost(&[5.0]), 0.0);
    }
}

//! Allocation engines: pointwise winner selection, the equi-marginal greedy
//! solver, the proportional closed form, and the ex-ante closed form.

use serde::{Deserialize, Serialize};

use crate::error::{AuctionError, Result};
use crate::model::{AuctionInstance, InterimAllocation};
use crate::virtual_value::VirtualValueTable;

/// Gains closer than this count as tied in the greedy solver.
pub const TIE_TOL: f64 = 1e-12;

/// One score per bidder: values or virtual values depending on the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector {
    pub c: Vec<f64>,
}

impl ScoreVector {
    pub fn new(c: Vec<f64>) -> Self {
        debug_assert!(c.iter().all(|x| x.is_finite()));
        Self { c }
    }

    fn any_positive(&self) -> bool {
        self.c.iter().any(|&c| c > 0.0)
    }
}

impl From<Vec<f64>> for ScoreVector {
    fn from(c: Vec<f64>) -> Self {
        Self::new(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub epsilon: f64,
    pub alpha: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            alpha: 0.5,
        }
    }
}

impl GreedyConfig {
    pub fn new(epsilon: f64, alpha: f64) -> Result<Self> {
        let cfg = Self { epsilon, alpha };
        cfg.steps()?;
        Ok(cfg)
    }

    /// Number of ε increments in one unit of supply.
    pub fn steps(&self) -> Result<usize> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AuctionError::InvalidConfig(format!(
                "alpha = {} outside (0, 1)",
                self.alpha
            )));
        }
        unit_steps(self.epsilon, "epsilon")
    }
}

/// `1 / step` as an integer, or an error when it is not one.
pub(crate) fn unit_steps(step: f64, name: &str) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(AuctionError::InvalidConfig(format!("{name} = {step} outside (0, 1]")));
    }
    let inv = 1.0 / step;
    let r = inv.round();
    if (inv - r).abs() > 1e-9 * r {
        return Err(AuctionError::InvalidConfig(format!(
            "{name} = {step} does not divide 1"
        )));
    }
    Ok(r as usize)
}

/// Splits the unit evenly over the strict argmax, if it is positive.
pub fn pointwise_max(c: &ScoreVector) -> Vec<f64> {
    let mut x = vec![0.0; c.c.len()];
    if !c.any_positive() {
        return x;
    }
    let best = c.c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..c.c.len()).filter(|&i| c.c[i] == best).collect();
    let share = 1.0 / winners.len() as f64;
    for i in winners {
        x[i] = share;
    }
    x
}

/// Equi-marginal greedy for max Σ √(c_i⁺ x_i) s.t. Σ x_i ≤ 1.
///
/// Each round hands ε, split evenly, to the bidders whose marginal gain
/// √c⁺ (√(x+ε) − √x) is within [`TIE_TOL`] of the best. Bidders with
/// c_i ≤ 0 never receive anything.
pub fn eqp_solver(c: &ScoreVector, config: &GreedyConfig) -> Result<Vec<f64>> {
    let steps = config.steps()?;
    let eps = config.epsilon;
    let n = c.c.len();
    let mut x = vec![0.0; n];
    if !c.any_positive() {
        return Ok(x);
    }
    let roots: Vec<f64> = c.c.iter().map(|&ci| ci.max(0.0).sqrt()).collect();
    let active: Vec<usize> = (0..n).filter(|&i| roots[i] > 0.0).collect();
    let mut gain = vec![0.0; n];
    let mut tied = Vec::with_capacity(active.len());
    for _ in 0..steps {
        let mut best = f64::NEG_INFINITY;
        for &i in &active {
            gain[i] = roots[i] * ((x[i] + eps).sqrt() - x[i].sqrt());
            best = best.max(gain[i]);
        }
        tied.clear();
        tied.extend(active.iter().copied().filter(|&i| best - gain[i] <= TIE_TOL));
        let share = eps / tied.len() as f64;
        for &i in &tied {
            x[i] += share;
        }
    }
    Ok(x)
}

/// Optimum of max Σ c_i^α x_i^α (c⁺) s.t. Σ x_i ≤ 1:
/// x_j ∝ (c_j⁺)^{α/(1-α)}.
pub fn closed_form_alloc(c: &ScoreVector, alpha: f64) -> Vec<f64> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let n = c.c.len();
    if !c.any_positive() {
        return vec![0.0; n];
    }
    let top = c.c.iter().copied().fold(0.0, f64::max);
    let expo = alpha / (1.0 - alpha);
    let w: Vec<f64> = c
        .c
        .iter()
        .map(|&ci| if ci > 0.0 { (ci / top).powf(expo) } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|wi| wi / total).collect()
}

/// Interim rule from the ex-ante relaxation, plus its normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExAnteSolution {
    pub interim: InterimAllocation,
    pub normalizer: f64,
    pub truncated: bool,
}

/// x̂_{i,k} = φ⁺_{i,k} / Σ_i E[φ⁺_i], optionally capped at 1 (no renormalizing).
pub fn ex_ante_closed_form(
    instance: &AuctionInstance,
    table: &VirtualValueTable,
    truncate: bool,
) -> ExAnteSolution {
    let normalizer: f64 = instance
        .bidders()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            (0..b.num_types())
                .map(|k| b.pmf(k) * table.phi_plus(i, k))
                .sum::<f64>()
        })
        .sum();
    let interim = table
        .phi_plus
        .iter()
        .map(|row| {
            row.iter()
                .map(|&p| {
                    let x = if normalizer > 0.0 { p / normalizer } else { 0.0 };
                    if truncate {
                        x.min(1.0)
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    ExAnteSolution {
        interim: InterimAllocation { table: interim },
        normalizer,
        truncated: truncate,
    }
}

//! Rounding allocations onto a grid of step Δ and measuring what it costs.
//!
//! Each entry goes to ⌊x/Δ⌋Δ or ⌈x/Δ⌉Δ, whichever is nearer, except that a
//! ceiling is refused when it would push the profile's total above 1 or
//! lift the entry above the rounded entry of the next-higher own type. The
//! residual therefore never exceeds Δ, and feasible monotone input stays
//! feasible and monotone. Exact half-way cases round down.

use serde::{Deserialize, Serialize};

use crate::alloc::unit_steps;
use crate::error::Result;
use crate::model::{AuctionInstance, ExPostAllocation, PerceivedPayment};
use crate::payments::{payment_rule_clamped, perceived_payment, ExpectedRevenue};

/// Slack on the per-entry perceived-payment bound.
pub const GAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationReport {
    pub delta: f64,
    /// ρ = x* − x per bidder per profile.
    pub residuals: Vec<Vec<f64>>,
    pub max_abs_residual: f64,
    /// max |q* − q| over all entries.
    pub perceived_payment_gap: f64,
    /// |R* − R| for robust payments.
    pub revenue_gap: f64,
    /// Largest amount any |q* − q| exceeds Δ(2 z_ℓ − z_1); ≤ 0 when the bound holds.
    pub worst_bound_excess: f64,
}

impl DiscretizationReport {
    pub fn bound_holds(&self) -> bool {
        self.worst_bound_excess <= GAP_TOL
    }
}

/// Grid index for one entry: (floor, wants ceiling).
fn split(x: f64, delta: f64, steps: usize) -> (usize, bool) {
    let k = x / delta;
    let r = k.round();
    if (k - r).abs() < 1e-9 {
        return ((r.max(0.0) as usize).min(steps), false);
    }
    let f = k.floor().max(0.0);
    let frac = k - f;
    ((f as usize).min(steps), frac > 0.5 + 1e-9)
}

fn to_alloc(counts: &[Vec<usize>], steps: usize) -> ExPostAllocation {
    ExPostAllocation {
        table: counts
            .iter()
            .map(|row| row.iter().map(|&k| k as f64 / steps as f64).collect())
            .collect(),
    }
}

/// Nearest-grid rounding that keeps ex-post feasibility and own-type
/// monotonicity. The instance supplies the profile layout.
pub fn round_allocation(
    instance: &AuctionInstance,
    alloc: &ExPostAllocation,
    delta: f64,
) -> Result<(ExPostAllocation, DiscretizationReport)> {
    let steps = unit_steps(delta, "delta")?;
    instance.check_profile_table(&alloc.table, "allocation")?;
    let n = instance.num_bidders();
    let np = instance.num_profiles();
    let mut counts = vec![vec![0usize; np]; n];
    // (fraction, own type, bidder, profile) for entries nearer their ceiling
    let mut up: Vec<(f64, usize, usize, usize)> = Vec::new();
    for i in 0..n {
        for v in 0..np {
            let x = alloc.table[i][v];
            let (f, wants) = split(x, delta, steps);
            counts[i][v] = f;
            if wants {
                up.push((x / delta - f as f64, instance.type_index(v, i), i, v));
            }
        }
    }
    // Most-deserving first; higher own types before lower ones so a lower
    // type never blocks on a neighbour that has yet to move.
    up.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let mut pending = up;
    loop {
        let before = pending.len();
        pending.retain(|&(_, l, i, v)| {
            let total: usize = (0..n).map(|j| counts[j][v]).sum();
            let room = total < steps;
            let below_next = l + 1 >= instance.num_types(i)
                || counts[i][v] < counts[i][instance.with_type(v, i, l + 1)];
            if room && below_next {
                counts[i][v] += 1;
                false
            } else {
                true
            }
        });
        if pending.len() == before {
            break;
        }
    }
    let rounded = to_alloc(&counts, steps);
    let residuals: Vec<Vec<f64>> = alloc
        .table
        .iter()
        .zip(&rounded.table)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let max_abs_residual = residuals.iter().flatten().fold(0.0f64, |m, r| m.max(r.abs()));
    let report = DiscretizationReport {
        delta,
        residuals,
        max_abs_residual,
        perceived_payment_gap: 0.0,
        revenue_gap: 0.0,
        worst_bound_excess: f64::NEG_INFINITY,
    };
    Ok((rounded, report))
}

/// Rounds `alloc_star`, recomputes perceived and robust payments on both
/// tables, and reports the gaps together with the per-entry bound
/// |q* − q| ≤ Δ(2 z_ℓ − z_1).
pub fn discretization_gap(
    instance: &AuctionInstance,
    alloc_star: &ExPostAllocation,
    delta: f64,
) -> Result<DiscretizationReport> {
    let (rounded, mut report) = round_allocation(instance, alloc_star, delta)?;
    let q_star = perceived_payment(alloc_star, instance)?.table;
    let q = perceived_payment(&rounded, instance)?.table;
    let mut gap = 0.0f64;
    let mut excess = f64::NEG_INFINITY;
    for i in 0..instance.num_bidders() {
        let b = instance.bidder(i);
        for v in 0..instance.num_profiles() {
            let d = (q_star[i][v] - q[i][v]).abs();
            let l = instance.type_index(v, i);
            let bound = delta * (2.0 * b.value(l) - b.value(0));
            gap = gap.max(d);
            excess = excess.max(d - bound);
        }
    }
    let model = PerceivedPayment::Quadratic;
    let r_star = payment_rule_clamped(alloc_star, instance, model)?.0.expected_revenue(instance);
    let r = payment_rule_clamped(&rounded, instance, model)?.0.expected_revenue(instance);
    report.perceived_payment_gap = gap;
    report.worst_bound_excess = excess;
    report.revenue_gap = (r_star - r).abs();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn two_bidders_one_type() -> AuctionInstance {
        AuctionInstance::symmetric(
            2,
            TypeSpace::new(vec![1.0]).unwrap(),
            DiscreteDistribution::new(vec![1.0]).unwrap(),
        )
        .unwrap()
    }

    fn one_bidder(values: Vec<f64>) -> AuctionInstance {
        let k = values.len();
        AuctionInstance::symmetric(
            1,
            TypeSpace::new(values).unwrap(),
            DiscreteDistribution::new(vec![1.0 / k as f64; k]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn nearest_point() {
        let inst = one_bidder(vec![1.0]);
        let (r, rep) = round_allocation(&inst, &ExPostAllocation { table: vec![vec![0.37]] }, 0.1).unwrap();
        assert!((r.table[0][0] - 0.4).abs() < 1e-15);
        assert!((rep.residuals[0][0] + 0.03).abs() < 1e-12);
    }

    #[test]
    fn on_grid_is_unchanged() {
        let inst = one_bidder(vec![1.0, 2.0]);
        let a = ExPostAllocation { table: vec![vec![0.3, 0.7]] };
        let (r, rep) = round_allocation(&inst, &a, 0.1).unwrap();
        assert_eq!(r.table[0], vec![0.3, 0.7]);
        assert_eq!(rep.max_abs_residual, 0.0);
        let gap = discretization_gap(&inst, &a, 0.1).unwrap();
        assert!(gap.revenue_gap < 1e-12 && gap.perceived_payment_gap < 1e-12);
    }

    #[test]
    fn feasibility_forces_floor() {
        let inst = two_bidders_one_type();
        let a = ExPostAllocation { table: vec![vec![0.55], vec![0.55]] };
        let (r, _) = round_allocation(&inst, &a, 0.1).unwrap();
        assert_eq!(r.table, vec![vec![0.5], vec![0.5]]);
        let a = ExPostAllocation { table: vec![vec![0.57], vec![0.43]] };
        let (r, _) = round_allocation(&inst, &a, 0.1).unwrap();
        assert!((r.table[0][0] + r.table[1][0] - 1.0).abs() < 1e-12);
        let a = ExPostAllocation { table: vec![vec![0.58], vec![0.38]] };
        let (r, _) = round_allocation(&inst, &a, 0.1).unwrap();
        // both prefer the ceiling; only the larger fraction fits
        assert!((r.table[0][0] - 0.6).abs() < 1e-12 && (r.table[1][0] - 0.4).abs() < 1e-12);
        let a = ExPostAllocation { table: vec![vec![0.56], vec![0.37]] };
        let (r, _) = round_allocation(&inst, &a, 0.1).unwrap();
        assert!(r.table[0][0] + r.table[1][0] <= 1.0 + 1e-12);
    }

    #[test]
    fn monotone_chain_survives() {
        let inst = one_bidder(vec![1.0, 2.0, 3.0]);
        let a = ExPostAllocation { table: vec![vec![0.36, 0.38, 0.41]] };
        let (r, _) = round_allocation(&inst, &a, 0.1).unwrap();
        assert!(r.table[0].windows(2).all(|w| w[0] <= w[1] + 1e-15), "{:?}", r.table);
    }

    #[test]
    fn bad_delta() {
        let inst = one_bidder(vec![1.0]);
        let a = ExPostAllocation { table: vec![vec![0.5]] };
        assert!(round_allocation(&inst, &a, 0.3).is_err());
        assert!(round_allocation(&inst, &a, 0.0).is_err());
    }
}
